//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so every line is printed even when an earlier one fails.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;

use pss_core::config::Config;
use pss_core::fluctuation::{
    diffusion_matrix, drift_matrix, min_eigenvalue, propagate_covariance, simulate_limit_ensemble,
};
use pss_core::io::{
    write_covariance_csv, write_ensemble_dir, write_gaussian_paths_csv, write_json, write_meanfield_csv,
};
use pss_core::meanfield::{integrate, vector_field};
use pss_core::simulate::{next_event, run_ensemble, uniform_grid, RunOptions};
use pss_core::validate::stats::restrict_to_zero_sum;
use pss_core::validate::{
    clt_test, gillespie_equivalence_test, lln_test, martingale_test, run_suite, sde_consistency_test, CltConfig,
    GillespieConfig, LlnConfig, MartingaleConfig, SdeConfig,
};
use pss_core::{rng_stream, CovarianceState, FluctuationModel, InitialCondition, ModelSpec, SimState, Step};

// Pinned tolerances and budgets.
const C1_EVENTS: u64 = 1_000_000;
const C1_BUDGET: Duration = Duration::from_secs(5);
const C2_ALPHA: f64 = 0.01;
const C3_MAX_FINAL_MEDIAN: f64 = 0.05;
const C3_RATIO_BAND: (f64, f64) = (1.6, 2.5);
const C3_BUDGET: Duration = Duration::from_secs(120);
const C4_SUM_TOL: f64 = 1e-10;
const C4_PRODUCT_TOL: f64 = 1e-7;
const C5_MAX_REL_ERR: f64 = 0.15;
const C5_BUDGET: Duration = Duration::from_secs(300);
const C6_MAX_Z: f64 = 3.0;
const C7_NULL_TOL: f64 = 1e-14;
const C7_EIG_TOL: f64 = 1e-12;
const C7_JACOBIAN_TOL: f64 = 1e-6;
const C7_INTERIOR: f64 = 1e-3;
const C8_MAX_REL_ERR: f64 = 0.10;

const STEP: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Result<Outcome, Box<dyn std::error::Error>>;

fn main() {
    let checks: [(&str, Check); 9] = [
        ("conservation over 1e6 events", c1_conservation),
        ("exactness vs Gillespie", c2_gillespie),
        ("law of large numbers", c3_lln),
        ("mean-field invariants", c4_invariants),
        ("CLT covariance", c5_clt),
        ("martingale structure", c6_martingale),
        ("drift/diffusion structure", c7_matrices),
        ("limit SDE vs moment ODE", c8_sde),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name} ({secs:.1}s) {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn c1_conservation() -> Result<Outcome, Box<dyn std::error::Error>> {
    let spec = ModelSpec::symmetric(3, 1.0, 1000)?;
    let start = Instant::now();
    let mut events = 0u64;
    let mut violations = 0u64;
    let mut replica = 0u64;
    while events < C1_EVENTS {
        let mut rng = rng_stream(1, replica);
        let mut state = SimState::new(&spec, &mut rng);
        while events < C1_EVENTS {
            match next_event(&mut state, &spec, &mut rng)? {
                Step::Jump(_) => {
                    events += 1;
                    if state.counts.iter().sum::<u64>() != spec.total {
                        violations += 1;
                    }
                }
                Step::Absorbed => break,
            }
        }
        replica += 1;
    }
    let elapsed = start.elapsed();
    Ok(outcome(
        violations == 0 && elapsed < C1_BUDGET,
        format!(
            "events={events} replicas={replica} violations={violations} sim_time={:.2}s",
            elapsed.as_secs_f64()
        ),
    ))
}

fn c2_gillespie() -> Result<Outcome, Box<dyn std::error::Error>> {
    let spec = ModelSpec::new(3.0, &[1, 1, 1])?;
    let r = gillespie_equivalence_test(&spec, 10_000, 2, &GillespieConfig { alpha: C2_ALPHA })?;
    Ok(outcome(
        r.ks_p_value > C2_ALPHA && r.chi_square_p_value > C2_ALPHA && r.pass,
        format!(
            "ks_p={:.3} chi2_p={:.3} mean_wait={:.4}",
            r.ks_p_value, r.chi_square_p_value, r.mean_time
        ),
    ))
}

fn c3_lln() -> Result<Outcome, Box<dyn std::error::Error>> {
    let start = Instant::now();
    let u0 = [0.5, 0.3, 0.2];
    let t = 2.0;
    let grid = uniform_grid(t, 201);
    let path = integrate(&u0, 1.0, t, STEP, &grid)?;
    let mut ensembles = Vec::new();
    for (k, m) in [100u64, 400, 1600, 6400].into_iter().enumerate() {
        let spec = ModelSpec::from_fractions(1.0, m, &u0)?;
        ensembles.push(run_ensemble(
            &spec,
            200,
            t,
            &grid,
            30 + k as u64,
            &RunOptions::default().grid_only(),
        )?);
    }
    let cfg = LlnConfig {
        max_final_median: C3_MAX_FINAL_MEDIAN,
        ratio_band: Some(C3_RATIO_BAND),
    };
    let r = lln_test(&ensembles, &path, t, &cfg)?;
    let medians: Vec<String> = r.records.iter().map(|x| format!("{:.4}", x.median)).collect();
    let ratios: Vec<String> = r.ratios.iter().map(|x| format!("{x:.2}")).collect();
    let elapsed = start.elapsed();
    Ok(outcome(
        r.pass && elapsed < C3_BUDGET,
        format!("medians=[{}] ratios=[{}]", medians.join(","), ratios.join(",")),
    ))
}

fn c4_invariants() -> Result<Outcome, Box<dyn std::error::Error>> {
    let t = 10.0;
    // every step is a grid point, so "throughout" means at every RK4 step
    let grid = uniform_grid(t, 10_001);
    let mut worst_sum = 0.0f64;
    let mut worst_product = 0.0f64;
    for u0 in [[0.5, 0.3, 0.2], [0.8, 0.15, 0.05], [1.0 / 3.0; 3]] {
        let path = integrate(&u0, 1.0, t, STEP, &grid)?;
        let p0: f64 = u0.iter().product();
        for s in &path.states {
            worst_sum = worst_sum.max((s.u.iter().sum::<f64>() - 1.0).abs());
            worst_product = worst_product.max((s.u.iter().product::<f64>() - p0).abs());
        }
    }
    Ok(outcome(
        worst_sum < C4_SUM_TOL && worst_product < C4_PRODUCT_TOL,
        format!("max|sum-1|={worst_sum:.2e} max|prod-prod0|={worst_product:.2e}"),
    ))
}

fn c5_clt() -> Result<Outcome, Box<dyn std::error::Error>> {
    let start = Instant::now();
    let t = 1.0;
    let grid = uniform_grid(t, 101);
    let spec = ModelSpec::symmetric(3, 1.0, 10_000)?;
    let u0 = spec.initial_fractions();
    let path = integrate(&u0, 1.0, t, STEP, &grid)?;
    let model = FluctuationModel::new(path.clone(), 1.0);
    let sigma = last(propagate_covariance(&model, &DMatrix::zeros(3, 3), STEP)?)?;
    let ensemble = run_ensemble(&spec, 2000, t, &grid, 50, &RunOptions::default().grid_only())?;
    let cfg = CltConfig {
        min_replicas: 100,
        max_relative_error: C5_MAX_REL_ERR,
    };
    let r = clt_test(&ensemble, &path, &sigma, &cfg)?;
    let err = r.relative_error.unwrap_or(f64::NAN);
    let elapsed = start.elapsed();
    Ok(outcome(
        r.pass && err < C5_MAX_REL_ERR && elapsed < C5_BUDGET,
        format!("rel_err={err:.4}"),
    ))
}

fn c6_martingale() -> Result<Outcome, Box<dyn std::error::Error>> {
    let spec = ModelSpec::symmetric(3, 1.0, 100)?;
    let t = 1.0;
    let e = run_ensemble(&spec, 5000, t, &[0.0, t], 60, &RunOptions::default().retaining_events())?;
    let r = martingale_test(&e, t, &MartingaleConfig { max_z: C6_MAX_Z })?;
    let worst = r
        .reactions
        .iter()
        .flat_map(|x| [x.centered.z.abs(), x.quadratic_variation.z.abs()])
        .chain(r.cross.iter().map(|x| x.product.z.abs()))
        .fold(0.0, f64::max);
    Ok(outcome(r.pass && worst < C6_MAX_Z, format!("max|z|={worst:.2}")))
}

fn random_simplex_point<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn fd_jacobian(u: &[f64], lambda: f64) -> DMatrix<f64> {
    let n = u.len();
    let h = 1e-6;
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut up = u.to_vec();
        let mut dn = u.to_vec();
        up[k] += h;
        dn[k] -= h;
        let (fp, fm) = (vector_field(&up, lambda), vector_field(&dn, lambda));
        for i in 0..n {
            j[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    j
}

fn c7_matrices() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut failures = Vec::new();
    let mut worst_null = 0.0f64;
    let mut worst_fd = 0.0f64;
    let mut pd_checked = 0;
    for n in [3usize, 5, 8] {
        let mut rng = rng_stream(70, n as u64);
        for _ in 0..1000 {
            let lambda = 0.5 + rng.random::<f64>();
            let u = random_simplex_point(n, &mut rng);
            let c = diffusion_matrix(&u, lambda);
            let b = drift_matrix(&u, lambda);
            if c != c.transpose() {
                failures.push(format!("n={n}: c not symmetric"));
            }
            for j in 0..n {
                for k in 0..n {
                    let d = j.abs_diff(k);
                    if (2..=n - 2).contains(&d) && c[(j, k)] != 0.0 {
                        failures.push(format!("n={n}: c[{j},{k}] outside band"));
                    }
                }
            }
            let null = (&c * DMatrix::from_element(n, 1, 1.0)).amax();
            worst_null = worst_null.max(null);
            if min_eigenvalue(&c) < -C7_EIG_TOL {
                failures.push(format!("n={n}: c has a negative eigenvalue"));
            }
            if u.iter().copied().fold(f64::INFINITY, f64::min) > C7_INTERIOR {
                pd_checked += 1;
                let leading = c.view((0, 0), (n - 1, n - 1)).into_owned();
                if min_eigenvalue(&leading) <= 0.0 || min_eigenvalue(&restrict_to_zero_sum(&c)) <= 0.0 {
                    failures.push(format!("n={n}: restricted block not positive definite"));
                }
            }
            worst_fd = worst_fd.max((b - fd_jacobian(&u, lambda)).amax());
        }
    }
    if worst_null >= C7_NULL_TOL {
        failures.push("c * 1 != 0".into());
    }
    if worst_fd >= C7_JACOBIAN_TOL {
        failures.push("b differs from finite differences".into());
    }
    failures.truncate(3);
    Ok(outcome(
        failures.is_empty(),
        format!(
            "max|c1|={worst_null:.1e} max|b-fd|={worst_fd:.1e} pd_checked={pd_checked} {}",
            failures.join("; ")
        ),
    ))
}

fn c8_sde() -> Result<Outcome, Box<dyn std::error::Error>> {
    let t = 1.0;
    let u0 = [1.0 / 3.0; 3];
    let path = integrate(&u0, 1.0, t, STEP, &uniform_grid(t, 101))?;
    let model = FluctuationModel::new(path, 1.0);
    let sigma = last(propagate_covariance(&model, &DMatrix::zeros(3, 3), STEP)?)?;
    let cfg = SdeConfig {
        paths: 5000,
        step: STEP,
        max_relative_error: C8_MAX_REL_ERR,
    };
    let r = sde_consistency_test(&model, &sigma, 80, &cfg, None)?;
    Ok(outcome(
        r.pass && r.relative_error < C8_MAX_REL_ERR,
        format!("rel_err={:.4} max|sum V|={:.1e}", r.relative_error, r.max_abs_total),
    ))
}

/// Writes every output kind into `dir` using `threads` workers.
fn write_all(dir: &Path, threads: usize) -> Result<(), Box<dyn std::error::Error>> {
    let spec = ModelSpec::from_fractions(1.0, 300, &[0.5, 0.3, 0.2])?;
    let grid = uniform_grid(1.0, 21);
    let e = run_ensemble(
        &spec,
        16,
        1.0,
        &grid,
        9,
        &RunOptions::default().retaining_events().with_threads(threads),
    )?;
    write_ensemble_dir(&dir.join("ensemble"), &e, true)?;

    let path = integrate(&spec.initial_fractions(), 1.0, 1.0, STEP, &grid)?;
    write_meanfield_csv(std::fs::File::create(dir.join("meanfield.csv"))?, &path)?;
    let model = FluctuationModel::new(path.clone(), 1.0);
    let cov = propagate_covariance(&model, &DMatrix::zeros(3, 3), STEP)?;
    write_covariance_csv(std::fs::File::create(dir.join("covariance.csv"))?, &cov)?;
    let paths = simulate_limit_ensemble(&model, &InitialCondition::zero(3), STEP, &grid, 16, 9, Some(threads))?;
    write_gaussian_paths_csv(std::fs::File::create(dir.join("paths.csv"))?, &paths)?;

    let mut config = Config::from_toml(
        r#"
        [model]
        fractions = [0.5, 0.3, 0.2]
        [run]
        base_seed = 9
        [validate]
        lln_sizes = [50, 100]
        lln_replicas = 20
        clt_total = 200
        clt_replicas = 100
        martingale_total = 50
        martingale_replicas = 100
        gillespie_samples = 500
        sde_paths = 200
        "#,
    )?;
    config.run.threads = Some(threads);
    write_json(&dir.join("report.json"), &run_suite(&config)?)?;
    Ok(())
}

fn dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, Box<dyn std::error::Error>> {
    let mut out = Vec::new();
    for entry in walk(dir)? {
        let rel = entry.strip_prefix(dir)?.to_string_lossy().into_owned();
        out.push((rel, std::fs::read(&entry)?));
    }
    out.sort();
    Ok(out)
}

fn walk(dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            files.extend(walk(&p)?);
        } else {
            files.push(p);
        }
    }
    Ok(files)
}

fn c9_determinism() -> Result<Outcome, Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let runs = [("a", 1), ("b", 1), ("c", 4)];
    let mut outputs = Vec::new();
    for (name, threads) in runs {
        let dir = root.path().join(name);
        write_all(&dir, threads)?;
        outputs.push(dir_bytes(&dir)?);
    }
    let files = outputs[0].len();
    let same_run = outputs[0] == outputs[1];
    let same_threads = outputs[0] == outputs[2];
    Ok(outcome(
        same_run && same_threads && files > 5,
        format!("files={files} repeat_identical={same_run} threads_1_vs_4_identical={same_threads}"),
    ))
}

fn last(mut v: Vec<CovarianceState>) -> Result<CovarianceState, Box<dyn std::error::Error>> {
    v.pop().ok_or_else(|| "empty covariance output".into())
}
