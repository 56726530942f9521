use proptest::prelude::*;

use pss_core::io::{fmt_f64, read_ensemble_dir, read_events_csv, write_ensemble_dir, write_events_csv};
use pss_core::simulate::{run_ensemble, uniform_grid, RunOptions};
use pss_core::{JumpEvent, ModelSpec};

proptest! {
    #[test]
    fn floats_round_trip_bit_exactly(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        let back: f64 = fmt_f64(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }

    #[test]
    fn event_logs_round_trip(
        rows in prop::collection::vec((0.0f64..1e6, 0usize..4, prop::collection::vec(0u64..1000, 4)), 0..50),
    ) {
        let events: Vec<JumpEvent> = rows
            .into_iter()
            .map(|(time, reaction, counts_after)| JumpEvent { time, reaction, counts_after })
            .collect();
        let mut buf = Vec::new();
        write_events_csv(&mut buf, 4, &events).unwrap();
        prop_assert_eq!(read_events_csv(&buf[..], 4).unwrap(), events);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn ensembles_round_trip(seed in any::<u64>(), total in 3u64..200, replicas in 1usize..5) {
        let spec = ModelSpec::symmetric(3, 1.5, total).unwrap();
        let grid = uniform_grid(0.7, 8);
        let e = run_ensemble(&spec, replicas, 0.7, &grid, seed, &RunOptions::default().retaining_events()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_ensemble_dir(dir.path(), &e, true).unwrap();
        prop_assert_eq!(read_ensemble_dir(dir.path()).unwrap(), e);
    }
}
