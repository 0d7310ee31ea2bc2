mod common;

use delay_consensus::delayline::{delay_steps, DelayLine};
use nalgebra::DVector;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_shifted_sequence(d in 0usize..=200, xs in prop::collection::vec(-1e6f64..1e6, 1..1000), width in 1usize..4) {
        let mut line = DelayLine::with_steps(d, width);
        let history: Vec<DVector<f64>> = xs.iter().map(|&x| DVector::from_fn(width, |i, _| x + i as f64)).collect();
        for (k, x) in history.iter().enumerate() {
            let out = line.push_and_read(x);
            let expected = if k >= d { history[k - d].clone() } else { DVector::zeros(width) };
            prop_assert_eq!(out, expected, "step {}", k);
            prop_assert!(line.capacity() <= d + 1);
        }
    }

    #[test]
    fn lagged_matches_history(d in 1usize..=50, xs in prop::collection::vec(-10f64..10.0, 1..200), lag_frac in 0.0f64..1.0) {
        let lag = ((d as f64) * lag_frac) as usize;
        let mut line = DelayLine::with_steps(d, 1);
        for (k, &x) in xs.iter().enumerate() {
            line.push_and_read(&DVector::from_element(1, x));
            let expected = if k >= lag { xs[k - lag] } else { 0.0 };
            prop_assert_eq!(line.lagged(lag)[0], expected);
        }
    }

    #[test]
    fn commensurate_delays_round_trip(steps in 0usize..100_000, dt_ms in 1u32..50) {
        let dt = f64::from(dt_ms) * 1e-3;
        prop_assert_eq!(delay_steps(steps as f64 * dt, dt).unwrap(), steps);
    }
}

#[test]
fn half_step_offsets_are_rejected() {
    for k in [1.5, 10.5, 99.5] {
        assert!(delay_steps(k * 0.005, 0.005).is_err(), "{k}");
    }
}
