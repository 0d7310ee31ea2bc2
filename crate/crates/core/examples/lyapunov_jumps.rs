//! Per-agent Lyapunov values along a run. With nonzero initial positions the
//! delayed positions switch on from their zero pre-history at t = T, which
//! kicks the reference velocity and makes V jump once per link delay.
//!
//! ```bash
//! cargo run --release --example lyapunov_jumps
//! ```

use delay_consensus::{config, sim};
use nalgebra::DVector;

fn report(label: &str, cfg: &sim::ScenarioConfig) {
    let trace = sim::run(cfg).unwrap();
    let m = sim::compute_metrics(&trace, &sim::predicted_velocity(cfg).unwrap());
    println!(
        "{label}: violations {} (largest {:.3e}), away from activation steps {} (largest {:.3e})",
        m.lyapunov_violations, m.lyapunov_max_increase, m.lyapunov_violations_smooth, m.lyapunov_max_increase_smooth
    );
}

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/leaderless6.json");
    let mut cfg = config::load(path.as_ref()).unwrap();
    cfg.duration = 10.0;
    report("q(0) = 0        ", &cfg);

    let q0 = [[0.3, -0.2], [1.0, 0.5], [-0.6, 0.8], [0.2, 1.2], [-0.4, -0.7], [0.9, -0.3]];
    for (a, q) in cfg.agents.iter_mut().zip(q0) {
        a.q0 = DVector::from_column_slice(&q);
    }
    report("generic q(0)    ", &cfg);
    cfg.integrator = sim::Integrator::Euler;
    report("generic q(0), Euler", &cfg);
}
