//! The three fixed-step schemes on the leader scenario: explicit Euler, RK4
//! with delayed reads held over the step, and RK4 with interpolated reads.
//!
//! ```bash
//! cargo run --release --example integrators
//! ```

use delay_consensus::sim::{self, Integrator};
use delay_consensus::config;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/leader6.json");
    let base = config::load(path.as_ref()).unwrap();
    for integrator in [Integrator::Euler, Integrator::Rk4Hold, Integrator::Rk4] {
        for dt in [0.005, 0.0025] {
            let cfg = sim::ScenarioConfig { integrator, dt, ..base.clone() };
            let start = std::time::Instant::now();
            let trace = sim::run(&cfg).unwrap();
            let m = sim::compute_metrics(&trace, &sim::predicted_velocity(&cfg).unwrap());
            println!(
                "{integrator:?} dt={dt}: leader error {:.2e}, largest smooth V increase {:.1e}, {:.2?}",
                m.leader_tracking_error.unwrap(),
                m.lyapunov_max_increase_smooth,
                start.elapsed()
            );
        }
    }
}
