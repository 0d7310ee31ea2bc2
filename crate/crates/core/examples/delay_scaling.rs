//! The consensus velocity shrinks with the delays exactly as the closed form
//! predicts. Scales every delay of the leaderless scenario and compares.
//!
//! ```bash
//! cargo run --release --example delay_scaling
//! ```

use delay_consensus::{config, sim};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/leaderless6.json");
    let base = config::load(path.as_ref()).unwrap();
    println!("{:>6}  {:>22}  {:>22}  {:>9}", "scale", "predicted", "simulated", "gap");
    for scale in [0.0, 0.5, 1.0, 2.0, 3.0] {
        let cfg = base.with_scaled_delays(scale).unwrap();
        let vbar = sim::predicted_velocity(&cfg).unwrap();
        let m = sim::compute_metrics(&sim::run(&cfg).unwrap(), &vbar);
        let fmt = |v: &[f64]| format!("[{:.5}, {:.5}]", v[0], v[1]);
        println!("{scale:>6}  {:>22}  {:>22}  {:>9.2e}", fmt(&m.predicted_velocity), fmt(&m.simulated_velocity), m.velocity_gap);
    }
}
