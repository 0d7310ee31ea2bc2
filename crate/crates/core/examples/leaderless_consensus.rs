//! Runs the shipped six-arm leaderless scenario and compares the endpoint
//! velocities with the closed-form prediction.
//!
//! ```bash
//! cargo run --release --example leaderless_consensus
//! ```

use delay_consensus::{config, sim};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/leaderless6.json");
    let cfg = config::load(path.as_ref()).expect("shipped scenario is valid");
    let vbar = sim::predicted_velocity(&cfg).unwrap();

    let start = std::time::Instant::now();
    let trace = sim::run(&cfg).expect("run completes");
    let m = sim::compute_metrics(&trace, &vbar);
    println!("{} steps in {:.2?}", m.steps, start.elapsed());

    for t in [0.0, 5.0, 10.0, 20.0, 40.0, 60.0] {
        let k = (t / cfg.dt).round() as usize;
        println!(
            "t = {t:>4}  max |q_i - q_j| = {:.3e}  max |qdot_i - vbar| = {:.3e}  max |v_i - vbar| = {:.3e}",
            trace.derived.position_error[k], trace.derived.velocity_error[k], trace.derived.observer_error[k]
        );
    }
    println!("predicted {:?}", m.predicted_velocity);
    println!("simulated {:?}  (gap {:.2e})", m.simulated_velocity, m.velocity_gap);
    println!("lyapunov violations: {}", m.lyapunov_violations);
}
