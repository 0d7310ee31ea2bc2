//! Leader-follower scenario, and the same network with the leader modeled as
//! an extra kinematic agent.
//!
//! ```bash
//! cargo run --release --example leader_tracking
//! ```

use delay_consensus::{config, sim};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/leader6.json");
    let cfg = config::load(path.as_ref()).unwrap();
    let trace = sim::run(&cfg).unwrap();
    let m = sim::compute_metrics(&trace, &sim::predicted_velocity(&cfg).unwrap());
    println!("leader velocity {:?}", m.predicted_velocity);
    println!("max |qdot_i - qdot_L| at the end: {:.3e}", m.velocity_consensus_error);
    println!("max |q_i - q_L(t)| at the end:    {:.3e}", m.leader_tracking_error.unwrap());
    for t in [0.0, 10.0, 20.0, 30.0, 45.0, 60.0] {
        let k = (t / cfg.dt).round() as usize;
        println!("t = {t:>4}  leader error {:.3e}", trace.derived.leader_error[k]);
    }

    let augmented = cfg.leader_as_agent().unwrap();
    let other = sim::run(&augmented).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in trace.agents.iter().zip(&other.agents[1..]) {
        for (x, y) in a.q.iter().zip(&b.q) {
            worst = worst.max((x - y).abs());
        }
    }
    println!("leader as vertex 0: max position difference {worst:.1e}");
}
