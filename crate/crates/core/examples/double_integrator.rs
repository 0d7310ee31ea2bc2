//! Reduced protocol on unit-mass double integrators, with the same graph and
//! delays as the arm scenarios.
//!
//! ```bash
//! cargo run --release --example double_integrator
//! ```

use delay_consensus::{config, sim};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/di6.json");
    let cfg = config::load(path.as_ref()).unwrap();
    let vbar = sim::predicted_velocity(&cfg).unwrap();
    let trace = sim::run(&cfg).unwrap();
    let m = sim::compute_metrics(&trace, &vbar);
    println!("predicted {:?}\nsimulated {:?}\ngap {:.2e}, position spread {:.2e}", m.predicted_velocity, m.simulated_velocity, m.velocity_gap, m.position_consensus_error);

    // a larger k only changes the transient
    for k in [0.5, 1.0, 4.0] {
        let mut c = cfg.clone();
        c.control = sim::ControlMode::DoubleIntegrator(sim::DoubleIntegratorGains { k });
        c.duration = 20.0;
        let m = sim::compute_metrics(&sim::run(&c).unwrap(), &vbar);
        println!("k = {k}: velocity error after 20 s {:.2e}", m.velocity_consensus_error);
    }
}
