//! One evaluation of the observer and adaptive controller for a single arm
//! with two delayed neighbors.
//!
//! ```bash
//! cargo run --example protocol_step
//! ```

use delay_consensus::dynamics::{AgentModel, ManipulatorParams};
use delay_consensus::protocol::{self, ControllerState, DelayedNeighbor};
use nalgebra::DVector;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn main() {
    let arm = AgentModel::TwoLinkManipulator(ManipulatorParams::new([3.6, 0.9, 1.2]).unwrap());
    let ctrl = ControllerState::isotropic(2, 3, 40.0, 2.0).unwrap();
    let (q, qdot, vi) = (v(&[0.2, -0.1]), v(&[0.6, -0.5]), v(&[0.55, -0.45]));

    // what arrived over the two links, 0.5 s old
    let (q1, qd1, v1) = (v(&[0.0, 0.1]), v(&[-0.4, 0.6]), v(&[-0.2, 0.4]));
    let (q2, qd2, v2) = (v(&[0.4, 0.0]), v(&[1.0, -0.8]), v(&[0.7, -0.6]));
    let nb = [
        DelayedNeighbor { w: 1.0, b: 1.5, delay: 0.5, q: &q1, qdot: &qd1, v: &v1 },
        DelayedNeighbor { w: 1.0, b: 1.5, delay: 0.5, q: &q2, qdot: &qd2, v: &v2 },
    ];

    let v_dot = protocol::observer_rhs(&vi, &nb, None);
    let qr = protocol::reference_velocity(&vi, &q, &nb, None);
    let qrr = protocol::reference_acceleration(&v_dot, &qdot, &nb, None);
    let s = protocol::sliding_vector(&qdot, &qr);
    let tau = protocol::control_torque(&arm, &q, &qdot, &qr, &qrr, &ctrl.a_hat, ctrl.k(), &s);
    let a_dot = protocol::adaptation_rhs(&arm, &q, &qdot, &qr, &qrr, ctrl.gamma(), &s);

    println!("delay factor      {}", protocol::delay_factor(&nb, None));
    println!("observer rate     {:.6?}", v_dot.as_slice());
    println!("reference vel     {:.6?}", qr.as_slice());
    println!("sliding vector    {:.6?}", s.as_slice());
    println!("torque            {:.6?}", tau.as_slice());
    println!("estimate rate     {:.6?}", a_dot.as_slice());
    println!("V                 {:.6}", protocol::lyapunov_value(&arm, &q, &s, &ctrl.a_hat, &arm.true_params(), ctrl.gamma_inv()));
}
