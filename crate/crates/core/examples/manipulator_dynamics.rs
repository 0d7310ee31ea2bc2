//! Two-link arm model: inertia, Coriolis, gravity, the linear regressor and
//! forward dynamics.
//!
//! ```bash
//! cargo run --example manipulator_dynamics
//! ```

use delay_consensus::dynamics::{AgentModel, ManipulatorParams};
use nalgebra::DVector;

fn main() {
    let arm = AgentModel::TwoLinkManipulator(ManipulatorParams::with_gravity([3.6, 0.9, 1.2, 9.8, 4.9]).unwrap());
    let q = DVector::from_column_slice(&[0.3, 1.1]);
    let qdot = DVector::from_column_slice(&[0.5, -0.7]);

    let m = arm.inertia(&q);
    let c = arm.coriolis(&q, &qdot);
    println!("M(q) =\n{m}C(q, qdot) =\n{c}g(q) = {:.6?}", arm.gravity(&q).as_slice());

    // the regressor reproduces M zeta_dot + C zeta + g for any zeta
    let zeta = DVector::from_column_slice(&[1.0, 2.0]);
    let zeta_dot = DVector::from_column_slice(&[-0.5, 0.25]);
    let y = arm.regressor(&q, &qdot, &zeta, &zeta_dot);
    let direct = &m * &zeta_dot + &c * &zeta + arm.gravity(&q);
    println!("Y a - (M zeta_dot + C zeta + g) = {:e}", (y * arm.true_params() - direct).norm());

    // skew symmetry of Mdot - 2C, with Mdot by central differences
    let h = 1e-6;
    let mdot = (arm.inertia(&(&q + &qdot * h)) - arm.inertia(&(&q - &qdot * h))) / (2.0 * h);
    let n = mdot - c * 2.0;
    println!("|N + N^T| = {:e}", (&n + n.transpose()).norm());

    let tau = DVector::from_column_slice(&[2.0, 0.0]);
    println!("qddot under tau = {:?}: {:.6?}", tau.as_slice(), arm.forward_dynamics(&q, &qdot, &tau).unwrap().as_slice());

    for a in [[1.0, 0.9, 1.2], [3.6, 2.5, 1.2]] {
        println!("params {a:?}: {}", ManipulatorParams::new(a).unwrap_err());
    }
}
