//! Agent models: the gravity-free (or gravity-enabled) two-link planar arm
//! and the unit-mass double integrator.
//!
//! The two-link arm is parametrized linearly by
//! `a = [a1, a2, a3]` (optionally `[a1, a2, a3, a4, a5]` with gravity):
//!
//! ```text
//! M(q) = [[a1 + 2 a2 cos q2, a3 + a2 cos q2],
//!         [a3 + a2 cos q2,   a3           ]]
//! C(q, q̇) = a2 sin q2 [[-q̇2, -(q̇1 + q̇2)],
//!                      [ q̇1,  0         ]]
//! g(q) = [a4 cos q1 + a5 cos(q1 + q2), a5 cos(q1 + q2)]
//! ```
//!
//! With this choice of `C`, `Ṁ - 2C` is skew-symmetric.

use nalgebra::{DMatrix, DVector};

use crate::error::DynamicsError;

const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulatorParams {
    a: Vec<f64>,
    gravity_on: bool,
}

impl ManipulatorParams {
    /// Gravity-free arm with `a = [a1, a2, a3]`.
    pub fn new(a: [f64; 3]) -> Result<Self, DynamicsError> {
        Self::from_vec(a.to_vec(), false)
    }

    /// Arm with gravity, `a = [a1, a2, a3, a4, a5]`.
    pub fn with_gravity(a: [f64; 5]) -> Result<Self, DynamicsError> {
        Self::from_vec(a.to_vec(), true)
    }

    /// Checks that `M(q)` is uniformly positive definite:
    /// `a1 > a3 > 0` and `a1 a3 - a3² - a2² > 0`.
    pub fn from_vec(a: Vec<f64>, gravity_on: bool) -> Result<Self, DynamicsError> {
        let expected = if gravity_on { 5 } else { 3 };
        if a.len() != expected {
            return Err(DynamicsError::InvalidParams { a, reason: "wrong parameter count" });
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(DynamicsError::InvalidParams { a, reason: "parameters must be finite" });
        }
        let (a1, a2, a3) = (a[0], a[1], a[2]);
        if !(a1 > a3 && a3 > 0.0) {
            return Err(DynamicsError::InvalidParams { a, reason: "need a1 > a3 > 0" });
        }
        if !(a1 * a3 - a3 * a3 - a2 * a2 > 0.0) {
            return Err(DynamicsError::InvalidParams { a, reason: "need a1*a3 - a3^2 - a2^2 > 0" });
        }
        Ok(Self { a, gravity_on })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn gravity_on(&self) -> bool {
        self.gravity_on
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentModel {
    TwoLinkManipulator(ManipulatorParams),
    DoubleIntegrator { dof: usize },
}

impl AgentModel {
    pub fn double_integrator(dof: usize) -> Result<Self, DynamicsError> {
        if dof == 0 {
            return Err(DynamicsError::ZeroDof);
        }
        Ok(Self::DoubleIntegrator { dof })
    }

    pub fn dof(&self) -> usize {
        match self {
            Self::TwoLinkManipulator(_) => 2,
            Self::DoubleIntegrator { dof } => *dof,
        }
    }

    /// Length of the parameter vector the regressor multiplies.
    pub fn param_count(&self) -> usize {
        match self {
            Self::TwoLinkManipulator(p) => p.a.len(),
            Self::DoubleIntegrator { dof } => *dof,
        }
    }

    /// The true parameter vector of the model.
    pub fn true_params(&self) -> DVector<f64> {
        match self {
            Self::TwoLinkManipulator(p) => p.as_vector(),
            Self::DoubleIntegrator { dof } => DVector::from_element(*dof, 1.0),
        }
    }

    pub fn inertia(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Self::TwoLinkManipulator(p) => {
                let (a1, a2, a3) = (p.a[0], p.a[1], p.a[2]);
                let c2 = q[1].cos();
                let off = a3 + a2 * c2;
                DMatrix::from_row_slice(2, 2, &[a1 + 2.0 * a2 * c2, off, off, a3])
            }
            Self::DoubleIntegrator { dof } => DMatrix::identity(*dof, *dof),
        }
    }

    pub fn coriolis(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Self::TwoLinkManipulator(p) => {
                let h = p.a[1] * q[1].sin();
                DMatrix::from_row_slice(2, 2, &[-h * qdot[1], -h * (qdot[0] + qdot[1]), h * qdot[0], 0.0])
            }
            Self::DoubleIntegrator { dof } => DMatrix::zeros(*dof, *dof),
        }
    }

    pub fn gravity(&self, q: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::TwoLinkManipulator(p) if p.gravity_on => {
                let c1 = q[0].cos();
                let c12 = (q[0] + q[1]).cos();
                DVector::from_vec(vec![p.a[3] * c1 + p.a[4] * c12, p.a[4] * c12])
            }
            _ => DVector::zeros(self.dof()),
        }
    }

    /// `Y(q, q̇, ζ, ζ̇)` with `Y·a = M(q) ζ̇ + C(q, q̇) ζ + g(q)`.
    pub fn regressor(&self, q: &DVector<f64>, qdot: &DVector<f64>, zeta: &DVector<f64>, zeta_dot: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Self::TwoLinkManipulator(p) => {
                let (c2, s2) = (q[1].cos(), q[1].sin());
                let mut y = DMatrix::zeros(2, p.a.len());
                y[(0, 0)] = zeta_dot[0];
                y[(0, 1)] = 2.0 * c2 * zeta_dot[0] + c2 * zeta_dot[1] - s2 * qdot[1] * zeta[0] - s2 * (qdot[0] + qdot[1]) * zeta[1];
                y[(0, 2)] = zeta_dot[1];
                y[(1, 1)] = c2 * zeta_dot[0] + s2 * qdot[0] * zeta[0];
                y[(1, 2)] = zeta_dot[0] + zeta_dot[1];
                if p.gravity_on {
                    let c12 = (q[0] + q[1]).cos();
                    y[(0, 3)] = q[0].cos();
                    y[(0, 4)] = c12;
                    y[(1, 4)] = c12;
                }
                y
            }
            Self::DoubleIntegrator { .. } => DMatrix::from_diagonal(zeta_dot),
        }
    }

    /// `q̈ = M(q)⁻¹ (τ - C(q, q̇) q̇ - g(q))`.
    pub fn forward_dynamics(&self, q: &DVector<f64>, qdot: &DVector<f64>, tau: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        let rhs = tau - self.coriolis(q, qdot) * qdot - self.gravity(q);
        match self {
            Self::DoubleIntegrator { .. } => Ok(rhs),
            Self::TwoLinkManipulator(_) => {
                let m = self.inertia(q);
                let eig = m.clone().symmetric_eigenvalues();
                let (lo, hi) = (eig.min(), eig.max());
                let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
                if !(cond <= MAX_CONDITION) {
                    return Err(DynamicsError::IllConditioned(cond));
                }
                m.cholesky().map(|c| c.solve(&rhs)).ok_or(DynamicsError::IllConditioned(cond))
            }
        }
    }

    /// Kinetic energy `½ q̇ᵀ M(q) q̇`.
    pub fn kinetic_energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
        0.5 * qdot.dot(&(self.inertia(q) * qdot))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn arm() -> AgentModel {
        AgentModel::TwoLinkManipulator(ManipulatorParams::new([2.0, 0.5, 1.0]).unwrap())
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn inertia_examples() {
        let di = AgentModel::double_integrator(3).unwrap();
        assert_eq!(di.inertia(&v(&[1.0, 2.0, 3.0])), DMatrix::identity(3, 3));

        let m = arm().inertia(&v(&[0.3, PI / 2.0]));
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        assert!((m - expected).abs().max() < 1e-15);

        let a = arm().inertia(&v(&[0.0, 0.0]));
        let b = arm().inertia(&v(&[0.0, 2.0 * PI]));
        assert!((a - b).abs().max() < 1e-15);
    }

    #[test]
    fn coriolis_vanishes() {
        let model = arm();
        assert_eq!(model.coriolis(&v(&[0.4, 1.1]), &v(&[0.0, 0.0])), DMatrix::zeros(2, 2));
        assert_eq!(model.coriolis(&v(&[0.4, 0.0]), &v(&[1.0, -2.0])), DMatrix::zeros(2, 2));
    }

    #[test]
    fn gravity_off_is_zero() {
        assert_eq!(arm().gravity(&v(&[PI, PI])), DVector::zeros(2));
        assert_eq!(arm().gravity(&v(&[0.1, 0.2])), DVector::zeros(2));
        assert_eq!(AgentModel::double_integrator(2).unwrap().gravity(&v(&[1.0, 1.0])), DVector::zeros(2));
    }

    #[test]
    fn gravity_regressor_consistent() {
        let model = AgentModel::TwoLinkManipulator(ManipulatorParams::with_gravity([2.0, 0.5, 1.0, 9.0, 3.0]).unwrap());
        let (q, qd, z, zd) = (v(&[0.3, -0.8]), v(&[1.0, 0.5]), v(&[-0.2, 0.7]), v(&[0.4, 0.1]));
        let lhs = model.regressor(&q, &qd, &z, &zd) * model.true_params();
        let rhs = model.inertia(&q) * &zd + model.coriolis(&q, &qd) * &z + model.gravity(&q);
        assert!((lhs - rhs).abs().max() < 1e-12);
    }

    #[test]
    fn regressor_zero_reference() {
        let y = arm().regressor(&v(&[0.5, 1.0]), &v(&[1.0, 1.0]), &v(&[0.0, 0.0]), &v(&[0.0, 0.0]));
        assert_eq!(y, DMatrix::zeros(2, 3));
        let di = AgentModel::double_integrator(2).unwrap();
        let y = di.regressor(&v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &v(&[5.0, 5.0]), &v(&[1.0, -3.0]));
        assert_eq!(y * di.true_params(), v(&[1.0, -3.0]));
    }

    #[test]
    fn forward_dynamics_examples() {
        let model = arm();
        let (q, qd) = (v(&[0.2, 0.9]), v(&[0.7, -1.3]));
        let tau = model.coriolis(&q, &qd) * &qd + model.gravity(&q);
        assert!(model.forward_dynamics(&q, &qd, &tau).unwrap().abs().max() < 1e-14);

        let di = AgentModel::double_integrator(2).unwrap();
        assert_eq!(di.forward_dynamics(&q, &qd, &v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));

        // M = [[3, 1.5], [1.5, 1]], det = 0.75, M^-1 [1, 0] = [1/0.75, -1.5/0.75]
        let qdd = model.forward_dynamics(&v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((qdd[0] - 4.0 / 3.0).abs() < 1e-14);
        assert!((qdd[1] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite_params() {
        assert!(ManipulatorParams::new([1.0, 0.5, 2.0]).is_err());
        assert!(ManipulatorParams::new([2.0, 1.0, 1.0]).is_err());
        assert!(ManipulatorParams::new([2.0, 0.5, -1.0]).is_err());
        assert!(ManipulatorParams::from_vec(vec![2.0, 0.5, 1.0, 1.0], false).is_err());
        assert!(AgentModel::double_integrator(0).is_err());
    }

    #[test]
    fn ill_conditioned_inertia_detected() {
        // a1 a3 - a3^2 - a2^2 is barely positive, so det M(0) ~ 1e-14
        let a2 = (1.0f64 - 1e-14).sqrt();
        let model = AgentModel::TwoLinkManipulator(ManipulatorParams::new([2.0, a2, 1.0]).unwrap());
        let err = model.forward_dynamics(&v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &v(&[1.0, 0.0]));
        assert!(matches!(err, Err(DynamicsError::IllConditioned(_))));
    }
}
