//! Distributed velocity observer and delay-compensated adaptive controller.
//!
//! All functions are pure: they take an agent's own state and the delayed
//! values read from its neighbors and return the right-hand side or control
//! output. Delayed values are whatever the delay channels produced, so they
//! are exactly zero before data from a neighbor has arrived.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::AgentModel;
use crate::error::GainError;

/// Delayed signals received from neighbor `j` over edge `i <- j`.
#[derive(Debug, Clone, Copy)]
pub struct DelayedNeighbor<'a> {
    pub w: f64,
    pub b: f64,
    /// Delay `T_ij` in seconds.
    pub delay: f64,
    /// `q_j(t - T_ij)`
    pub q: &'a DVector<f64>,
    /// `q̇_j(t - T_ij)`
    pub qdot: &'a DVector<f64>,
    /// `v_j(t - T_ij)`
    pub v: &'a DVector<f64>,
}

/// Delayed leader signals received over link `i <- 0`.
#[derive(Debug, Clone, Copy)]
pub struct DelayedLeader<'a> {
    pub w: f64,
    pub b: f64,
    pub delay: f64,
    /// `q_L(t - T_i0)`
    pub q: &'a DVector<f64>,
    /// `q̇_L(t - T_i0)`
    pub qdot: &'a DVector<f64>,
}

/// `1 + Σ_j w_ij T_ij (+ w_i0 T_i0)`.
pub fn delay_factor(neighbors: &[DelayedNeighbor<'_>], leader: Option<&DelayedLeader<'_>>) -> f64 {
    1.0 + neighbors.iter().map(|n| n.w * n.delay).sum::<f64>() + leader.map_or(0.0, |l| l.w * l.delay)
}

/// `v̇_i = -Σ_j b_ij (v_i - v_j(t - T_ij)) - b_i0 (v_i - q̇_L(t - T_i0))`.
pub fn observer_rhs(v: &DVector<f64>, neighbors: &[DelayedNeighbor<'_>], leader: Option<&DelayedLeader<'_>>) -> DVector<f64> {
    let mut rhs = DVector::zeros(v.len());
    for n in neighbors {
        rhs -= (v - n.v) * n.b;
    }
    if let Some(l) = leader {
        rhs -= (v - l.qdot) * l.b;
    }
    rhs
}

/// Delay-dependent reference velocity `q̇_{r,i}`.
pub fn reference_velocity(
    v: &DVector<f64>,
    q: &DVector<f64>,
    neighbors: &[DelayedNeighbor<'_>],
    leader: Option<&DelayedLeader<'_>>,
) -> DVector<f64> {
    let mut qr = v * delay_factor(neighbors, leader);
    for n in neighbors {
        qr -= (q - n.q) * n.w;
    }
    if let Some(l) = leader {
        qr -= (q - l.q) * l.w;
    }
    qr
}

/// Analytic time derivative of [`reference_velocity`]. `v_dot` is the
/// observer right-hand side; delayed velocities play the role of the
/// derivatives of the delayed positions.
pub fn reference_acceleration(
    v_dot: &DVector<f64>,
    qdot: &DVector<f64>,
    neighbors: &[DelayedNeighbor<'_>],
    leader: Option<&DelayedLeader<'_>>,
) -> DVector<f64> {
    let mut qrr = v_dot * delay_factor(neighbors, leader);
    for n in neighbors {
        qrr -= (qdot - n.qdot) * n.w;
    }
    if let Some(l) = leader {
        qrr -= (qdot - l.qdot) * l.w;
    }
    qrr
}

/// `s_i = q̇_i - q̇_{r,i}`.
pub fn sliding_vector(qdot: &DVector<f64>, qdot_r: &DVector<f64>) -> DVector<f64> {
    qdot - qdot_r
}

/// Gains and parameter estimate of one adaptive controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub a_hat: DVector<f64>,
    k: DMatrix<f64>,
    gamma: DMatrix<f64>,
    gamma_inv: DMatrix<f64>,
}

impl ControllerState {
    /// `k` is `m×m`, `gamma` is `p×p`; both must be symmetric positive definite.
    pub fn new(a_hat: DVector<f64>, k: DMatrix<f64>, gamma: DMatrix<f64>) -> Result<Self, GainError> {
        check_spd("K", &k, k.nrows())?;
        check_spd("Gamma", &gamma, a_hat.len())?;
        let gamma_inv = gamma.clone().cholesky().expect("checked SPD").inverse();
        Ok(Self { a_hat, k, gamma, gamma_inv })
    }

    /// Scalar-times-identity gains with a zero initial estimate.
    pub fn isotropic(dof: usize, params: usize, k: f64, gamma: f64) -> Result<Self, GainError> {
        Self::new(DVector::zeros(params), DMatrix::identity(dof, dof) * k, DMatrix::identity(params, params) * gamma)
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn gamma_inv(&self) -> &DMatrix<f64> {
        &self.gamma_inv
    }
}

/// Checks shape, symmetry and positive definiteness of a gain matrix.
pub fn check_spd(name: &'static str, m: &DMatrix<f64>, dim: usize) -> Result<(), GainError> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(GainError::Shape { name, dim, rows: m.nrows(), cols: m.ncols() });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(GainError::NotPositiveDefinite(name));
    }
    let scale = m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > 1e-12 * scale {
        return Err(GainError::NotSymmetric(name));
    }
    let eig = m.clone().symmetric_eigenvalues();
    if !(eig.min() > 0.0) {
        return Err(GainError::NotPositiveDefinite(name));
    }
    Ok(())
}

/// `τ_i = Y(q, q̇, q̇_r, q̈_r) â_i - K_i s_i`, with `â_i` and `K_i` taken from a [`ControllerState`].
pub fn control_torque(
    model: &AgentModel,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    qdot_r: &DVector<f64>,
    qddot_r: &DVector<f64>,
    a_hat: &DVector<f64>,
    k: &DMatrix<f64>,
    s: &DVector<f64>,
) -> DVector<f64> {
    model.regressor(q, qdot, qdot_r, qddot_r) * a_hat - k * s
}

/// `â̇_i = -Γ_i Yᵀ s_i`.
pub fn adaptation_rhs(
    model: &AgentModel,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    qdot_r: &DVector<f64>,
    qddot_r: &DVector<f64>,
    gamma: &DMatrix<f64>,
    s: &DVector<f64>,
) -> DVector<f64> {
    -(gamma * model.regressor(q, qdot, qdot_r, qddot_r).transpose() * s)
}

/// Reduced protocol for unit-mass double integrators with scalar gain `k`.
///
/// Equivalent to the adaptive controller with exact parameters and `K = k I`.
pub fn double_integrator_rhs(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    v: &DVector<f64>,
    v_dot: &DVector<f64>,
    neighbors: &[DelayedNeighbor<'_>],
    leader: Option<&DelayedLeader<'_>>,
    k: f64,
) -> DVector<f64> {
    let mut acc = (v_dot + v * k) * delay_factor(neighbors, leader) - qdot * k;
    for n in neighbors {
        acc -= (qdot - n.qdot) * n.w;
        acc -= (q - n.q) * (k * n.w);
    }
    if let Some(l) = leader {
        acc -= (qdot - l.qdot) * l.w;
        acc -= (q - l.q) * (k * l.w);
    }
    acc
}

/// `V_i = ½ sᵀ M(q) s + ½ Δaᵀ Γ⁻¹ Δa` with `Δa = â - a`.
pub fn lyapunov_value(
    model: &AgentModel,
    q: &DVector<f64>,
    s: &DVector<f64>,
    a_hat: &DVector<f64>,
    a_true: &DVector<f64>,
    gamma_inv: &DMatrix<f64>,
) -> f64 {
    let da = a_hat - a_true;
    0.5 * s.dot(&(model.inertia(q) * s)) + 0.5 * da.dot(&(gamma_inv * &da))
}
