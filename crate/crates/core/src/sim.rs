//! Fixed-step closed-loop simulation of the delayed network.
//!
//! Every step runs in two phases. First each delay channel receives the
//! current state of its sender and returns the delayed sample. Then every
//! agent's right-hand side is evaluated from the pre-step snapshot and all
//! states advance together. In the Runge–Kutta mode the stages interpolate
//! linearly between the delayed sample and the next one.

use nalgebra::{DMatrix, DVector};

use crate::delayline::{delay_steps, DelayLine};
use crate::dynamics::AgentModel;
use crate::error::{DynamicsError, GraphError, ValidationError, ValidationErrors};
use crate::graph::{self, Edge, LeaderLink, Weights, WeightedDigraph};
use crate::protocol::{self, ControllerState, DelayedLeader, DelayedNeighbor};

/// States larger than this abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e9;
pub const DEFAULT_DT: f64 = 0.005;
pub const DEFAULT_DURATION: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Actuated(AgentModel),
    /// Moves at a constant velocity, `q(t) = q(0) + q̇(0) t`. Used to stand in
    /// for a virtual leader inside a leaderless graph.
    Kinematic { dof: usize },
}

impl Body {
    pub fn dof(&self) -> usize {
        match self {
            Body::Actuated(m) => m.dof(),
            Body::Kinematic { dof } => *dof,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub body: Body,
    pub q0: DVector<f64>,
    pub qdot0: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegratorGains {
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMode {
    /// One controller per agent; `None` only for kinematic bodies.
    Adaptive(Vec<Option<ControllerState>>),
    DoubleIntegrator(DoubleIntegratorGains),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderSpec {
    pub q0: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl LeaderSpec {
    pub fn position(&self, t: f64) -> DVector<f64> {
        &self.q0 + &self.qdot * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Euler,
    /// Classic RK4 with delayed reads held over the sub-stages.
    Rk4Hold,
    /// Classic RK4 over the whole network; delayed reads are interpolated
    /// between grid samples and zero-delay links see the sender's stage.
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub graph: WeightedDigraph,
    pub agents: Vec<AgentSpec>,
    pub control: ControlMode,
    pub leader: Option<LeaderSpec>,
    pub dt: f64,
    pub duration: f64,
    pub integrator: Integrator,
    pub output: Option<std::path::PathBuf>,
}

impl ScenarioConfig {
    pub fn dof(&self) -> usize {
        self.agents.first().map_or(0, |a| a.body.dof())
    }

    pub fn step_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Same scenario with every communication delay scaled by `factor`.
    pub fn with_scaled_delays(&self, factor: f64) -> Result<Self, GraphError> {
        Ok(Self { graph: self.graph.scale_delays(factor)?, ..self.clone() })
    }

    /// Rewrites a leader-follower scenario as a leaderless one on `n + 1`
    /// vertices: vertex 0 is a kinematic body moving like the leader and
    /// agent `i` becomes vertex `i + 1`.
    pub fn leader_as_agent(&self) -> Option<Self> {
        let leader = self.leader.as_ref()?;
        let mut agents = Vec::with_capacity(self.agents.len() + 1);
        agents.push(AgentSpec { body: Body::Kinematic { dof: leader.q0.len() }, q0: leader.q0.clone(), qdot0: leader.qdot.clone() });
        agents.extend(self.agents.iter().cloned());
        let control = match &self.control {
            ControlMode::Adaptive(ctrls) => {
                let mut all = Vec::with_capacity(ctrls.len() + 1);
                all.push(None);
                all.extend(ctrls.iter().cloned());
                ControlMode::Adaptive(all)
            }
            other => other.clone(),
        };
        Some(Self { graph: self.graph.leader_augmented(), agents, control, leader: None, ..self.clone() })
    }
}

fn invalid(location: impl Into<String>, detail: impl Into<String>) -> ValidationError {
    ValidationError::Invalid { location: location.into(), detail: detail.into() }
}

fn mismatch(location: impl Into<String>, detail: impl Into<String>) -> ValidationError {
    ValidationError::DimensionMismatch { location: location.into(), detail: detail.into() }
}

/// Checks every precondition of [`run`], collecting all problems.
pub fn validate(config: &ScenarioConfig) -> Result<(), ValidationErrors> {
    let mut errors = Vec::new();
    let n = config.graph.n();
    if !(config.dt.is_finite() && config.dt > 0.0) {
        errors.push(invalid("sim.dt", format!("step must be finite and > 0, got {}", config.dt)));
    }
    if !(config.duration.is_finite() && config.duration > 0.0) {
        errors.push(invalid("sim.duration", format!("duration must be finite and > 0, got {}", config.duration)));
    } else if config.dt > 0.0 && config.step_count() == 0 {
        errors.push(invalid("sim.duration", "duration is shorter than one step"));
    }
    if config.agents.len() != n {
        errors.push(mismatch("agents", format!("graph has {n} vertices but {} agents are listed", config.agents.len())));
    }
    let m = config.dof();
    for (i, a) in config.agents.iter().enumerate() {
        let loc = format!("agents[{i}]");
        if a.body.dof() != m {
            errors.push(mismatch(&loc, format!("dof {} differs from agent 0 dof {m}", a.body.dof())));
        }
        if a.q0.len() != a.body.dof() || a.qdot0.len() != a.body.dof() {
            errors.push(mismatch(&loc, "q0 and qdot0 must have one entry per degree of freedom"));
        }
        if a.q0.iter().chain(a.qdot0.iter()).any(|x| !x.is_finite()) {
            errors.push(invalid(&loc, "initial state must be finite"));
        }
        if matches!(a.body, Body::Kinematic { .. }) && (config.graph.in_edges(i).next().is_some() || config.graph.leader_link(i).is_some()) {
            errors.push(invalid(&loc, "a kinematic body cannot receive information"));
        }
    }
    match &config.control {
        ControlMode::Adaptive(ctrls) => {
            if ctrls.len() != config.agents.len() {
                errors.push(mismatch("controllers", format!("{} controllers for {} agents", ctrls.len(), config.agents.len())));
            }
            for (i, (a, c)) in config.agents.iter().zip(ctrls).enumerate() {
                let loc = format!("agents[{i}]");
                match (&a.body, c) {
                    (Body::Actuated(model), Some(c)) => {
                        if let Err(source) = protocol::check_spd("K", c.k(), model.dof()) {
                            errors.push(ValidationError::BadGain { location: loc.clone(), source });
                        }
                        if c.a_hat.len() != model.param_count() {
                            errors.push(mismatch(&loc, format!("a_hat0 has {} entries, model needs {}", c.a_hat.len(), model.param_count())));
                        } else if let Err(source) = protocol::check_spd("Gamma", c.gamma(), model.param_count()) {
                            errors.push(ValidationError::BadGain { location: loc.clone(), source });
                        }
                    }
                    (Body::Actuated(_), None) => errors.push(invalid(&loc, "actuated agent needs controller gains")),
                    (Body::Kinematic { .. }, _) => {}
                }
            }
        }
        ControlMode::DoubleIntegrator(gains) => {
            if !(gains.k.is_finite() && gains.k > 0.0) {
                errors.push(ValidationError::BadGain { location: "protocol.k".into(), source: crate::error::GainError::NonPositiveScalar(gains.k) });
            }
            for (i, a) in config.agents.iter().enumerate() {
                if let Body::Actuated(AgentModel::TwoLinkManipulator(_)) = a.body {
                    errors.push(invalid(format!("agents[{i}]"), "double_integrator protocol needs double_integrator agents"));
                }
            }
        }
    }
    match (&config.leader, config.graph.has_leader()) {
        (Some(l), _) => {
            if l.q0.len() != m || l.qdot.len() != m {
                errors.push(mismatch("leader", format!("leader state must have {m} entries")));
            }
            if !config.graph.has_leader() {
                errors.push(invalid("graph.leader_links", "leader given but no follower is linked to it"));
            }
        }
        (None, true) => errors.push(invalid("leader", "leader links given without a leader trajectory")),
        (None, false) => {}
    }
    if config.dt.is_finite() && config.dt > 0.0 {
        for e in config.graph.edges() {
            if let Err(source) = delay_steps(e.delay, config.dt) {
                errors.push(ValidationError::NonCommensurateDelay { location: format!("edge {} <- {}", e.to + 1, e.from + 1), source });
            }
        }
        for l in config.graph.leader_links() {
            if let Err(source) = delay_steps(l.delay, config.dt) {
                errors.push(ValidationError::NonCommensurateDelay { location: format!("leader link to agent {}", l.agent + 1), source });
            }
        }
    }
    if n > 0 && !graph::has_spanning_tree_with_leader(&config.graph) {
        let location = if config.graph.has_leader() { "graph (leader-augmented)" } else { "graph" };
        errors.push(ValidationError::NoSpanningTree { location: location.into() });
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ValidationErrors(errors))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("agent {agent}: {source}")]
    Dynamics { agent: usize, source: DynamicsError },
    /// The run blew up; the trace up to the offending step is kept.
    #[error("simulation diverged at t = {time} s (agent {agent})")]
    Diverged { time: f64, agent: usize, trace: Box<SimTrace> },
}

/// Time series of one agent. Vector quantities are stored row-major, `dof`
/// entries per step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentSeries {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<f64>,
    pub tau: Vec<f64>,
    pub lyapunov: Vec<f64>,
    /// `‖â - a‖`; zero when no estimate is adapted.
    pub da_norm: Vec<f64>,
    pub a_hat_norm: Vec<f64>,
}

/// Per-step network errors relative to the predicted consensus velocity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DerivedSeries {
    /// `max_{i,j} ‖q_i - q_j‖`
    pub position_error: Vec<f64>,
    /// `max_i ‖q_i - q_L(t)‖`, leader mode only.
    pub leader_error: Vec<f64>,
    /// `max_i ‖q̇_i - v̄‖`
    pub velocity_error: Vec<f64>,
    /// `max_i ‖v_i - v̄‖`
    pub observer_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub dof: usize,
    pub times: Vec<f64>,
    pub agents: Vec<AgentSeries>,
    pub predicted_velocity: DVector<f64>,
    pub leader: Option<LeaderSpec>,
    /// Per agent: steps at which a delayed position first arrives on a link
    /// with nonzero delay. The reference velocity jumps there because the
    /// delayed position switches from its zero pre-history to live data.
    pub activation_steps: Vec<Vec<usize>>,
    pub derived: DerivedSeries,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row<'a>(&self, series: &'a [f64], k: usize) -> &'a [f64] {
        &series[k * self.dof..(k + 1) * self.dof]
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }
}

/// The state each agent integrates.
#[derive(Debug, Clone)]
struct AgentState {
    q: DVector<f64>,
    qdot: DVector<f64>,
    v: DVector<f64>,
    a_hat: DVector<f64>,
}

impl AgentState {
    fn axpy(&self, h: f64, d: &Derivative) -> Self {
        Self {
            q: &self.q + &d.q * h,
            qdot: &self.qdot + &d.qdot * h,
            v: &self.v + &d.v * h,
            a_hat: &self.a_hat + &d.a_hat * h,
        }
    }

    fn max_abs(&self) -> f64 {
        self.q
            .iter()
            .chain(self.qdot.iter())
            .chain(self.v.iter())
            .chain(self.a_hat.iter())
            .fold(0.0, |acc: f64, x| if x.is_finite() { acc.max(x.abs()) } else { f64::INFINITY })
    }
}

#[derive(Debug, Clone)]
struct Derivative {
    q: DVector<f64>,
    qdot: DVector<f64>,
    v: DVector<f64>,
    a_hat: DVector<f64>,
}

/// Outputs that are recorded but not integrated.
struct Outputs {
    s: DVector<f64>,
    tau: DVector<f64>,
    lyapunov: f64,
    da_norm: f64,
}

/// Delayed `[q, q̇, v]` read from one sender.
struct DelayedRead {
    q: DVector<f64>,
    qdot: DVector<f64>,
    v: DVector<f64>,
}

fn split3(x: DVector<f64>, m: usize) -> DelayedRead {
    DelayedRead { q: x.rows(0, m).into_owned(), qdot: x.rows(m, m).into_owned(), v: x.rows(2 * m, m).into_owned() }
}

fn pack3(q: &DVector<f64>, qdot: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(q.len() * 3, q.iter().chain(qdot.iter()).chain(v.iter()).copied())
}

fn lerp(a: &DelayedRead, b: &DelayedRead, theta: f64) -> DelayedRead {
    let mix = |x: &DVector<f64>, y: &DVector<f64>| x * (1.0 - theta) + y * theta;
    DelayedRead { q: mix(&a.q, &b.q), qdot: mix(&a.qdot, &b.qdot), v: mix(&a.v, &b.v) }
}

/// The samples one step newer than the current delayed reads, used to
/// interpolate inside a Runge–Kutta step. Zero-delay channels have none;
/// they read the sender's stage state instead.
struct Lookahead {
    edges: Vec<Option<DelayedRead>>,
    leader: Vec<Option<DelayedRead>>,
}

impl Lookahead {
    fn capture(lines: &[DelayLine], leader_lines: &[DelayLine], m: usize) -> Self {
        // while the current read is still pre-history the delayed signal is
        // zero over the whole step; it switches on exactly at the next grid point
        let grab = |l: &DelayLine| {
            let d = l.delay_steps();
            (d > 0).then(|| if l.steps_pushed() as usize > d { split3(l.lagged(d - 1), m) } else { split3(DVector::zeros(3 * m), m) })
        };
        Self { edges: lines.iter().map(grab).collect(), leader: leader_lines.iter().map(grab).collect() }
    }

    #[allow(clippy::too_many_arguments)]
    fn stage_reads(
        &self,
        config: &ScenarioConfig,
        leader_lines: &[DelayLine],
        reads: &[DelayedRead],
        leader_reads: &[DelayedRead],
        xs: &[AgentState],
        leader_now: Option<&(DVector<f64>, DVector<f64>)>,
        theta: f64,
    ) -> (Vec<DelayedRead>, Vec<DelayedRead>) {
        let m = config.dof();
        let r = config
            .graph
            .edges()
            .iter()
            .enumerate()
            .map(|(idx, e)| match &self.edges[idx] {
                Some(next) => lerp(&reads[idx], next, theta),
                None => {
                    let x = &xs[e.from];
                    split3(pack3(&x.q, &x.qdot, &x.v), m)
                }
            })
            .collect();
        let lr = (0..leader_lines.len())
            .map(|idx| match &self.leader[idx] {
                Some(next) => lerp(&leader_reads[idx], next, theta),
                None => {
                    let (q, qd) = leader_now.expect("validated: leader links need a leader");
                    split3(pack3(q, qd, qd), m)
                }
            })
            .collect();
        (r, lr)
    }
}

struct Agent<'c> {
    body: &'c Body,
    ctrl: Option<&'c ControllerState>,
    a_true: DVector<f64>,
    in_edges: Vec<(usize, Edge)>,
    leader: Option<(usize, LeaderLink)>,
}

impl Agent<'_> {
    fn evaluate(
        &self,
        x: &AgentState,
        reads: &[DelayedRead],
        leader_reads: &[DelayedRead],
        mode: &ControlMode,
    ) -> Result<(Derivative, Outputs), DynamicsError> {
        let model = match self.body {
            Body::Actuated(model) => model,
            Body::Kinematic { dof } => {
                let z = DVector::zeros(*dof);
                let d = Derivative { q: x.qdot.clone(), qdot: z.clone(), v: z.clone(), a_hat: DVector::zeros(0) };
                return Ok((d, Outputs { s: z.clone(), tau: z, lyapunov: 0.0, da_norm: 0.0 }));
            }
        };
        let neighbors: Vec<DelayedNeighbor<'_>> = self
            .in_edges
            .iter()
            .map(|(idx, e)| {
                let r = &reads[*idx];
                DelayedNeighbor { w: e.w, b: e.b, delay: e.delay, q: &r.q, qdot: &r.qdot, v: &r.v }
            })
            .collect();
        let leader = self.leader.as_ref().map(|(idx, l)| {
            let r = &leader_reads[*idx];
            DelayedLeader { w: l.w, b: l.b, delay: l.delay, q: &r.q, qdot: &r.qdot }
        });
        let leader = leader.as_ref();

        let v_dot = protocol::observer_rhs(&x.v, &neighbors, leader);
        let qdot_r = protocol::reference_velocity(&x.v, &x.q, &neighbors, leader);
        let qddot_r = protocol::reference_acceleration(&v_dot, &x.qdot, &neighbors, leader);
        let s = protocol::sliding_vector(&x.qdot, &qdot_r);

        match (mode, self.ctrl) {
            (ControlMode::Adaptive(_), Some(ctrl)) => {
                let tau = protocol::control_torque(model, &x.q, &x.qdot, &qdot_r, &qddot_r, &x.a_hat, ctrl.k(), &s);
                let a_hat_dot = protocol::adaptation_rhs(model, &x.q, &x.qdot, &qdot_r, &qddot_r, ctrl.gamma(), &s);
                let qddot = model.forward_dynamics(&x.q, &x.qdot, &tau)?;
                let lyapunov = protocol::lyapunov_value(model, &x.q, &s, &x.a_hat, &self.a_true, ctrl.gamma_inv());
                let da_norm = (&x.a_hat - &self.a_true).norm();
                Ok((Derivative { q: x.qdot.clone(), qdot: qddot, v: v_dot, a_hat: a_hat_dot }, Outputs { s, tau, lyapunov, da_norm }))
            }
            (ControlMode::DoubleIntegrator(gains), _) => {
                let qddot = protocol::double_integrator_rhs(&x.q, &x.qdot, &x.v, &v_dot, &neighbors, leader, gains.k);
                let lyapunov = 0.5 * s.norm_squared();
                let d = Derivative { q: x.qdot.clone(), qdot: qddot.clone(), v: v_dot, a_hat: DVector::zeros(0) };
                Ok((d, Outputs { s, tau: qddot, lyapunov, da_norm: 0.0 }))
            }
            (ControlMode::Adaptive(_), None) => unreachable!("validated: actuated agents have controllers"),
        }
    }
}

/// Integrates an unactuated body, `M q̈ + C q̇ + g = 0`, for `steps` steps.
/// Returns the final `(q, q̇)`. Both RK4 modes are identical here.
pub fn free_motion(
    model: &AgentModel,
    q0: &DVector<f64>,
    qdot0: &DVector<f64>,
    dt: f64,
    steps: usize,
    integrator: Integrator,
) -> Result<(DVector<f64>, DVector<f64>), DynamicsError> {
    let tau = DVector::zeros(model.dof());
    let f = |q: &DVector<f64>, qd: &DVector<f64>| model.forward_dynamics(q, qd, &tau).map(|qdd| (qd.clone(), qdd));
    let (mut q, mut qd) = (q0.clone(), qdot0.clone());
    for _ in 0..steps {
        match integrator {
            Integrator::Euler => {
                let (dq, dqd) = f(&q, &qd)?;
                q += dq * dt;
                qd += dqd * dt;
            }
            Integrator::Rk4 | Integrator::Rk4Hold => {
                let (a1, b1) = f(&q, &qd)?;
                let (a2, b2) = f(&(&q + &a1 * (dt / 2.0)), &(&qd + &b1 * (dt / 2.0)))?;
                let (a3, b3) = f(&(&q + &a2 * (dt / 2.0)), &(&qd + &b2 * (dt / 2.0)))?;
                let (a4, b4) = f(&(&q + &a3 * dt), &(&qd + &b3 * dt))?;
                q += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
                qd += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (dt / 6.0);
            }
        }
    }
    Ok((q, qd))
}

/// Predicted common velocity: the observer consensus value, or the leader
/// velocity in leader mode.
pub fn predicted_velocity(config: &ScenarioConfig) -> Result<DVector<f64>, GraphError> {
    if let Some(leader) = &config.leader {
        return Ok(leader.qdot.clone());
    }
    let gamma = graph::compute_gamma(&graph::build_laplacian(&config.graph, Weights::Observer))?;
    let v0: Vec<DVector<f64>> = config.agents.iter().map(|a| a.qdot0.clone()).collect();
    Ok(graph::predict_consensus_velocity(&config.graph, &gamma, &v0))
}

/// Integrates the closed loop and records every step.
pub fn run(config: &ScenarioConfig) -> Result<SimTrace, SimError> {
    validate(config)?;
    let n = config.agents.len();
    let m = config.dof();
    let dt = config.dt;
    let steps = config.step_count();
    let predicted = predicted_velocity(config)?;

    let mut lines: Vec<DelayLine> = config
        .graph
        .edges()
        .iter()
        .map(|e| DelayLine::with_steps(delay_steps(e.delay, dt).expect("validated"), 3 * m))
        .collect();
    let mut leader_lines: Vec<DelayLine> = config
        .graph
        .leader_links()
        .iter()
        .map(|l| DelayLine::with_steps(delay_steps(l.delay, dt).expect("validated"), 3 * m))
        .collect();

    let ctrls: Vec<Option<&ControllerState>> = match &config.control {
        ControlMode::Adaptive(c) => c.iter().map(Option::as_ref).collect(),
        ControlMode::DoubleIntegrator(_) => vec![None; n],
    };
    let agents: Vec<Agent<'_>> = config
        .agents
        .iter()
        .enumerate()
        .map(|(i, spec)| Agent {
            body: &spec.body,
            ctrl: ctrls[i],
            a_true: match &spec.body {
                Body::Actuated(model) => model.true_params(),
                Body::Kinematic { .. } => DVector::zeros(0),
            },
            in_edges: config.graph.edges().iter().copied().enumerate().filter(|(_, e)| e.to == i).collect(),
            leader: config.graph.leader_links().iter().copied().enumerate().find(|(_, l)| l.agent == i),
        })
        .collect();

    let mut activation_steps: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, line) in config.graph.edges().iter().zip(&lines) {
        if line.delay_steps() > 0 {
            activation_steps[e.to].push(line.delay_steps());
        }
    }
    for (l, line) in config.graph.leader_links().iter().zip(&leader_lines) {
        if line.delay_steps() > 0 {
            activation_steps[l.agent].push(line.delay_steps());
        }
    }
    for a in &mut activation_steps {
        a.sort_unstable();
        a.dedup();
    }

    let mut state: Vec<AgentState> = config
        .agents
        .iter()
        .zip(&ctrls)
        .map(|(spec, ctrl)| AgentState {
            q: spec.q0.clone(),
            qdot: spec.qdot0.clone(),
            v: spec.qdot0.clone(),
            a_hat: ctrl.map_or_else(|| DVector::zeros(0), |c| c.a_hat.clone()),
        })
        .collect();

    let mut trace = SimTrace {
        dt,
        dof: m,
        times: Vec::with_capacity(steps + 1),
        agents: vec![AgentSeries::default(); n],
        predicted_velocity: predicted.clone(),
        leader: config.leader.clone(),
        activation_steps,
        derived: DerivedSeries::default(),
    };

    for k in 0..=steps {
        let t = k as f64 * dt;
        let leader_now = config.leader.as_ref().map(|l| (l.position(t), l.qdot.clone()));

        // phase 1: every channel sees the pre-step snapshot
        let reads: Vec<DelayedRead> = config
            .graph
            .edges()
            .iter()
            .zip(lines.iter_mut())
            .map(|(e, line)| {
                let src = &state[e.from];
                split3(line.push_and_read(&pack3(&src.q, &src.qdot, &src.v)), m)
            })
            .collect();
        let leader_reads: Vec<DelayedRead> = leader_lines
            .iter_mut()
            .map(|line| {
                let (q, qd) = leader_now.as_ref().expect("validated: leader links need a leader");
                split3(line.push_and_read(&pack3(q, qd, qd)), m)
            })
            .collect();

        // phase 2: evaluate everyone, record, then commit
        let mut derivs = Vec::with_capacity(n);
        for (i, agent) in agents.iter().enumerate() {
            let (d, out) = agent
                .evaluate(&state[i], &reads, &leader_reads, &config.control)
                .map_err(|source| SimError::Dynamics { agent: i, source })?;
            let series = &mut trace.agents[i];
            series.q.extend(state[i].q.iter());
            series.qdot.extend(state[i].qdot.iter());
            series.v.extend(state[i].v.iter());
            series.s.extend(out.s.iter());
            series.tau.extend(out.tau.iter());
            series.lyapunov.push(out.lyapunov);
            series.da_norm.push(out.da_norm);
            series.a_hat_norm.push(state[i].a_hat.norm());
            derivs.push(d);
        }
        trace.times.push(t);
        record_derived(&mut trace, &state, &predicted, leader_now.as_ref().map(|(q, _)| q));

        if k == steps {
            break;
        }
        let t_next = (k + 1) as f64 * dt;
        let stepped: Vec<AgentState> = match config.integrator {
            Integrator::Euler => state.iter().zip(&derivs).map(|(x, d)| x.axpy(dt, d)).collect(),
            Integrator::Rk4 | Integrator::Rk4Hold => {
                let ahead = Lookahead::capture(&lines, &leader_lines, m);
                let hold = config.integrator == Integrator::Rk4Hold;
                let stage = |theta: f64, xs: &[AgentState]| -> Result<Vec<Derivative>, SimError> {
                    let t_stage = t + theta * dt;
                    let leader_stage = config.leader.as_ref().map(|l| (l.position(t_stage), l.qdot.clone()));
                    let staged;
                    let (r, lr) = if hold {
                        (&reads[..], &leader_reads[..])
                    } else {
                        staged = ahead.stage_reads(config, &leader_lines, &reads, &leader_reads, xs, leader_stage.as_ref(), theta);
                        (&staged.0[..], &staged.1[..])
                    };
                    agents
                        .iter()
                        .enumerate()
                        .map(|(i, a)| {
                            a.evaluate(&xs[i], r, lr, &config.control)
                                .map(|(d, _)| d)
                                .map_err(|source| SimError::Dynamics { agent: i, source })
                        })
                        .collect()
                };
                let shifted = |h: f64, ds: &[Derivative]| -> Vec<AgentState> { state.iter().zip(ds).map(|(x, d)| x.axpy(h, d)).collect() };
                let k2 = stage(0.5, &shifted(dt / 2.0, &derivs))?;
                let k3 = stage(0.5, &shifted(dt / 2.0, &k2))?;
                let k4 = stage(1.0, &shifted(dt, &k3))?;
                (0..n)
                    .map(|i| state[i].axpy(dt / 6.0, &derivs[i]).axpy(dt / 3.0, &k2[i]).axpy(dt / 3.0, &k3[i]).axpy(dt / 6.0, &k4[i]))
                    .collect()
            }
        };
        let mut next = Vec::with_capacity(n);
        for (i, mut x) in stepped.into_iter().enumerate() {
            if let Body::Kinematic { .. } = config.agents[i].body {
                let spec = &config.agents[i];
                x = AgentState { q: &spec.q0 + &spec.qdot0 * t_next, qdot: spec.qdot0.clone(), v: spec.qdot0.clone(), a_hat: DVector::zeros(0) };
            }
            if !(x.max_abs() <= DIVERGENCE_LIMIT) {
                return Err(SimError::Diverged { time: t_next, agent: i, trace: Box::new(trace) });
            }
            next.push(x);
        }
        state = next;
    }
    Ok(trace)
}

fn record_derived(trace: &mut SimTrace, state: &[AgentState], vbar: &DVector<f64>, leader_q: Option<&DVector<f64>>) {
    let mut pos: f64 = 0.0;
    for (i, a) in state.iter().enumerate() {
        for b in &state[i + 1..] {
            pos = pos.max((&a.q - &b.q).norm());
        }
    }
    let vel = state.iter().map(|a| (&a.qdot - vbar).norm()).fold(0.0, f64::max);
    let obs = state.iter().map(|a| (&a.v - vbar).norm()).fold(0.0, f64::max);
    let d = &mut trace.derived;
    d.position_error.push(pos);
    d.velocity_error.push(vel);
    d.observer_error.push(obs);
    if let Some(ql) = leader_q {
        d.leader_error.push(state.iter().map(|a| (&a.q - ql).norm()).fold(0.0, f64::max));
    }
}

/// Per-step Lyapunov increases above this count as violations.
pub const LYAPUNOV_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Metrics {
    pub steps: usize,
    pub final_time: f64,
    pub predicted_velocity: Vec<f64>,
    pub simulated_velocity: Vec<f64>,
    /// `max_k |simulated_k - predicted_k|`
    pub velocity_gap: f64,
    pub observer_error: f64,
    pub velocity_consensus_error: f64,
    pub position_consensus_error: f64,
    pub leader_tracking_error: Option<f64>,
    pub peak_observer_error: f64,
    pub peak_velocity_consensus_error: f64,
    pub peak_position_consensus_error: f64,
    /// Steps where some `V_i` grew by more than the tolerance.
    pub lyapunov_violations: usize,
    pub lyapunov_max_increase: f64,
    /// Same count restricted to steps that do not cross a delayed-position
    /// activation instant of that agent.
    pub lyapunov_violations_smooth: usize,
    pub lyapunov_max_increase_smooth: f64,
    /// `Σ_k ‖s_i‖² dt` per agent.
    pub sliding_integral: Vec<f64>,
    /// Share of the sliding integral accumulated in the last 10% of the run (max over agents).
    pub sliding_tail_fraction: f64,
    pub max_a_hat_norm: Vec<f64>,
    pub leader_q0: Option<Vec<f64>>,
    pub leader_qdot: Option<Vec<f64>>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Endpoint and whole-run error summary of a trace against `vbar`.
pub fn compute_metrics(trace: &SimTrace, vbar: &DVector<f64>) -> Metrics {
    let last = trace.len().saturating_sub(1);
    let m = trace.dof;
    let n = trace.n_agents();
    let dt = trace.dt;

    let mut simulated = vec![0.0; m];
    let mut vel_err: f64 = 0.0;
    let mut obs_err: f64 = 0.0;
    let mut pos_err: f64 = 0.0;
    let mut peak_vel: f64 = 0.0;
    let mut peak_obs: f64 = 0.0;
    let mut peak_pos: f64 = 0.0;
    let norm_to = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    for k in 0..trace.len() {
        let mut ve: f64 = 0.0;
        let mut oe: f64 = 0.0;
        let mut pe: f64 = 0.0;
        for (i, a) in trace.agents.iter().enumerate() {
            ve = ve.max(norm_to(trace.row(&a.qdot, k), vbar.as_slice()));
            oe = oe.max(norm_to(trace.row(&a.v, k), vbar.as_slice()));
            for b in &trace.agents[i + 1..] {
                pe = pe.max(norm_to(trace.row(&a.q, k), trace.row(&b.q, k)));
            }
        }
        peak_vel = peak_vel.max(ve);
        peak_obs = peak_obs.max(oe);
        peak_pos = peak_pos.max(pe);
        if k == last {
            vel_err = ve;
            obs_err = oe;
            pos_err = pe;
        }
    }
    for a in &trace.agents {
        for (acc, x) in simulated.iter_mut().zip(trace.row(&a.qdot, last)) {
            *acc += x / n as f64;
        }
    }
    let leader_tracking_error = trace.leader.as_ref().map(|l| {
        let ql = l.position(trace.times[last]);
        trace.agents.iter().map(|a| norm_to(trace.row(&a.q, last), ql.as_slice())).fold(0.0, f64::max)
    });

    let mut violations = 0;
    let mut max_inc = f64::NEG_INFINITY;
    let mut violations_smooth = 0;
    let mut max_inc_smooth = f64::NEG_INFINITY;
    for (i, a) in trace.agents.iter().enumerate() {
        for k in 0..last {
            let inc = a.lyapunov[k + 1] - a.lyapunov[k];
            max_inc = max_inc.max(inc);
            if inc > LYAPUNOV_TOLERANCE {
                violations += 1;
            }
            if !trace.activation_steps[i].contains(&(k + 1)) {
                max_inc_smooth = max_inc_smooth.max(inc);
                if inc > LYAPUNOV_TOLERANCE {
                    violations_smooth += 1;
                }
            }
        }
    }

    let tail_start = trace.len() - trace.len() / 10;
    let mut sliding_integral = Vec::with_capacity(n);
    let mut tail_fraction: f64 = 0.0;
    for a in &trace.agents {
        let sq: Vec<f64> = (0..trace.len()).map(|k| trace.row(&a.s, k).iter().map(|x| x * x).sum::<f64>() * dt).collect();
        let total: f64 = sq.iter().sum();
        let tail: f64 = sq[tail_start..].iter().sum();
        if total > 0.0 {
            tail_fraction = tail_fraction.max(tail / total);
        }
        sliding_integral.push(total);
    }

    Metrics {
        steps: last,
        final_time: trace.times.get(last).copied().unwrap_or(0.0),
        predicted_velocity: vbar.iter().copied().collect(),
        velocity_gap: max_abs_diff(&simulated, vbar.as_slice()),
        simulated_velocity: simulated,
        observer_error: obs_err,
        velocity_consensus_error: vel_err,
        position_consensus_error: pos_err,
        leader_tracking_error,
        peak_observer_error: peak_obs,
        peak_velocity_consensus_error: peak_vel,
        peak_position_consensus_error: peak_pos,
        lyapunov_violations: violations,
        lyapunov_max_increase: if max_inc.is_finite() { max_inc } else { 0.0 },
        lyapunov_violations_smooth: violations_smooth,
        lyapunov_max_increase_smooth: if max_inc_smooth.is_finite() { max_inc_smooth } else { 0.0 },
        sliding_integral,
        sliding_tail_fraction: tail_fraction,
        max_a_hat_norm: trace.agents.iter().map(|a| a.a_hat_norm.iter().copied().fold(0.0, f64::max)).collect(),
        leader_q0: trace.leader.as_ref().map(|l| l.q0.iter().copied().collect()),
        leader_qdot: trace.leader.as_ref().map(|l| l.qdot.iter().copied().collect()),
    }
}

/// Builds `K = diag(k)` style gains for every actuated agent.
pub fn isotropic_controllers(agents: &[AgentSpec], k: f64, gamma: f64) -> Vec<Option<ControllerState>> {
    agents
        .iter()
        .map(|a| match &a.body {
            Body::Actuated(model) => {
                let p = model.param_count();
                let m = model.dof();
                Some(ControllerState::new(DVector::zeros(p), DMatrix::identity(m, m) * k, DMatrix::identity(p, p) * gamma).expect("positive scalars"))
            }
            Body::Kinematic { .. } => None,
        })
        .collect()
}
