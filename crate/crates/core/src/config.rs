//! JSON scenario files.
//!
//! Agents are numbered from 1 in files. An edge `{from: j, to: i}` means
//! agent `i` receives the state of agent `j`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentModel, ManipulatorParams};
use crate::error::{ValidationError, ValidationErrors};
use crate::graph::{Edge, LeaderLink, WeightedDigraph};
use crate::protocol::ControllerState;
use crate::sim::{self, AgentSpec, Body, ControlMode, DoubleIntegratorGains, Integrator, LeaderSpec, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub graph: GraphSection,
    pub agents: Vec<AgentEntry>,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader: Option<LeaderSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub edges: Vec<EdgeEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub leader_links: Vec<LeaderLinkEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    /// Sender, 1-based.
    pub from: usize,
    /// Receiver, 1-based.
    pub to: usize,
    pub w: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderLinkEntry {
    pub agent: usize,
    pub w0: f64,
    pub b0: f64,
    #[serde(rename = "T0")]
    pub delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TwoLinkManipulator,
    DoubleIntegrator,
    /// Constant-velocity body with no inputs.
    Kinematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub model: ModelKind,
    /// Three parameters, or five with gravity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_true: Option<Vec<f64>>,
    pub q0: Vec<f64>,
    pub qdot0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hat0: Option<Vec<f64>>,
    #[serde(rename = "K_diag", default, skip_serializing_if = "Option::is_none")]
    pub k_diag: Option<Vec<f64>>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Gamma_diag", default, skip_serializing_if = "Option::is_none")]
    pub gamma_diag: Option<Vec<f64>>,
    #[serde(rename = "Gamma", default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    #[default]
    Adaptive,
    DoubleIntegrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default)]
    pub mode: ProtocolMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub integrator: Integrator,
}

fn default_dt() -> f64 {
    sim::DEFAULT_DT
}

fn default_duration() -> f64 {
    sim::DEFAULT_DURATION
}

impl Default for SimSection {
    fn default() -> Self {
        Self { dt: default_dt(), duration: default_duration(), integrator: Integrator::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSection {
    pub q0: Vec<f64>,
    pub qdot: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let file: ConfigFile = serde_json::from_str(text)?;
    Ok(file.to_scenario()?)
}

fn invalid(location: impl Into<String>, detail: impl Into<String>) -> ValidationError {
    ValidationError::Invalid { location: location.into(), detail: detail.into() }
}

fn mismatch(location: impl Into<String>, detail: impl Into<String>) -> ValidationError {
    ValidationError::DimensionMismatch { location: location.into(), detail: detail.into() }
}

/// Exactly one of the diagonal and dense forms must be given.
fn gain_matrix(loc: &str, name: &str, diag: &Option<Vec<f64>>, dense: &Option<Vec<Vec<f64>>>, errors: &mut Vec<ValidationError>) -> Option<DMatrix<f64>> {
    match (diag, dense) {
        (Some(d), None) => Some(DMatrix::from_diagonal(&DVector::from_column_slice(d))),
        (None, Some(rows)) => {
            let r = rows.len();
            if rows.iter().any(|row| row.len() != r) {
                errors.push(mismatch(loc, format!("{name} must be square")));
                return None;
            }
            Some(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
        }
        (Some(_), Some(_)) => {
            errors.push(invalid(loc, format!("give either {name}_diag or {name}, not both")));
            None
        }
        (None, None) => {
            errors.push(invalid(loc, format!("missing {name}_diag")));
            None
        }
    }
}

fn agent_index(id: usize, n: usize) -> Option<usize> {
    (1..=n).contains(&id).then(|| id - 1)
}

impl ConfigFile {
    /// Converts to a scenario and runs [`sim::validate`] on it.
    pub fn to_scenario(&self) -> Result<ScenarioConfig, ValidationErrors> {
        let mut errors = Vec::new();
        let n = self.agents.len();
        let adaptive = self.protocol.mode == ProtocolMode::Adaptive;
        if n == 0 {
            errors.push(invalid("agents", "at least one agent is required"));
        }

        let mut edges = Vec::with_capacity(self.graph.edges.len());
        for (k, e) in self.graph.edges.iter().enumerate() {
            match (agent_index(e.to, n), agent_index(e.from, n)) {
                (Some(to), Some(from)) => edges.push(Edge { to, from, w: e.w, b: e.b, delay: e.delay }),
                _ => errors.push(invalid(format!("graph.edges[{k}]"), format!("agent ids must be in 1..={n}"))),
            }
        }
        let mut links = Vec::new();
        for (k, l) in self.graph.leader_links.iter().enumerate() {
            match agent_index(l.agent, n) {
                // an all-zero link is the same as no link
                Some(_) if l.w0 == 0.0 && l.b0 == 0.0 => {}
                Some(agent) => links.push(LeaderLink { agent, w: l.w0, b: l.b0, delay: l.delay }),
                None => errors.push(invalid(format!("graph.leader_links[{k}]"), format!("agent id must be in 1..={n}"))),
            }
        }

        let mut agents = Vec::with_capacity(n);
        let mut ctrls = Vec::with_capacity(n);
        for (i, a) in self.agents.iter().enumerate() {
            let loc = format!("agents[{i}]");
            let body = match a.model {
                ModelKind::TwoLinkManipulator => match &a.a_true {
                    None => {
                        errors.push(invalid(&loc, "two_link_manipulator needs a_true"));
                        None
                    }
                    Some(p) => match ManipulatorParams::from_vec(p.clone(), p.len() == 5) {
                        Ok(params) => Some(Body::Actuated(AgentModel::TwoLinkManipulator(params))),
                        Err(e) => {
                            errors.push(invalid(&loc, e.to_string()));
                            None
                        }
                    },
                },
                ModelKind::DoubleIntegrator => {
                    if a.a_true.as_ref().is_some_and(|p| p.len() != a.q0.len() || p.iter().any(|&x| x != 1.0)) {
                        errors.push(invalid(&loc, "double_integrator parameters are fixed to one per axis"));
                    }
                    match AgentModel::double_integrator(a.q0.len()) {
                        Ok(model) => Some(Body::Actuated(model)),
                        Err(e) => {
                            errors.push(invalid(&loc, e.to_string()));
                            None
                        }
                    }
                }
                ModelKind::Kinematic => {
                    if a.a_true.is_some() {
                        errors.push(invalid(&loc, "kinematic bodies take no parameters"));
                    }
                    Some(Body::Kinematic { dof: a.q0.len() })
                }
            };
            let has_gains = a.a_hat0.is_some() || a.k_diag.is_some() || a.k.is_some() || a.gamma_diag.is_some() || a.gamma.is_some();
            let ctrl = match &body {
                Some(Body::Actuated(model)) if adaptive => {
                    let k = gain_matrix(&loc, "K", &a.k_diag, &a.k, &mut errors);
                    let gamma = gain_matrix(&loc, "Gamma", &a.gamma_diag, &a.gamma, &mut errors);
                    let a_hat = a.a_hat0.as_ref().map_or_else(|| DVector::zeros(model.param_count()), |x| DVector::from_column_slice(x));
                    if a_hat.len() != model.param_count() {
                        errors.push(mismatch(&loc, format!("a_hat0 has {} entries, model needs {}", a_hat.len(), model.param_count())));
                    }
                    match (k, gamma) {
                        (Some(k), Some(gamma)) if a_hat.len() == model.param_count() => match ControllerState::new(a_hat, k, gamma) {
                            Ok(c) => Some(c),
                            Err(source) => {
                                errors.push(ValidationError::BadGain { location: loc.clone(), source });
                                None
                            }
                        },
                        _ => None,
                    }
                }
                _ => {
                    if has_gains {
                        let why = if adaptive { "kinematic bodies take no gains" } else { "per-agent gains are only used by the adaptive protocol" };
                        errors.push(invalid(&loc, why));
                    }
                    None
                }
            };
            if let Some(body) = body {
                agents.push(AgentSpec { body, q0: DVector::from_column_slice(&a.q0), qdot0: DVector::from_column_slice(&a.qdot0) });
            }
            ctrls.push(ctrl);
        }

        let control = match (self.protocol.mode, self.protocol.k) {
            (ProtocolMode::Adaptive, None) => ControlMode::Adaptive(ctrls),
            (ProtocolMode::Adaptive, Some(_)) => {
                errors.push(invalid("protocol.k", "only used by the double_integrator protocol"));
                ControlMode::Adaptive(ctrls)
            }
            (ProtocolMode::DoubleIntegrator, Some(k)) => ControlMode::DoubleIntegrator(DoubleIntegratorGains { k }),
            (ProtocolMode::DoubleIntegrator, None) => {
                errors.push(invalid("protocol.k", "double_integrator protocol needs k"));
                ControlMode::DoubleIntegrator(DoubleIntegratorGains { k: f64::NAN })
            }
        };

        if !errors.is_empty() {
            return Err(ValidationErrors(errors));
        }
        let graph = WeightedDigraph::new(n, edges, links).map_err(|e| ValidationErrors(vec![invalid("graph", e.to_string())]))?;
        let config = ScenarioConfig {
            graph,
            agents,
            control,
            leader: self.leader.as_ref().map(|l| LeaderSpec { q0: DVector::from_column_slice(&l.q0), qdot: DVector::from_column_slice(&l.qdot) }),
            dt: self.sim.dt,
            duration: self.sim.duration,
            integrator: self.sim.integrator,
            output: self.output.as_ref().map(|o| o.path.clone()),
        };
        sim::validate(&config)?;
        Ok(config)
    }

    pub fn from_scenario(config: &ScenarioConfig) -> Self {
        let edges = config
            .graph
            .edges()
            .iter()
            .map(|e| EdgeEntry { from: e.from + 1, to: e.to + 1, w: e.w, b: e.b, delay: e.delay })
            .collect();
        let leader_links = config
            .graph
            .leader_links()
            .iter()
            .map(|l| LeaderLinkEntry { agent: l.agent + 1, w0: l.w, b0: l.b, delay: l.delay })
            .collect();
        let ctrls: Vec<Option<&ControllerState>> = match &config.control {
            ControlMode::Adaptive(c) => c.iter().map(Option::as_ref).collect(),
            ControlMode::DoubleIntegrator(_) => vec![None; config.agents.len()],
        };
        let agents = config
            .agents
            .iter()
            .zip(ctrls)
            .map(|(a, ctrl)| {
                let (model, a_true) = match &a.body {
                    Body::Actuated(AgentModel::TwoLinkManipulator(p)) => (ModelKind::TwoLinkManipulator, Some(p.a().to_vec())),
                    Body::Actuated(AgentModel::DoubleIntegrator { .. }) => (ModelKind::DoubleIntegrator, None),
                    Body::Kinematic { .. } => (ModelKind::Kinematic, None),
                };
                let (k_diag, k) = ctrl.map_or((None, None), |c| split_gain(c.k()));
                let (gamma_diag, gamma) = ctrl.map_or((None, None), |c| split_gain(c.gamma()));
                AgentEntry {
                    model,
                    a_true,
                    q0: a.q0.iter().copied().collect(),
                    qdot0: a.qdot0.iter().copied().collect(),
                    a_hat0: ctrl.map(|c| c.a_hat.iter().copied().collect()),
                    k_diag,
                    k,
                    gamma_diag,
                    gamma,
                }
            })
            .collect();
        let protocol = match config.control {
            ControlMode::Adaptive(_) => ProtocolSection { mode: ProtocolMode::Adaptive, k: None },
            ControlMode::DoubleIntegrator(g) => ProtocolSection { mode: ProtocolMode::DoubleIntegrator, k: Some(g.k) },
        };
        Self {
            graph: GraphSection { edges, leader_links },
            agents,
            protocol,
            sim: SimSection { dt: config.dt, duration: config.duration, integrator: config.integrator },
            leader: config.leader.as_ref().map(|l| LeaderSection { q0: l.q0.iter().copied().collect(), qdot: l.qdot.iter().copied().collect() }),
            output: config.output.as_ref().map(|p| OutputSection { path: p.clone() }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn split_gain(m: &DMatrix<f64>) -> (Option<Vec<f64>>, Option<Vec<Vec<f64>>>) {
    let diagonal = (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0));
    if diagonal {
        (Some(m.diagonal().iter().copied().collect()), None)
    } else {
        (None, Some(m.row_iter().map(|r| r.iter().copied().collect()).collect()))
    }
}
