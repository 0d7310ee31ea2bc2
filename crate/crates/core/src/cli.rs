//! Command-line front end.
//!
//! Output files go next to the configured trace path, or to the current
//! directory. `DELAY_CONSENSUS_OUT` replaces the directory in both cases.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{self, ConfigError};
use crate::export::{self, TraceTable};
use crate::graph::{self, Weights};
use crate::sim::{self, ScenarioConfig, SimError};

pub const OUT_DIR_ENV: &str = "DELAY_CONSENSUS_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "delay-consensus", version, about = "Delayed second-order consensus of networked mechanical agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Graph analysis and predicted consensus velocity of a scenario.
    Analyze { config: PathBuf },
    /// Run a scenario and write the trace CSV and metrics JSON.
    Simulate {
        config: PathBuf,
        /// Step size in seconds (overrides the config).
        #[arg(long)]
        dt: Option<f64>,
        /// Simulated time in seconds (overrides the config).
        #[arg(long)]
        duration: Option<f64>,
        /// Keep every N-th step in the trace (the last step is always kept).
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        stride: u64,
        /// Accepted for scripting compatibility; runs are always deterministic.
        #[arg(long)]
        seedless: bool,
    },
    /// Write a matplotlib script and data manifest for a trace.
    Plot {
        trace: PathBuf,
        /// 1-based coordinates to plot.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        coords: Vec<usize>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(SimError),
    #[error(transparent)]
    Trace(#[from] export::TraceReadError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Sim(SimError::Diverged { .. }) => EXIT_DIVERGED,
            _ => EXIT_INVALID,
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    export::write_atomic(path, bytes).map_err(|source| CliError::Write { path: path.to_owned(), source })
}

fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

/// Trace destination for a scenario loaded from `config_path`.
pub fn trace_path(config: &ScenarioConfig, config_path: &Path) -> PathBuf {
    let default_name = PathBuf::from(format!("{}.trace.csv", stem(config_path)));
    let configured = config.output.clone().unwrap_or(default_name);
    match env_out_dir() {
        Some(dir) => dir.join(configured.file_name().expect("trace path has a file name")),
        None => configured,
    }
}

/// `results/run.trace.csv` -> `results/run.metrics.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let base = name.strip_suffix(".trace.csv").or_else(|| name.strip_suffix(".csv")).unwrap_or(&name);
    path.with_file_name(format!("{base}.{suffix}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub agents: usize,
    pub leader_mode: bool,
    /// Spanning tree of the graph the run needs (leader-augmented in leader mode).
    pub spanning_tree: bool,
    /// Left null vector of the control Laplacian; absent when the follower
    /// graph alone has no spanning tree.
    pub gamma: Option<Vec<f64>>,
    pub gamma_observer: Option<Vec<f64>>,
    pub gamma_sum: Option<f64>,
    pub sigma_s: Option<f64>,
    pub predicted_velocity: Vec<f64>,
    /// `1 + Σ_j w_ij T_ij` per agent, leader link included.
    pub delay_factors: Vec<f64>,
}

pub fn analyze(config: &ScenarioConfig) -> Result<AnalysisReport, CliError> {
    let g = &config.graph;
    let follower_tree = graph::has_spanning_tree(g);
    let (gamma, gamma_observer, sigma_s) = if follower_tree {
        let gamma = graph::compute_gamma(&graph::build_laplacian(g, Weights::Control)).map_err(|e| CliError::Sim(e.into()))?;
        let gamma_b = graph::compute_gamma(&graph::build_laplacian(g, Weights::Observer)).map_err(|e| CliError::Sim(e.into()))?;
        let sigma = graph::compute_sigma_s(g, &gamma);
        (Some(gamma), Some(gamma_b), Some(sigma))
    } else {
        (None, None, None)
    };
    let predicted = sim::predicted_velocity(config).map_err(|e| CliError::Sim(e.into()))?;
    let to_vec = |v: &nalgebra::DVector<f64>| v.iter().copied().collect::<Vec<_>>();
    Ok(AnalysisReport {
        agents: g.n(),
        leader_mode: config.leader.is_some(),
        spanning_tree: graph::has_spanning_tree_with_leader(g),
        gamma_sum: gamma.as_ref().map(|x| x.sum()),
        gamma: gamma.as_ref().map(to_vec),
        gamma_observer: gamma_observer.as_ref().map(to_vec),
        sigma_s,
        predicted_velocity: to_vec(&predicted),
        delay_factors: (0..g.n()).map(|i| g.delay_factor(i)).collect(),
    })
}

fn fmt_vec(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

impl std::fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "agents: {}{}", self.agents, if self.leader_mode { " (+ leader)" } else { "" })?;
        writeln!(f, "spanning tree: {}", if self.spanning_tree { "yes" } else { "no" })?;
        match (&self.gamma, self.gamma_sum, self.sigma_s) {
            (Some(g), Some(sum), Some(sigma)) => {
                writeln!(f, "gamma: {} (sum {sum:.6})", fmt_vec(g))?;
                if self.gamma_observer.as_ref() != Some(g) {
                    writeln!(f, "gamma (observer weights): {}", fmt_vec(self.gamma_observer.as_deref().unwrap_or(&[])))?;
                }
                writeln!(f, "sigma_S: {sigma:.6}")?;
            }
            _ => writeln!(f, "gamma: n/a (follower graph has no spanning tree)")?,
        }
        let label = if self.leader_mode { "leader velocity" } else { "predicted consensus velocity" };
        writeln!(f, "{label}: {}", fmt_vec(&self.predicted_velocity))?;
        write!(f, "delay factors: {}", fmt_vec(&self.delay_factors))
    }
}

pub fn cmd_analyze(config_path: &Path) -> Result<(AnalysisReport, PathBuf), CliError> {
    let config = config::load(config_path)?;
    let report = analyze(&config)?;
    let trace = trace_path(&config, config_path);
    let out = sibling(&trace, "analysis.json");
    write(&out, serde_json::to_string_pretty(&report).expect("report serializes").as_bytes())?;
    Ok((report, out))
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub stride: usize,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self { dt: None, duration: None, stride: 1 }
    }
}

#[derive(Debug)]
pub struct SimulateOutput {
    pub trace_path: PathBuf,
    pub metrics_path: PathBuf,
    pub metrics: sim::Metrics,
}

/// Runs a scenario, writes its trace and metrics. A diverged run still
/// writes what it recorded before returning the error.
pub fn cmd_simulate(config_path: &Path, opts: &SimulateOptions) -> Result<SimulateOutput, CliError> {
    let text = std::fs::read_to_string(config_path).map_err(|source| ConfigError::Io { path: config_path.to_owned(), source })?;
    let mut file: config::ConfigFile = serde_json::from_str(&text).map_err(ConfigError::Parse)?;
    if let Some(dt) = opts.dt {
        file.sim.dt = dt;
    }
    if let Some(duration) = opts.duration {
        file.sim.duration = duration;
    }
    let config = file.to_scenario().map_err(ConfigError::Invalid)?;
    let trace_path = trace_path(&config, config_path);
    let metrics_path = sibling(&trace_path, "metrics.json");
    let predicted = sim::predicted_velocity(&config).map_err(|e| CliError::Sim(e.into()))?;
    let (trace, failure) = match sim::run(&config) {
        Ok(trace) => (trace, None),
        Err(SimError::Diverged { time, agent, trace }) => {
            let t = (*trace).clone();
            (t, Some(SimError::Diverged { time, agent, trace }))
        }
        Err(e) => return Err(CliError::Sim(e)),
    };
    let metrics = sim::compute_metrics(&trace, &predicted);
    write(&trace_path, &export::trace_csv(&trace, opts.stride))?;
    write(&metrics_path, serde_json::to_string_pretty(&metrics).expect("metrics serialize").as_bytes())?;
    match failure {
        Some(e) => Err(CliError::Sim(e)),
        None => Ok(SimulateOutput { trace_path, metrics_path, metrics }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotFigure {
    pub quantity: String,
    pub coordinate: usize,
    pub columns: Vec<String>,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotManifest {
    pub trace: String,
    pub agents: usize,
    pub dof: usize,
    pub rows: usize,
    pub predicted_velocity: Option<Vec<f64>>,
    pub leader_q0: Option<Vec<f64>>,
    pub leader_qdot: Option<Vec<f64>>,
    pub figures: Vec<PlotFigure>,
}

pub fn plot_manifest(table: &TraceTable, trace_name: &str, image_base: &str, coords: &[usize], metrics: Option<&serde_json::Value>) -> Result<PlotManifest, CliError> {
    if let Some(&bad) = coords.iter().find(|&&c| c == 0 || c > table.dof) {
        return Err(CliError::Usage(format!("coordinate {bad} is outside 1..={}", table.dof)));
    }
    let floats = |key: &str| -> Option<Vec<f64>> {
        metrics?.get(key)?.as_array()?.iter().map(serde_json::Value::as_f64).collect()
    };
    let mut figures = Vec::new();
    for &c in coords {
        for (quantity, prefix) in [("position", "q"), ("velocity", "qdot")] {
            figures.push(PlotFigure {
                quantity: quantity.into(),
                coordinate: c,
                columns: (1..=table.n_agents).map(|i| format!("{prefix}_{i}_{c}")).collect(),
                image: format!("{image_base}.{quantity}_{c}.png"),
            });
        }
    }
    Ok(PlotManifest {
        trace: trace_name.into(),
        agents: table.n_agents,
        dof: table.dof,
        rows: table.rows.len(),
        predicted_velocity: floats("predicted_velocity"),
        leader_q0: floats("leader_q0"),
        leader_qdot: floats("leader_qdot"),
        figures,
    })
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
# Renders the figures listed in the manifest next to this script.
import csv
import json
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, MANIFEST)) as f:
    manifest = json.load(f)

with open(os.path.join(here, manifest["trace"]), newline="") as f:
    reader = csv.reader(f)
    header = next(reader)
    rows = [[float(x) for x in r] for r in reader]
col = {name: k for k, name in enumerate(header)}
t = [r[0] for r in rows]

for fig in manifest["figures"]:
    c = fig["coordinate"] - 1
    plt.figure(figsize=(7, 4))
    for i, name in enumerate(fig["columns"]):
        plt.plot(t, [r[col[name]] for r in rows], label="agent %d" % (i + 1))
    lq0, lqd = manifest["leader_q0"], manifest["leader_qdot"]
    if lq0 is not None:
        if fig["quantity"] == "position":
            plt.plot(t, [lq0[c] + lqd[c] * s for s in t], "k--", label="leader")
        else:
            plt.plot(t, [lqd[c]] * len(t), "k--", label="leader")
    elif fig["quantity"] == "velocity" and manifest["predicted_velocity"] is not None:
        plt.axhline(manifest["predicted_velocity"][c], color="k", linestyle="--", label="predicted")
    plt.xlabel("t [s]")
    plt.ylabel("%s %d" % (fig["quantity"], fig["coordinate"]))
    plt.legend(loc="best", fontsize="small")
    plt.tight_layout()
    plt.savefig(os.path.join(here, fig["image"]), dpi=120)
    plt.close()
    print(fig["image"])
sys.exit(0)
"#;

/// Writes `<trace>.plot.py` and `<trace>.plot.json`. The predicted velocity
/// and leader come from the metrics file beside the trace, when present.
pub fn cmd_plot(trace: &Path, coords: &[usize]) -> Result<(PathBuf, PathBuf), CliError> {
    let table = export::read_trace(trace)?;
    let metrics_path = sibling(trace, "metrics.json");
    let metrics: Option<serde_json::Value> = std::fs::read(&metrics_path).ok().and_then(|b| serde_json::from_slice(&b).ok());
    let dir = env_out_dir().unwrap_or_else(|| trace.parent().map(Path::to_path_buf).unwrap_or_default());
    let script = dir.join(sibling(trace, "plot.py").file_name().expect("file name"));
    let manifest_path = dir.join(sibling(trace, "plot.json").file_name().expect("file name"));
    let trace_abs = std::fs::canonicalize(trace).map_err(|e| CliError::Trace(e.into()))?;
    let dir_abs = std::fs::create_dir_all(&dir).and_then(|_| std::fs::canonicalize(&dir)).map_err(|source| CliError::Write { path: dir.clone(), source })?;
    let trace_name = match trace_abs.strip_prefix(&dir_abs) {
        Ok(rel) => rel.to_string_lossy().into_owned(),
        Err(_) => trace_abs.to_string_lossy().into_owned(),
    };
    let base = stem(&sibling(trace, "x"));
    let manifest = plot_manifest(&table, &trace_name, &base, coords, metrics.as_ref())?;
    write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes())?;
    let manifest_name = format!("{:?}", manifest_path.file_name().expect("file name").to_string_lossy());
    write(&script, PLOT_SCRIPT.replace("MANIFEST", &manifest_name).as_bytes())?;
    Ok((script, manifest_path))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Analyze { config } => cmd_analyze(config).map(|(report, out)| {
            println!("{report}");
            println!("report: {}", out.display());
        }),
        Command::Simulate { config, dt, duration, stride, seedless: _ } => {
            let opts = SimulateOptions { dt: *dt, duration: *duration, stride: *stride as usize };
            cmd_simulate(config, &opts).map(|out| {
                let m = &out.metrics;
                println!("trace: {}", out.trace_path.display());
                println!("metrics: {}", out.metrics_path.display());
                println!("predicted velocity: {}", fmt_vec(&m.predicted_velocity));
                println!("simulated velocity: {} (gap {:e})", fmt_vec(&m.simulated_velocity), m.velocity_gap);
                println!("velocity consensus error: {:e}", m.velocity_consensus_error);
                println!("position consensus error: {:e}", m.position_consensus_error);
                if let Some(e) = m.leader_tracking_error {
                    println!("leader tracking error: {e:e}");
                }
                println!("lyapunov violations: {}", m.lyapunov_violations);
            })
        }
        Command::Plot { trace, coords } => cmd_plot(trace, coords).map(|(script, manifest)| {
            println!("script: {}", script.display());
            println!("manifest: {}", manifest.display());
        }),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
