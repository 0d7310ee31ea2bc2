mod common;

use common::*;
use delay_consensus::dynamics::AgentModel;
use delay_consensus::graph::{Edge, WeightedDigraph};
use delay_consensus::sim::{self, AgentSpec, Body, ControlMode, DoubleIntegratorGains, Integrator, ScenarioConfig};
use nalgebra::DVector;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn with_duration(mut c: ScenarioConfig, duration: f64) -> ScenarioConfig {
    c.duration = duration;
    c
}

fn di_pair(delay: f64, v1: f64, v2: f64) -> ScenarioConfig {
    let e = |to, from| Edge { to, from, w: 1.0, b: 1.0, delay };
    let agent = |qd: f64| AgentSpec { body: Body::Actuated(AgentModel::double_integrator(1).unwrap()), q0: v(&[0.0]), qdot0: v(&[qd]) };
    ScenarioConfig {
        graph: WeightedDigraph::leaderless(2, vec![e(0, 1), e(1, 0)]).unwrap(),
        agents: vec![agent(v1), agent(v2)],
        control: ControlMode::DoubleIntegrator(DoubleIntegratorGains { k: 1.0 }),
        leader: None,
        dt: 0.005,
        duration: 40.0,
        integrator: Integrator::Rk4,
        output: None,
    }
}

#[test]
fn runs_are_deterministic() {
    for name in SHIPPED {
        let c = with_duration(shipped(name), 5.0);
        let a = sim::run(&c).unwrap();
        let b = sim::run(&c).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn halving_the_step_changes_endpoint_errors_little() {
    for name in SHIPPED {
        let coarse = with_duration(shipped(name), 10.0);
        let fine = ScenarioConfig { dt: coarse.dt / 2.0, ..coarse.clone() };
        let vbar = sim::predicted_velocity(&coarse).unwrap();
        let mc = sim::compute_metrics(&sim::run(&coarse).unwrap(), &vbar);
        let mf = sim::compute_metrics(&sim::run(&fine).unwrap(), &vbar);
        let pairs = [
            ("velocity", mc.velocity_consensus_error, mf.velocity_consensus_error),
            ("position", mc.position_consensus_error, mf.position_consensus_error),
            ("observer", mc.observer_error, mf.observer_error),
        ];
        for (what, a, b) in pairs {
            let rel = (a - b).abs() / a.max(b).max(1e-12);
            assert!(rel < 0.1, "{name} {what}: {a:e} vs {b:e}");
        }
    }
}

#[test]
fn leader_matches_leader_as_agent() {
    let c = with_duration(shipped("leader6"), 20.0);
    let aug = c.leader_as_agent().unwrap();
    let a = sim::run(&c).unwrap();
    let b = sim::run(&aug).unwrap();
    let mut worst: f64 = 0.0;
    for (i, agent) in a.agents.iter().enumerate() {
        let other = &b.agents[i + 1];
        for (x, y) in [(&agent.q, &other.q), (&agent.qdot, &other.qdot), (&agent.v, &other.v)] {
            worst = x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()).fold(worst, f64::max);
        }
    }
    assert!(worst <= 1e-9, "{worst:e}");
    // the stand-in leader moves exactly like the leader
    let lead = a.leader.as_ref().unwrap();
    let last = b.len() - 1;
    let expected = lead.position(b.times[last]);
    assert!((v(b.row(&b.agents[0].q, last)) - expected).amax() < 1e-12);
}

#[test]
fn zero_delays_reach_the_weighted_average() {
    let c = with_duration(shipped("leaderless6").with_scaled_delays(0.0).unwrap(), 30.0);
    let vbar = sim::predicted_velocity(&c).unwrap();
    let gamma = [0.4, 0.2, 0.1, 0.1, 0.1, 0.1];
    let mut plain = DVector::zeros(2);
    for (g, a) in gamma.iter().zip(&c.agents) {
        plain += &a.qdot0 * *g;
    }
    assert!((&vbar - &plain).amax() < 1e-12, "{vbar} vs {plain}");
    let trace = sim::run(&c).unwrap();
    assert!(final_velocity_deviation(&trace, vbar.as_slice()) < 1e-3);
}

#[test]
fn double_integrator_pair_meets_at_delayed_average() {
    for delay in [0.0, 0.25, 1.0] {
        let c = di_pair(delay, 1.0, -0.2);
        // γ = [½, ½], denominator 1 + ½(T + T)
        let expected = 0.4 / (1.0 + delay);
        let vbar = sim::predicted_velocity(&c).unwrap();
        assert!((vbar[0] - expected).abs() < 1e-14);
        let trace = sim::run(&c).unwrap();
        let m = sim::compute_metrics(&trace, &vbar);
        assert!(m.velocity_gap < 1e-6, "T = {delay}: gap {:e}", m.velocity_gap);
        assert!(m.position_consensus_error < 1e-6, "T = {delay}: {:e}", m.position_consensus_error);
        assert_eq!(m.lyapunov_violations, 0);
    }
}

#[test]
fn euler_and_rk4_agree_on_the_limit() {
    let mut c = di_pair(0.5, 0.3, 0.9);
    let vbar = sim::predicted_velocity(&c).unwrap();
    for integrator in [Integrator::Euler, Integrator::Rk4Hold, Integrator::Rk4] {
        c.integrator = integrator;
        let trace = sim::run(&c).unwrap();
        assert!(final_velocity_deviation(&trace, vbar.as_slice()) < 1e-3, "{integrator:?}");
    }
}

#[test]
fn random_rooted_networks_of_double_integrators_agree_with_prediction() {
    let mut r = rng(11);
    for _ in 0..10 {
        let g = random_rooted_digraph(&mut r);
        let agents = (0..g.n())
            .map(|i| AgentSpec {
                body: Body::Actuated(AgentModel::double_integrator(1).unwrap()),
                q0: v(&[0.0]),
                qdot0: v(&[(i as f64 * 0.37).sin()]),
            })
            .collect();
        let c = ScenarioConfig {
            graph: g,
            agents,
            control: ControlMode::DoubleIntegrator(DoubleIntegratorGains { k: 1.0 }),
            leader: None,
            dt: 0.005,
            duration: 80.0,
            integrator: Integrator::Rk4,
            output: None,
        };
        let vbar = sim::predicted_velocity(&c).unwrap();
        match sim::run(&c) {
            Ok(trace) => {
                let gap = final_velocity_deviation(&trace, vbar.as_slice());
                // slow graphs may still be converging; the limit must not be wrong by much
                assert!(gap < 5e-2, "gap {gap:e} on {:?}", c.graph);
            }
            Err(e) => panic!("{e} on {:?}", c.graph),
        }
    }
}
