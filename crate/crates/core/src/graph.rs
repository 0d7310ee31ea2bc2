//! Weighted directed communication graphs.
//!
//! An edge `(i, j)` means agent `i` receives information from agent `j`
//! (`j` is a neighbor of `i`). Each edge carries a control weight `w`, an
//! observer weight `b` and a constant delay in seconds. The graph Laplacian
//! is built row-wise from the out-going weights of the receiving agent, so
//! `L·1 = 0` always holds and the left null vector `gamma` weights the
//! agents' initial velocities in the consensus value.

use nalgebra::{DMatrix, DVector};

use crate::error::GraphError;

/// Directed edge `to <- from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Receiving agent.
    pub to: usize,
    /// Sending agent (neighbor of `to`).
    pub from: usize,
    pub w: f64,
    pub b: f64,
    /// Communication delay in seconds.
    pub delay: f64,
}

/// Link from the virtual leader to one follower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderLink {
    pub agent: usize,
    pub w: f64,
    pub b: f64,
    pub delay: f64,
}

/// Which adjacency matrix to use when building a Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weights {
    Control,
    Observer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    edges: Vec<Edge>,
    leader_links: Vec<LeaderLink>,
}

impl WeightedDigraph {
    /// Builds a graph, rejecting self loops, duplicate edges, out of range
    /// vertices, inconsistent weight patterns and invalid delays.
    pub fn new(n: usize, edges: Vec<Edge>, leader_links: Vec<LeaderLink>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = vec![false; n * n];
        for e in &edges {
            if e.to >= n || e.from >= n {
                return Err(GraphError::VertexOutOfRange { to: e.to, from: e.from, n });
            }
            if e.to == e.from {
                return Err(GraphError::SelfLoop(e.to));
            }
            if std::mem::replace(&mut seen[e.to * n + e.from], true) {
                return Err(GraphError::DuplicateEdge { to: e.to, from: e.from });
            }
            check_link(e.w, e.b, e.delay).map_err(|reason| GraphError::BadEdge { to: e.to, from: e.from, reason })?;
        }
        let mut led = vec![false; n];
        for l in &leader_links {
            if l.agent >= n {
                return Err(GraphError::VertexOutOfRange { to: l.agent, from: l.agent, n });
            }
            if std::mem::replace(&mut led[l.agent], true) {
                return Err(GraphError::DuplicateLeaderLink(l.agent));
            }
            check_link(l.w, l.b, l.delay).map_err(|reason| GraphError::BadLeaderLink { agent: l.agent, reason })?;
        }
        Ok(Self { n, edges, leader_links })
    }

    /// Graph without leader links.
    pub fn leaderless(n: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        Self::new(n, edges, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn leader_links(&self) -> &[LeaderLink] {
        &self.leader_links
    }

    pub fn has_leader(&self) -> bool {
        !self.leader_links.is_empty()
    }

    /// Edges received by agent `i`, in insertion order.
    pub fn in_edges(&self, i: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.to == i)
    }

    pub fn leader_link(&self, i: usize) -> Option<&LeaderLink> {
        self.leader_links.iter().find(|l| l.agent == i)
    }

    /// Same graph with every delay (including leader links) multiplied by `factor`.
    pub fn scale_delays(&self, factor: f64) -> Result<Self, GraphError> {
        let edges = self.edges.iter().map(|e| Edge { delay: e.delay * factor, ..*e }).collect();
        let links = self.leader_links.iter().map(|l| LeaderLink { delay: l.delay * factor, ..*l }).collect();
        Self::new(self.n, edges, links)
    }

    /// The `(n+1)`-vertex graph in which the leader is vertex 0 with no
    /// in-edges and agent `i` becomes vertex `i + 1`.
    pub fn leader_augmented(&self) -> Self {
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge { to: e.to + 1, from: e.from + 1, ..*e })
            .collect();
        edges.extend(self.leader_links.iter().map(|l| Edge { to: l.agent + 1, from: 0, w: l.w, b: l.b, delay: l.delay }));
        Self { n: self.n + 1, edges, leader_links: Vec::new() }
    }

    /// `1 + Σ_j w_ij T_ij` (plus the leader term when linked).
    pub fn delay_factor(&self, i: usize) -> f64 {
        let own: f64 = self.in_edges(i).map(|e| e.w * e.delay).sum();
        let lead = self.leader_link(i).map_or(0.0, |l| l.w * l.delay);
        1.0 + own + lead
    }

    pub fn max_delay(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| e.delay)
            .chain(self.leader_links.iter().map(|l| l.delay))
            .fold(0.0, f64::max)
    }
}

fn check_link(w: f64, b: f64, delay: f64) -> Result<(), &'static str> {
    if !(w.is_finite() && b.is_finite()) || w < 0.0 || b < 0.0 {
        return Err("weights must be finite and nonnegative");
    }
    if (w > 0.0) != (b > 0.0) || w == 0.0 {
        return Err("an edge needs w > 0 and b > 0");
    }
    if !delay.is_finite() || delay < 0.0 {
        return Err("delay must be finite and >= 0");
    }
    Ok(())
}

/// Laplacian of the control weights `W` (or observer weights `B`).
pub fn build_laplacian(g: &WeightedDigraph, which: Weights) -> DMatrix<f64> {
    let n = g.n();
    let mut l = DMatrix::zeros(n, n);
    for e in g.edges() {
        let w = match which {
            Weights::Control => e.w,
            Weights::Observer => e.b,
        };
        l[(e.to, e.from)] -= w;
        l[(e.to, e.to)] += w;
    }
    l
}

/// True iff some vertex is reachable from every other vertex along `i -> j`
/// steps, where `j` is a neighbor of `i`.
pub fn has_spanning_tree(g: &WeightedDigraph) -> bool {
    let n = g.n();
    // reverse adjacency: who listens to k
    let mut listeners = vec![Vec::new(); n];
    for e in g.edges() {
        listeners[e.from].push(e.to);
    }
    // k is a root iff a reverse search from k visits everyone
    (0..n).any(|root| {
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        seen[root] = true;
        let mut count = 1;
        while let Some(k) = stack.pop() {
            for &i in &listeners[k] {
                if !seen[i] {
                    seen[i] = true;
                    count += 1;
                    stack.push(i);
                }
            }
        }
        count == n
    })
}

/// Spanning tree check for the graph joined with its leader (vertex 0).
pub fn has_spanning_tree_with_leader(g: &WeightedDigraph) -> bool {
    if g.has_leader() {
        has_spanning_tree(&g.leader_augmented())
    } else {
        has_spanning_tree(g)
    }
}

const GAMMA_CLAMP: f64 = 1e-12;
const SIMPLE_ZERO_TOL: f64 = 1e-7;

/// Normalized nonnegative left null vector of a Laplacian.
///
/// Taken from the right singular vector of `Lᵀ` belonging to the smallest
/// singular value. The zero eigenvalue must be simple: the second smallest
/// singular value has to exceed `1e-7·‖L‖`.
pub fn compute_gamma(l: &DMatrix<f64>) -> Result<DVector<f64>, GraphError> {
    let n = l.nrows();
    assert_eq!(n, l.ncols(), "Laplacian must be square");
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let norm = l.norm();
    let svd = l.transpose().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let second = svd.singular_values[order[1]];
    if !(second > SIMPLE_ZERO_TOL * norm) {
        return Err(GraphError::NoSpanningTree);
    }
    let null = v_t.row(order[0]).transpose();
    let sum: f64 = null.sum();
    if sum.abs() < f64::EPSILON {
        return Err(GraphError::NoSpanningTree);
    }
    let mut gamma = null / sum;
    for g in gamma.iter_mut() {
        if *g < GAMMA_CLAMP {
            *g = 0.0;
        }
    }
    let total = gamma.sum();
    Ok(gamma / total)
}

/// `1 / (1 + Σ_i Σ_j γ_i w_ij T_ij)`.
pub fn compute_sigma_s(g: &WeightedDigraph, gamma: &DVector<f64>) -> f64 {
    let sum: f64 = g.edges().iter().map(|e| gamma[e.to] * e.w * e.delay).sum();
    1.0 / (1.0 + sum)
}

/// Consensus value of the delayed velocity observer started at `v0`.
///
/// `gamma` must be the left null vector of the observer Laplacian (`B`).
pub fn predict_consensus_velocity(g: &WeightedDigraph, gamma: &DVector<f64>, v0: &[DVector<f64>]) -> DVector<f64> {
    assert_eq!(v0.len(), g.n(), "one initial velocity per agent");
    let m = v0[0].len();
    let denom = 1.0 + g.edges().iter().map(|e| gamma[e.to] * e.b * e.delay).sum::<f64>();
    let weighted = v0.iter().zip(gamma.iter()).fold(DVector::zeros(m), |acc, (v, &gk)| acc + v * gk);
    weighted / denom
}

/// Laplacian, left null vector and delay scaling of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianBundle {
    pub laplacian: DMatrix<f64>,
    pub gamma: DVector<f64>,
    /// Left null vector of the observer Laplacian; equals `gamma` whenever `B` is a multiple of `W`.
    pub gamma_observer: DVector<f64>,
    pub sigma_s: f64,
    pub has_spanning_tree: bool,
}

impl LaplacianBundle {
    pub fn analyze(g: &WeightedDigraph) -> Result<Self, GraphError> {
        let has_tree = has_spanning_tree(g);
        if !has_tree {
            return Err(GraphError::NoSpanningTree);
        }
        let laplacian = build_laplacian(g, Weights::Control);
        let gamma = compute_gamma(&laplacian)?;
        let gamma_observer = compute_gamma(&build_laplacian(g, Weights::Observer))?;
        let sigma_s = compute_sigma_s(g, &gamma);
        Ok(Self { laplacian, gamma, gamma_observer, sigma_s, has_spanning_tree: has_tree })
    }
}
