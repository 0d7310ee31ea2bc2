//! Shared helpers and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use delay_consensus::config;
use delay_consensus::graph::{Edge, WeightedDigraph};
use delay_consensus::sim::ScenarioConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SHIPPED: [&str; 3] = ["leaderless6", "leader6", "di6"];

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

pub fn shipped(name: &str) -> ScenarioConfig {
    config::load(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense row-major Laplacian `L = D - W` built straight from the edge list.
pub fn dense_laplacian(n: usize, edges: &[Edge]) -> Vec<Vec<f64>> {
    let mut l = vec![vec![0.0; n]; n];
    for e in edges {
        l[e.to][e.from] -= e.w;
        l[e.to][e.to] += e.w;
    }
    l
}

/// Solves `γᵀ L = 0`, `Σγ = 1` by Gauss-Jordan elimination with partial
/// pivoting on the stacked system `[Lᵀ; 1ᵀ] γ = [0; 1]`. Returns `None`
/// when the solution is not unique.
pub fn null_vector_oracle(l: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = l.len();
    let rows = n + 1;
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| l[j][i]).chain([0.0]).collect()).collect();
    a.push(vec![1.0; n].into_iter().chain([1.0]).collect());
    let scale = l.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut pivot_row = 0;
    for col in 0..n {
        let best = (pivot_row..rows).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[best][col].abs() < 1e-10 * scale {
            return None;
        }
        a.swap(pivot_row, best);
        let p = a[pivot_row][col];
        for x in a[pivot_row].iter_mut() {
            *x /= p;
        }
        for r in 0..rows {
            if r != pivot_row {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..=n {
                        a[r][c] -= f * a[pivot_row][c];
                    }
                }
            }
        }
        pivot_row += 1;
    }
    Some((0..n).map(|i| a[i][n]).collect())
}

/// Transitive closure by Floyd-Warshall; `reach[j][i]` means information
/// flows from `j` to `i`.
pub fn has_root_by_closure(n: usize, edges: &[Edge]) -> bool {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for e in edges {
        reach[e.from][e.to] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    (0..n).any(|r| reach[r].iter().all(|&x| x))
}

fn random_edge(rng: &mut ChaCha8Rng, to: usize, from: usize) -> Edge {
    let w = rng.random_range(0.1..3.0);
    Edge { to, from, w, b: w * rng.random_range(0.5..2.0), delay: rng.random_range(0..5) as f64 * 0.25 }
}

/// Arbitrary digraph on `1..=8` vertices.
pub fn random_digraph(rng: &mut ChaCha8Rng) -> WeightedDigraph {
    let n = rng.random_range(1..=8);
    let p: f64 = rng.random_range(0.05..0.6);
    let mut edges = Vec::new();
    for to in 0..n {
        for from in 0..n {
            if to != from && rng.random_bool(p) {
                edges.push(random_edge(rng, to, from));
            }
        }
    }
    WeightedDigraph::leaderless(n, edges).unwrap()
}

/// Digraph with a spanning tree: a random tree plus random extra edges.
pub fn random_rooted_digraph(rng: &mut ChaCha8Rng) -> WeightedDigraph {
    let n = rng.random_range(1..=8);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut has = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        has[order[k]][parent] = true;
        edges.push(random_edge(rng, order[k], parent));
    }
    let extra: f64 = rng.random_range(0.0..0.4);
    for to in 0..n {
        for from in 0..n {
            if to != from && !has[to][from] && rng.random_bool(extra) {
                edges.push(random_edge(rng, to, from));
            }
        }
    }
    WeightedDigraph::leaderless(n, edges).unwrap()
}

/// Largest per-coordinate deviation of any agent's final velocity from `target`.
pub fn final_velocity_deviation(trace: &delay_consensus::sim::SimTrace, target: &[f64]) -> f64 {
    let last = trace.len() - 1;
    trace
        .agents
        .iter()
        .flat_map(|a| trace.row(&a.qdot, last).iter().zip(target).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
