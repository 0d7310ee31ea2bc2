//! Laplacian, left null vector and predicted consensus velocity of a small
//! delayed network, built in code rather than loaded from a file.
//!
//! ```bash
//! cargo run --example graph_analysis
//! ```

use delay_consensus::graph::{self, Edge, LaplacianBundle, WeightedDigraph, Weights};
use nalgebra::DVector;

fn main() {
    // directed ring 0 <- 1 <- 2 <- 3 <- 0 with one chord; `to` receives from `from`
    let e = |to, from, delay| Edge { to, from, w: 1.0, b: 1.5, delay };
    let edges = vec![e(0, 1, 0.5), e(1, 2, 0.5), e(2, 3, 0.5), e(3, 0, 0.5), e(0, 2, 1.0)];
    let g = WeightedDigraph::leaderless(4, edges).expect("valid graph");

    let bundle = LaplacianBundle::analyze(&g).expect("ring has a spanning tree");
    println!("L_w =\n{}", bundle.laplacian);
    println!("gamma = {:.4?}", bundle.gamma.as_slice());
    println!("sigma_S = {:.6}", bundle.sigma_s);

    let v0: Vec<DVector<f64>> = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.5], [0.5, 0.5]].iter().map(|x| DVector::from_column_slice(x)).collect();
    let gamma_b = graph::compute_gamma(&graph::build_laplacian(&g, Weights::Observer)).unwrap();
    let vbar = graph::predict_consensus_velocity(&g, &gamma_b, &v0);
    println!("predicted consensus velocity = {:.4?}", vbar.as_slice());

    // without delays the prediction is the plain gamma-weighted average
    let g0 = g.scale_delays(0.0).unwrap();
    println!("same graph, no delay        = {:.4?}", graph::predict_consensus_velocity(&g0, &gamma_b, &v0).as_slice());

    // with nothing flowing into vertices 0 and 3 there are two roots
    let cut: Vec<Edge> = g.edges().iter().copied().filter(|e| e.to != 0 && e.to != 3).collect();
    let cut = WeightedDigraph::leaderless(4, cut).unwrap();
    println!("spanning tree after cut: {}", graph::has_spanning_tree(&cut));
    println!("gamma after cut: {:?}", graph::compute_gamma(&graph::build_laplacian(&cut, Weights::Control)).err());
}
