#![allow(dead_code)]

use edp_core::model::{Fleet, NodeSpec};
use edp_core::topology::Topology;
use edp_core::NodeId;
use rand::Rng;

/// A valid quadratic node: strictly convex cost, convex loss small enough
/// that `1 − φ'` stays positive on the whole interval.
pub fn random_node<R: Rng>(rng: &mut R, id: u32, width: (f64, f64)) -> NodeSpec {
    let b = rng.gen_range(0.5..5.0);
    let c = rng.gen_range(0.01..0.5);
    let x_min = rng.gen_range(0.0..5.0);
    let x_max = x_min + rng.gen_range(width.0..width.1);
    let alpha = rng.gen_range(1e-4..0.4 / x_max.max(1.0));
    NodeSpec::quadratic(id, (rng.gen_range(0.0..2.0), b, c), alpha, x_min, x_max, 0.0)
}

/// Random fleet whose demand sits at fraction `fill` of the way from the
/// smallest to the largest deliverable supply. `fill` outside `[0, 1]` gives
/// an infeasible instance.
pub fn random_fleet<R: Rng>(rng: &mut R, n: usize, width: (f64, f64), fill: f64) -> Fleet {
    let mut nodes: Vec<NodeSpec> = (1..=n as u32).map(|id| random_node(rng, id, width)).collect();
    let lo: f64 = nodes.iter().map(|s| s.net_output(s.x_min)).sum();
    let hi: f64 = nodes.iter().map(|s| s.net_output(s.x_max)).sum();
    let total = lo + fill * (hi - lo);
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    for (s, w) in nodes.iter_mut().zip(&weights) {
        s.demand = total * w / wsum;
    }
    Fleet::new(nodes).expect("generated nodes satisfy the assumptions")
}

pub fn path(n: u32) -> Topology {
    Topology::build((1..=n).map(NodeId), (1..n).map(|i| (NodeId(i), NodeId(i + 1)))).unwrap()
}

pub fn ids(n: u32) -> impl Iterator<Item = NodeId> {
    (1..=n).map(NodeId)
}
