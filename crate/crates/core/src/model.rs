//! Problem instance: per-node cost and loss functions, capacity intervals and
//! demands, together with the standing-assumption checks and the
//! supply/demand feasibility test.
//!
//! The dispatch problem is
//!
//! ```text
//! minimize   Σ f_i(x_i)
//! subject to Σ d_i = Σ (x_i − φ_i(x_i)),   x_i ∈ [x_min_i, x_max_i]
//! ```
//!
//! where `f_i` is the generation cost and `φ_i` the (separable) loss of node `i`.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default number of interior samples used when checking generic functions.
pub const DEFAULT_SAMPLES: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

/// A continuously differentiable scalar map supplied by the caller.
pub trait SmoothFn: fmt::Debug + Send + Sync {
    fn eval(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// Cost or loss function of a single node.
#[derive(Debug, Clone)]
pub enum ScalarFunction {
    /// `a + b·x + c·x²`
    Quadratic { a: f64, b: f64, c: f64 },
    /// Arbitrary C¹ function, trusted only on `[lo, hi]`.
    Generic { func: Arc<dyn SmoothFn>, lo: f64, hi: f64 },
}

impl ScalarFunction {
    pub fn quadratic(a: f64, b: f64, c: f64) -> Self {
        ScalarFunction::Quadratic { a, b, c }
    }

    /// Pure quadratic loss `alpha·x²`.
    pub fn quadratic_loss(alpha: f64) -> Self {
        ScalarFunction::Quadratic {
            a: 0.0,
            b: 0.0,
            c: alpha,
        }
    }

    pub fn zero() -> Self {
        ScalarFunction::quadratic(0.0, 0.0, 0.0)
    }

    pub fn generic(func: impl SmoothFn + 'static, lo: f64, hi: f64) -> Self {
        ScalarFunction::Generic {
            func: Arc::new(func),
            lo,
            hi,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarFunction::Quadratic { a, b, c } => a + x * (b + c * x),
            ScalarFunction::Generic { func, .. } => func.eval(x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ScalarFunction::Quadratic { b, c, .. } => b + 2.0 * c * x,
            ScalarFunction::Generic { func, .. } => func.derivative(x),
        }
    }

    pub fn as_quadratic(&self) -> Option<(f64, f64, f64)> {
        match *self {
            ScalarFunction::Quadratic { a, b, c } => Some((a, b, c)),
            ScalarFunction::Generic { .. } => None,
        }
    }

    fn covers(&self, lo: f64, hi: f64) -> bool {
        match *self {
            ScalarFunction::Quadratic { .. } => true,
            ScalarFunction::Generic { lo: dl, hi: dh, .. } => dl <= lo && hi <= dh,
        }
    }
}

impl PartialEq for ScalarFunction {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ScalarFunction::Quadratic { a, b, c }, ScalarFunction::Quadratic { a: a2, b: b2, c: c2 }) => {
                a == a2 && b == b2 && c == c2
            }
            (
                ScalarFunction::Generic { func, lo, hi },
                ScalarFunction::Generic {
                    func: f2,
                    lo: l2,
                    hi: h2,
                },
            ) => Arc::ptr_eq(func, f2) && lo == l2 && hi == h2,
            _ => false,
        }
    }
}

/// One generator or load bus.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub cost: ScalarFunction,
    pub loss: ScalarFunction,
    pub x_min: f64,
    pub x_max: f64,
    pub demand: f64,
}

impl NodeSpec {
    /// Quadratic cost `a + b·x + c·x²` with quadratic loss `alpha·x²`.
    pub fn quadratic(
        id: impl Into<NodeId>,
        (a, b, c): (f64, f64, f64),
        alpha: f64,
        x_min: f64,
        x_max: f64,
        demand: f64,
    ) -> Self {
        NodeSpec {
            id: id.into(),
            cost: ScalarFunction::quadratic(a, b, c),
            loss: ScalarFunction::quadratic_loss(alpha),
            x_min,
            x_max,
            demand,
        }
    }

    /// A node whose output is pinned to `x` (zero cost, no loss).
    pub fn fixed(id: impl Into<NodeId>, x: f64, demand: f64) -> Self {
        NodeSpec {
            id: id.into(),
            cost: ScalarFunction::zero(),
            loss: ScalarFunction::zero(),
            x_min: x,
            x_max: x,
            demand,
        }
    }

    pub fn is_fixed(&self) -> bool {
        self.x_min == self.x_max
    }

    /// Output delivered after losses, `x − φ(x)`.
    #[inline]
    pub fn net_output(&self, x: f64) -> f64 {
        x - self.loss.eval(x)
    }

    /// Local supply shortfall `d − x + φ(x)`.
    #[inline]
    pub fn shortfall(&self, x: f64) -> f64 {
        self.demand - self.net_output(x)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.x_min <= x && x <= self.x_max
    }
}

/// A standing assumption that a node can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Finite data with `x_min ≤ x_max`.
    Interval,
    /// Generic function does not declare the whole capacity interval.
    Domain,
    CostStrictlyConvex,
    LossConvex,
    /// `dφ/dx < 1` on the capacity interval.
    LossSlopeBelowOne,
    /// `df/dx > 0` on the capacity interval, except that `df/dx = 0` is
    /// allowed at `x_min`.
    CostIncreasing,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Interval => "capacity interval must be finite with x_min <= x_max",
            Condition::Domain => "function domain does not cover [x_min, x_max]",
            Condition::CostStrictlyConvex => "cost must be strictly convex",
            Condition::LossConvex => "loss must be convex",
            Condition::LossSlopeBelowOne => "loss slope dphi/dx must stay below 1",
            Condition::CostIncreasing => "cost slope df/dx must be positive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCheck {
    pub id: NodeId,
    pub interval: bool,
    pub domain: bool,
    pub cost_strictly_convex: bool,
    pub loss_convex: bool,
    pub loss_slope_below_one: bool,
    pub cost_increasing: bool,
}

impl NodeCheck {
    pub fn failures(&self) -> Vec<Condition> {
        [
            (self.interval, Condition::Interval),
            (self.domain, Condition::Domain),
            (self.cost_strictly_convex, Condition::CostStrictlyConvex),
            (self.loss_convex, Condition::LossConvex),
            (self.loss_slope_below_one, Condition::LossSlopeBelowOne),
            (self.cost_increasing, Condition::CostIncreasing),
        ]
        .into_iter()
        .filter_map(|(ok, c)| (!ok).then_some(c))
        .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub nodes: Vec<NodeCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.nodes.iter().all(NodeCheck::passed)
    }

    pub fn failures(&self) -> Vec<(NodeId, Condition)> {
        self.nodes
            .iter()
            .flat_map(|n| n.failures().into_iter().map(move |c| (n.id, c)))
            .collect()
    }
}

/// Checks the standing assumptions for every node.
///
/// Quadratic functions are checked exactly through their coefficients; generic
/// ones are sampled at `samples_per_node` evenly spaced interior points plus
/// both endpoints. Fixed-output nodes (`x_min == x_max`) have a single-point
/// domain, so the conditions on the cost are vacuous for them.
pub fn validate_assumptions(nodes: &[NodeSpec], samples_per_node: usize) -> Result<ValidationReport> {
    if nodes.is_empty() {
        return Err(Error::Instance("fleet has no nodes".into()));
    }
    Ok(ValidationReport {
        nodes: nodes.iter().map(|n| check_node(n, samples_per_node)).collect(),
    })
}

fn check_node(node: &NodeSpec, samples: usize) -> NodeCheck {
    let (lo, hi) = (node.x_min, node.x_max);
    let mut check = NodeCheck {
        id: node.id,
        interval: lo.is_finite() && hi.is_finite() && node.demand.is_finite() && lo <= hi,
        domain: node.cost.covers(lo, hi) && node.loss.covers(lo, hi),
        cost_strictly_convex: false,
        loss_convex: false,
        loss_slope_below_one: false,
        cost_increasing: false,
    };
    if !(check.interval && check.domain) {
        // remaining conditions are not evaluated on unusable data
        check.cost_strictly_convex = true;
        check.loss_convex = true;
        check.loss_slope_below_one = true;
        check.cost_increasing = true;
        return check;
    }
    let fixed = node.is_fixed();

    match node.cost.as_quadratic() {
        Some((a, b, c)) => {
            let finite = a.is_finite() && b.is_finite() && c.is_finite();
            check.cost_strictly_convex = finite && (fixed || c > 0.0);
            check.cost_increasing = finite && (fixed || (b + 2.0 * c * lo >= 0.0 && b + 2.0 * c * hi > 0.0));
        }
        None => {
            let slopes: Vec<f64> = sample_grid(lo, hi, samples).map(|x| node.cost.derivative(x)).collect();
            let finite = slopes.iter().all(|s| s.is_finite())
                && sample_grid(lo, hi, samples).all(|x| node.cost.eval(x).is_finite());
            check.cost_strictly_convex = finite && (fixed || slopes.windows(2).all(|w| w[1] > w[0]));
            check.cost_increasing = finite && (fixed || (slopes[0] >= 0.0 && slopes[1..].iter().all(|&s| s > 0.0)));
        }
    }

    match node.loss.as_quadratic() {
        Some((a, b, c)) => {
            let finite = a.is_finite() && b.is_finite() && c.is_finite();
            check.loss_convex = finite && c >= 0.0;
            check.loss_slope_below_one = finite && b + 2.0 * c * lo < 1.0 && b + 2.0 * c * hi < 1.0;
        }
        None => {
            let slopes: Vec<f64> = sample_grid(lo, hi, samples).map(|x| node.loss.derivative(x)).collect();
            let finite = slopes.iter().all(|s| s.is_finite())
                && sample_grid(lo, hi, samples).all(|x| node.loss.eval(x).is_finite());
            check.loss_convex = finite && slopes.windows(2).all(|w| w[1] >= w[0]);
            check.loss_slope_below_one = finite && slopes.iter().all(|&s| s < 1.0);
        }
    }
    check
}

/// `samples` interior points plus both endpoints, ascending.
fn sample_grid(lo: f64, hi: f64, samples: usize) -> impl Iterator<Item = f64> {
    let n = samples + 1;
    (0..=n).map(move |j| {
        if j == n {
            hi
        } else {
            lo + (hi - lo) * (j as f64) / (n as f64)
        }
    })
}

/// Validated, immutable problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    nodes: Vec<NodeSpec>,
}

impl Fleet {
    pub fn new(nodes: Vec<NodeSpec>) -> Result<Self> {
        Self::with_samples(nodes, DEFAULT_SAMPLES)
    }

    pub fn with_samples(nodes: Vec<NodeSpec>, samples_per_node: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(nodes.len());
        for n in &nodes {
            if !seen.insert(n.id) {
                return Err(Error::Instance(format!("duplicate node id {}", n.id)));
            }
        }
        let report = validate_assumptions(&nodes, samples_per_node)?;
        if !report.passed() {
            return Err(Error::Assumptions(report.failures()));
        }
        Ok(Fleet { nodes })
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn total_demand(&self) -> f64 {
        self.nodes.iter().map(|n| n.demand).sum()
    }

    pub fn x_min(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.x_min).collect()
    }

    pub fn x_max(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.x_max).collect()
    }

    /// `D(x) = Σ (x_i − φ_i(x_i) − d_i)`; zero exactly on the balance manifold.
    pub fn balance(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nodes.len());
        self.nodes.iter().zip(x).map(|(n, &xi)| -n.shortfall(xi)).sum()
    }

    pub fn total_cost(&self, x: &[f64]) -> f64 {
        self.nodes.iter().zip(x).map(|(n, &xi)| n.cost.eval(xi)).sum()
    }

    fn rebuild(&self, nodes: Vec<NodeSpec>) -> Result<Fleet> {
        Fleet::new(nodes)
    }

    pub fn with_demand(&self, id: NodeId, demand: f64) -> Result<Fleet> {
        let mut nodes = self.nodes.clone();
        let node = nodes
            .iter_mut()
            .find(|n| n.id == id)
            .ok_or_else(|| Error::Instance(format!("unknown node {id}")))?;
        node.demand = demand;
        self.rebuild(nodes)
    }

    pub fn with_capacity(&self, id: NodeId, x_min: f64, x_max: f64) -> Result<Fleet> {
        let mut nodes = self.nodes.clone();
        let node = nodes
            .iter_mut()
            .find(|n| n.id == id)
            .ok_or_else(|| Error::Instance(format!("unknown node {id}")))?;
        node.x_min = x_min;
        node.x_max = x_max;
        self.rebuild(nodes)
    }

    pub fn without(&self, id: NodeId) -> Result<Fleet> {
        if self.get(id).is_none() {
            return Err(Error::Instance(format!("unknown node {id}")));
        }
        self.rebuild(self.nodes.iter().filter(|n| n.id != id).cloned().collect())
    }

    /// Inserts before the first node with a larger id, so a leave followed by
    /// a rejoin restores the original order.
    pub fn with_node(&self, spec: NodeSpec) -> Result<Fleet> {
        let mut nodes = self.nodes.clone();
        let at = nodes.iter().position(|n| n.id > spec.id).unwrap_or(nodes.len());
        nodes.insert(at, spec);
        self.rebuild(nodes)
    }
}

/// Slack on each side of the supply/demand feasibility condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityMargin {
    /// `Σd − Σ(x_min − φ(x_min))`
    pub lower_slack: f64,
    /// `Σ(x_max − φ(x_max)) − Σd`
    pub upper_slack: f64,
}

impl FeasibilityMargin {
    /// Zero slack counts as feasible (closed capacity intervals).
    pub fn is_feasible(&self) -> bool {
        self.lower_slack >= 0.0 && self.upper_slack >= 0.0
    }
}

pub fn feasibility_margin(fleet: &Fleet) -> FeasibilityMargin {
    let demand = fleet.total_demand();
    let min_supply: f64 = fleet.nodes().iter().map(|n| n.net_output(n.x_min)).sum();
    let max_supply: f64 = fleet.nodes().iter().map(|n| n.net_output(n.x_max)).sum();
    FeasibilityMargin {
        lower_slack: demand - min_supply,
        upper_slack: max_supply - demand,
    }
}

/// Finds a point on the balance manifold along the diagonal of the capacity
/// box, `x_min + c·(x_max − x_min)`, by bisection on `c ∈ [0, 1]`.
pub fn construct_feasible_point(fleet: &Fleet, tol: f64) -> Result<Vec<f64>> {
    const MAX_ITER: usize = 200;

    let margin = feasibility_margin(fleet);
    if !margin.is_feasible() {
        return Err(Error::Infeasible {
            lower: margin.lower_slack,
            upper: margin.upper_slack,
        });
    }
    let lo = fleet.x_min();
    let hi = fleet.x_max();
    let point = |c: f64| -> Vec<f64> { lo.iter().zip(&hi).map(|(&l, &h)| l + (h - l) * c).collect() };

    let at_lo = fleet.balance(&lo);
    if at_lo.abs() <= tol {
        return Ok(lo);
    }
    let at_hi = fleet.balance(&hi);
    if at_hi.abs() <= tol {
        return Ok(hi);
    }

    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..MAX_ITER {
        let c = 0.5 * (a + b);
        let x = point(c);
        let r = fleet.balance(&x);
        if r.abs() < best.0 {
            best = (r.abs(), c);
        }
        if r.abs() <= tol {
            return Ok(x);
        }
        if r < 0.0 {
            a = c;
        } else {
            b = c;
        }
        if b - a <= f64::EPSILON * 0.5 {
            break;
        }
    }
    Err(Error::Convergence {
        what: "feasible point bisection",
        iterations: MAX_ITER,
        residual: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_node(d: f64) -> Fleet {
        Fleet::new(vec![
            NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 0.0, 10.0, d),
            NodeSpec::quadratic(2, (0.0, 1.0, 0.2), 0.02, 0.0, 10.0, d),
        ])
        .unwrap()
    }

    #[test]
    fn quadratic_node_passes_all_checks() {
        let n = NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 0.0, 10.0, 5.0);
        let report = validate_assumptions(&[n], 8).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn steep_loss_fails_slope_check() {
        let n = NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.06, 0.0, 10.0, 5.0);
        let report = validate_assumptions(&[n], 8).unwrap();
        assert_eq!(report.failures(), vec![(NodeId(1), Condition::LossSlopeBelowOne)]);
    }

    #[test]
    fn decreasing_cost_fails_at_left_endpoint() {
        let n = NodeSpec::quadratic(1, (0.0, -1.0, 0.1), 0.01, 0.0, 10.0, 5.0);
        let report = validate_assumptions(&[n], 8).unwrap();
        assert_eq!(report.failures(), vec![(NodeId(1), Condition::CostIncreasing)]);
    }

    #[test]
    fn empty_fleet_is_rejected() {
        assert!(matches!(validate_assumptions(&[], 8), Err(Error::Instance(_))));
        assert!(Fleet::new(vec![]).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let n = NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 0.0, 10.0, 5.0);
        assert!(matches!(Fleet::new(vec![n.clone(), n]), Err(Error::Instance(_))));
    }

    #[test]
    fn inverted_interval_rejected() {
        let n = NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 5.0, 1.0, 5.0);
        assert_eq!(
            Fleet::new(vec![n]).unwrap_err(),
            Error::Assumptions(vec![(NodeId(1), Condition::Interval)])
        );
    }

    #[test]
    fn non_finite_data_rejected() {
        let n = NodeSpec::quadratic(1, (0.0, f64::NAN, 0.1), 0.01, 0.0, 1.0, 0.5);
        assert!(Fleet::new(vec![n]).is_err());
        let n = NodeSpec::quadratic(1, (0.0, 1.0, 0.1), 0.01, 0.0, f64::INFINITY, 0.5);
        assert!(Fleet::new(vec![n]).is_err());
    }

    #[test]
    fn fixed_output_node_is_admitted() {
        let fleet = Fleet::new(vec![NodeSpec::fixed(3, 0.0, 12.0)]).unwrap();
        assert!(fleet.nodes()[0].is_fixed());
    }

    #[derive(Debug)]
    struct Exp;
    impl SmoothFn for Exp {
        fn eval(&self, x: f64) -> f64 {
            x.exp()
        }
        fn derivative(&self, x: f64) -> f64 {
            x.exp()
        }
    }

    #[derive(Debug)]
    struct Sine;
    impl SmoothFn for Sine {
        fn eval(&self, x: f64) -> f64 {
            x.sin()
        }
        fn derivative(&self, x: f64) -> f64 {
            x.cos()
        }
    }

    #[test]
    fn generic_functions_are_sampled() {
        let good = NodeSpec {
            id: NodeId(1),
            cost: ScalarFunction::generic(Exp, 0.0, 2.0),
            loss: ScalarFunction::quadratic_loss(0.01),
            x_min: 0.0,
            x_max: 2.0,
            demand: 1.0,
        };
        assert!(validate_assumptions(std::slice::from_ref(&good), 16).unwrap().passed());

        // sin is concave on [0, 2] and its slope turns negative past pi/2
        let bad = NodeSpec {
            cost: ScalarFunction::generic(Sine, 0.0, 2.0),
            ..good.clone()
        };
        let failures = validate_assumptions(&[bad], 16).unwrap().failures();
        assert!(failures.contains(&(NodeId(1), Condition::CostStrictlyConvex)));
        assert!(failures.contains(&(NodeId(1), Condition::CostIncreasing)));

        let short_domain = NodeSpec {
            cost: ScalarFunction::generic(Exp, 0.0, 1.0),
            ..good
        };
        assert_eq!(
            validate_assumptions(&[short_domain], 16).unwrap().failures(),
            vec![(NodeId(1), Condition::Domain)]
        );
    }

    #[test]
    fn margin_of_two_node_instance() {
        let m = feasibility_margin(&two_node(5.0));
        assert_eq!(m.lower_slack, 10.0);
        assert!((m.upper_slack - 7.0).abs() < 1e-12);
        assert!(m.is_feasible());

        let m = feasibility_margin(&two_node(10.0));
        assert!((m.upper_slack + 3.0).abs() < 1e-12);
        assert!(!m.is_feasible());
    }

    #[test]
    fn single_fixed_node_sits_on_boundary() {
        let fleet = Fleet::new(vec![NodeSpec::quadratic(1, (0.0, 1.0, 0.1), 0.0, 4.0, 4.0, 4.0)]).unwrap();
        let m = feasibility_margin(&fleet);
        assert_eq!((m.lower_slack, m.upper_slack), (0.0, 0.0));
        assert!(m.is_feasible());
    }

    #[test]
    fn infeasible_point_reports_slacks() {
        match construct_feasible_point(&two_node(10.0), 1e-9) {
            Err(Error::Infeasible { upper, .. }) => assert!((upper + 3.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn feasible_point_at_lower_corner() {
        // demand equals the minimum net output of each node
        let fleet = Fleet::new(vec![
            NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 1.0, 10.0, 1.0 - 0.01),
            NodeSpec::quadratic(2, (0.0, 1.0, 0.2), 0.02, 2.0, 10.0, 2.0 - 0.08),
        ])
        .unwrap();
        assert_eq!(construct_feasible_point(&fleet, 1e-12).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn feasible_point_matches_scalar_bisection_oracle() {
        let fleet = two_node(5.0);
        let x = construct_feasible_point(&fleet, 1e-9).unwrap();
        assert!(fleet.balance(&x).abs() <= 1e-9);

        // Independent oracle: D along the box diagonal is
        // 10c − 0.01(10c)² + 10c − 0.02(10c)² − 10 = 20c − 3c² − 10.
        let h = |c: f64| 20.0 * c - 3.0 * c * c - 10.0;
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if h(m) < 0.0 {
                a = m
            } else {
                b = m
            }
        }
        let c_star = 0.5 * (a + b);
        assert!((x[0] / 10.0 - c_star).abs() < 1e-9);
        assert!((x[1] / 10.0 - c_star).abs() < 1e-9);
    }

    #[test]
    fn derived_fleets_revalidate() {
        let fleet = two_node(5.0);
        assert_eq!(
            fleet
                .with_demand(NodeId(1), 7.0)
                .unwrap()
                .get(NodeId(1))
                .unwrap()
                .demand,
            7.0
        );
        assert_eq!(fleet.without(NodeId(2)).unwrap().len(), 1);
        assert!(fleet.without(NodeId(9)).is_err());
        assert!(fleet.with_capacity(NodeId(1), 5.0, 1.0).is_err());
        assert!(fleet.with_node(fleet.nodes()[0].clone()).is_err());
    }
}
