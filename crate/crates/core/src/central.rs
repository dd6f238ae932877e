//! Centralized reference solutions for the relaxed dual problem.
//!
//! The aggregate dual gradient `Σ_i (d_i − x̂_i(λ) + φ_i(x̂_i(λ)))` is
//! nonincreasing and constant outside the hull of the node breakpoints, so the
//! optimal price is a bracketed monotone root. The primal optimum is then
//! recovered node by node as `x̂_i(λ*)`.

use crate::error::{Error, Result};
use crate::kernel::{aggregate_gradient, kernels, NodeKernel};
use crate::model::{feasibility_margin, Fleet};
use crate::topology::Topology;

/// Samples used when estimating continuity moduli.
pub const MODULUS_SAMPLES: usize = 1025;

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub lambda_star: f64,
    pub x_star: Vec<f64>,
    /// `Σd − Σ(x − φ(x))` at `x_star`.
    pub mismatch: f64,
    pub cost: f64,
}

/// Finds `λ*` by bisection on the aggregate dual gradient.
///
/// When the lower feasibility slack is zero every `λ ≤ min v(x_min)` is
/// optimal; the answer is then canonicalized to `λ* = 0`.
pub fn solve_dual_bisection(fleet: &Fleet, tol: f64) -> Result<DualSolution> {
    const MAX_ITER: usize = 400;

    let margin = feasibility_margin(fleet);
    if !margin.is_feasible() {
        return Err(Error::Infeasible {
            lower: margin.lower_slack,
            upper: margin.upper_slack,
        });
    }
    let ks = kernels(fleet);
    let solution = |lam: f64| {
        let x: Vec<f64> = ks.iter().map(|k| k.x_hat(lam)).collect();
        DualSolution {
            lambda_star: lam,
            mismatch: -fleet.balance(&x),
            cost: fleet.total_cost(&x),
            x_star: x,
        }
    };

    if aggregate_gradient(&ks, 0.0) <= tol {
        return Ok(solution(0.0));
    }

    let mut lo = ks.iter().map(NodeKernel::v_at_xmin).fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = ks.iter().map(NodeKernel::v_at_xmax).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    lo = lo.min(0.0);
    let g_lo = aggregate_gradient(&ks, lo);
    let g_hi = aggregate_gradient(&ks, hi);
    if g_lo.abs() <= tol {
        return Ok(solution(lo));
    }
    if g_hi.abs() <= tol {
        return Ok(solution(hi));
    }
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::Infeasible {
            lower: margin.lower_slack,
            upper: margin.upper_slack,
        });
    }

    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let g = aggregate_gradient(&ks, mid);
        residual = g.abs();
        if residual <= tol {
            return Ok(solution(mid));
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    Err(Error::Convergence {
        what: "dual bisection",
        iterations: MAX_ITER,
        residual,
    })
}

/// Explicit Euler integration of `λ̇ = Σ_i dg_i/dλ(λ)` from `lambda0`.
///
/// Returns `(t, λ(t))` pairs including the initial point. Infeasible instances
/// give trajectories that drift without bound.
pub fn solve_dual_ode(fleet: &Fleet, lambda0: f64, step: f64, horizon: f64) -> Result<Vec<(f64, f64)>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Numeric(format!("step must be positive, got {step}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Numeric(format!("horizon must be nonnegative, got {horizon}")));
    }
    let ks = kernels(fleet);
    let steps = (horizon / step).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut lam = lambda0;
    out.push((0.0, lam));
    for q in 1..=steps {
        lam += step * aggregate_gradient(&ks, lam);
        out.push((q as f64 * step, lam));
    }
    Ok(out)
}

/// Outcome of each optimality condition of the relaxed problem.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `x_i ∈ [x_min_i, x_max_i]`
    pub box_feasible: bool,
    /// `λ ≥ −tol`
    pub dual_feasible: bool,
    /// `Σ(d − x + φ(x)) ≤ tol`
    pub relaxed_constraint: bool,
    /// `|λ · Σ(d − x + φ(x))| ≤ tol`
    pub complementary_slackness: bool,
    /// `|x_i − x̂_i(λ)| ≤ tol` for every node
    pub lagrangian_minimizer: bool,
    pub constraint_value: f64,
    pub max_minimizer_gap: f64,
}

impl KktReport {
    pub fn all_pass(&self) -> bool {
        self.box_feasible
            && self.dual_feasible
            && self.relaxed_constraint
            && self.complementary_slackness
            && self.lagrangian_minimizer
    }
}

pub fn verify_kkt(fleet: &Fleet, x: &[f64], lam: f64, tol: f64) -> KktReport {
    let nodes = fleet.nodes();
    let len_ok = x.len() == nodes.len();
    let box_feasible = len_ok
        && nodes
            .iter()
            .zip(x)
            .all(|(n, &xi)| n.x_min - tol <= xi && xi <= n.x_max + tol);
    let constraint_value: f64 = nodes.iter().zip(x).map(|(n, &xi)| n.shortfall(xi)).sum();
    let max_minimizer_gap = if len_ok {
        nodes
            .iter()
            .zip(x)
            .map(|(n, &xi)| (xi - NodeKernel::new(n.clone()).x_hat(lam)).abs())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    KktReport {
        box_feasible,
        dual_feasible: lam >= -tol,
        relaxed_constraint: len_ok && constraint_value <= tol,
        complementary_slackness: len_ok && (lam * constraint_value).abs() <= tol,
        lagrangian_minimizer: max_minimizer_gap <= tol,
        constraint_value,
        max_minimizer_gap,
    }
}

/// Quantities behind the high-gain optimality bound.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEstimate {
    /// Bound on the Euclidean norm of the stacked local gradients.
    pub m: f64,
    pub sigma2: f64,
    /// Net-output increment guaranteeing an `epsilon` generation error.
    pub delta1: f64,
    /// Price separation keeping every local gradient within `delta1 / 3N`.
    pub delta2: f64,
    /// `2·m / (sigma2·delta2)`; advisory since `delta2` is sampled.
    pub k_bar: f64,
    /// `Σ (x_max − φ(x_max) − x_min + φ(x_min))`, the range of the aggregate gradient.
    pub spread: f64,
}

/// Estimates the coupling gain above which every node's generation ends
/// within `epsilon` of its optimum.
pub fn estimate_gain(fleet: &Fleet, topo: &Topology, epsilon: f64) -> Result<GainEstimate> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Numeric(format!("epsilon must be positive, got {epsilon}")));
    }
    if !topo.is_connected() {
        return Err(Error::Topology("gain estimate needs a connected graph".into()));
    }
    if topo.len() != fleet.len() || fleet.ids().any(|id| !topo.contains(id)) {
        return Err(Error::Topology("graph and fleet node sets differ".into()));
    }
    let ks = kernels(fleet);
    let n = ks.len() as f64;

    let m = ks
        .iter()
        .map(|k| {
            let (lo, hi) = k.gradient_bounds();
            let w = lo.abs().max(hi.abs());
            w * w
        })
        .sum::<f64>()
        .sqrt();

    let delta1 = net_output_modulus(&ks, epsilon);
    let target = delta1 / (3.0 * n);
    let delta2 = ks
        .iter()
        .filter(|k| !k.spec().is_fixed())
        .map(|k| gradient_modulus_inverse(k, target))
        .fold(f64::INFINITY, f64::min);

    let sigma2 = topo.sigma2();
    let spread = ks
        .iter()
        .map(|k| {
            let s = k.spec();
            s.net_output(s.x_max) - s.net_output(s.x_min)
        })
        .sum();
    Ok(GainEstimate {
        m,
        sigma2,
        delta1,
        delta2,
        k_bar: 2.0 * m / (sigma2 * delta2),
        spread,
    })
}

/// Largest `δ` with `|p(a) − p(b)| ≤ δ ⇒ |a − b| ≤ ε` for every node, where
/// `p(z) = z − φ(z)`. Convex losses make `p` concave, so the smallest
/// `ε`-increment of `p` sits at the right end of the interval.
fn net_output_modulus(ks: &[NodeKernel], epsilon: f64) -> f64 {
    let per_node = ks.iter().filter_map(|k| {
        let s = k.spec();
        (s.x_max - s.x_min > epsilon).then(|| s.net_output(s.x_max) - s.net_output(s.x_max - epsilon))
    });
    let min = per_node.fold(f64::INFINITY, f64::min);
    if min.is_finite() {
        min
    } else {
        // every interval is narrower than epsilon: no constraint from p
        ks.iter()
            .map(|k| {
                let s = k.spec();
                s.net_output(s.x_max) - s.net_output(s.x_min)
            })
            .sum::<f64>()
            .max(f64::MIN_POSITIVE)
    }
}

/// Largest price separation `δ` whose sampled gradient modulus stays within `target`.
fn gradient_modulus_inverse(k: &NodeKernel, target: f64) -> f64 {
    let (lo, hi) = (k.v_at_xmin(), k.v_at_xmax());
    let width = hi - lo;
    let (g_min, g_max) = k.gradient_bounds();
    if g_max - g_min <= target {
        return f64::INFINITY;
    }
    // Sample starts over [lo − width, hi]; beyond that every increment is a
    // subset of one already covered because the gradient is flat outside.
    let grid: Vec<f64> = (0..MODULUS_SAMPLES)
        .map(|j| lo - width + 2.0 * width * j as f64 / (MODULUS_SAMPLES - 1) as f64)
        .collect();
    let base: Vec<f64> = grid.iter().map(|&a| k.dual_gradient(a)).collect();
    let modulus = |delta: f64| -> f64 {
        grid.iter()
            .zip(&base)
            .map(|(&a, &ga)| (k.dual_gradient(a + delta) - ga).abs())
            .fold(0.0, f64::max)
    };
    let (mut a, mut b) = (0.0, width);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if modulus(mid) <= target {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NodeId, NodeSpec};
    use approx::assert_abs_diff_eq;

    fn two_node(d: f64) -> Fleet {
        Fleet::new(vec![
            NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 0.0, 10.0, d),
            NodeSpec::quadratic(2, (0.0, 1.0, 0.2), 0.02, 0.0, 10.0, d),
        ])
        .unwrap()
    }

    fn single() -> Fleet {
        Fleet::new(vec![NodeSpec::quadratic(1, (0.0, 0.0, 1.0), 0.0, 0.0, 10.0, 4.0)]).unwrap()
    }

    #[test]
    fn single_node_closed_form() {
        let sol = solve_dual_bisection(&single(), 1e-12).unwrap();
        assert_abs_diff_eq!(sol.lambda_star, 8.0, epsilon = 1e-11);
        assert_abs_diff_eq!(sol.x_star[0], 4.0, epsilon = 1e-11);
        assert_abs_diff_eq!(sol.cost, 16.0, epsilon = 1e-10);
    }

    #[test]
    fn two_node_balance() {
        let fleet = two_node(5.0);
        let sol = solve_dual_bisection(&fleet, 1e-9).unwrap();
        assert!(sol.mismatch.abs() <= 1e-9);
        let supplied: f64 = fleet
            .nodes()
            .iter()
            .zip(&sol.x_star)
            .map(|(n, &x)| n.net_output(x))
            .sum();
        assert_abs_diff_eq!(supplied, 10.0, epsilon = 1e-9);
        assert!(verify_kkt(&fleet, &sol.x_star, sol.lambda_star, 1e-7).all_pass());
    }

    #[test]
    fn zero_lower_slack_gives_zero_price() {
        let fleet = Fleet::new(vec![
            NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 1.0, 10.0, 0.99),
            NodeSpec::quadratic(2, (0.0, 1.0, 0.2), 0.0, 2.0, 10.0, 2.0),
        ])
        .unwrap();
        let sol = solve_dual_bisection(&fleet, 1e-12).unwrap();
        assert_eq!(sol.lambda_star, 0.0);
        assert_eq!(sol.x_star, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_upper_slack_gives_full_output() {
        let fleet = Fleet::new(vec![NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 0.0, 10.0, 9.0)]).unwrap();
        let sol = solve_dual_bisection(&fleet, 1e-9).unwrap();
        assert_abs_diff_eq!(sol.x_star[0], 10.0, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_rejected() {
        assert!(matches!(
            solve_dual_bisection(&two_node(10.0), 1e-9),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn euler_reaches_closed_form_price() {
        let traj = solve_dual_ode(&single(), 0.0, 1e-3, 20.0).unwrap();
        let (t, lam) = *traj.last().unwrap();
        assert_abs_diff_eq!(t, 20.0, epsilon = 1e-9);
        assert!((lam - 8.0).abs() <= 1e-2);
        // monotone approach from below
        assert!(traj.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn euler_equilibrium_is_fixed() {
        let traj = solve_dual_ode(&single(), 8.0, 1e-2, 1.0).unwrap();
        assert!(traj.iter().all(|&(_, l)| l == 8.0));
    }

    #[test]
    fn euler_infeasible_drift_rate() {
        let traj = solve_dual_ode(&two_node(10.0), 0.0, 1e-2, 50.0).unwrap();
        let (t1, l1) = traj[traj.len() - 101];
        let (t2, l2) = *traj.last().unwrap();
        // slope tends to Σ(d − x_max + φ(x_max)) = 20 − 17
        assert_abs_diff_eq!((l2 - l1) / (t2 - t1), 3.0, epsilon = 1e-9);
    }

    #[test]
    fn ode_rejects_bad_step() {
        assert!(solve_dual_ode(&single(), 0.0, 0.0, 1.0).is_err());
        assert!(solve_dual_ode(&single(), 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn kkt_detects_violations() {
        let fleet = two_node(5.0);
        let sol = solve_dual_bisection(&fleet, 1e-10).unwrap();
        let mut x = sol.x_star.clone();
        x[0] += 0.1;
        let r = verify_kkt(&fleet, &x, sol.lambda_star, 1e-7);
        assert!(!r.lagrangian_minimizer);
        assert!(r.box_feasible && r.dual_feasible);

        let r = verify_kkt(&fleet, &sol.x_star, -1.0, 1e-7);
        assert!(!r.dual_feasible);

        let r = verify_kkt(&fleet, &[11.0, 0.0], sol.lambda_star, 1e-7);
        assert!(!r.box_feasible);
    }

    #[test]
    fn gain_bound_of_two_node_instance() {
        let fleet = two_node(5.0);
        let topo = Topology::build([NodeId(1), NodeId(2)], [(NodeId(1), NodeId(2))]).unwrap();
        let est = estimate_gain(&fleet, &topo, 0.5).unwrap();
        assert_abs_diff_eq!(est.m, 50f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(est.sigma2, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.k_bar, 2.0 * est.m / (est.sigma2 * est.delta2), epsilon = 1e-12);
        assert!(est.delta1 > 0.0 && est.delta2 > 0.0);
        assert_abs_diff_eq!(est.spread, 17.0, epsilon = 1e-12);
    }

    #[test]
    fn gain_needs_connected_graph() {
        let fleet = two_node(5.0);
        let topo = Topology::build([NodeId(1), NodeId(2)], []).unwrap();
        assert!(matches!(estimate_gain(&fleet, &topo, 0.5), Err(Error::Topology(_))));
    }

    #[test]
    fn larger_epsilon_never_raises_gain() {
        let fleet = two_node(5.0);
        let topo = Topology::build([NodeId(1), NodeId(2)], [(NodeId(1), NodeId(2))]).unwrap();
        let mut prev = f64::INFINITY;
        let mut eps = 0.01;
        while eps < 20.0 {
            let k = estimate_gain(&fleet, &topo, eps).unwrap().k_bar;
            assert!(k <= prev, "k_bar rose from {prev} to {k} at eps {eps}");
            prev = k;
            eps *= 2.0;
        }
    }
}
