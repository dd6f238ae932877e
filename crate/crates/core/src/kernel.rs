//! Per-node dual decomposition kernels.
//!
//! For a single price `λ` each node recovers its own generation `x̂(λ)` from
//! the incremental-cost map `v(x) = f'(x) / (1 − φ'(x))`, clamped to the
//! capacity interval. The modified dual function `g(λ) = f(x̂) + λ·(d − x̂ + φ(x̂))`
//! is concave and C¹ on the whole real line and its derivative is the local
//! shortfall `d − x̂(λ) + φ(x̂(λ))`.

use crate::error::{Error, Result};
use crate::model::{NodeId, NodeSpec};

pub const BISECTION_TOL: f64 = 1e-12;
pub const BISECTION_MAX_ITER: usize = 200;

/// How `v⁻¹` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inversion {
    /// Closed form; available when both cost and loss are quadratic.
    Analytic,
    Bisection {
        tol: f64,
        max_iter: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeKernel {
    spec: NodeSpec,
    v_at_xmin: f64,
    v_at_xmax: f64,
    inversion: Inversion,
}

impl NodeKernel {
    /// Quadratic/quadratic nodes always use the closed-form inverse.
    pub fn new(spec: NodeSpec) -> Self {
        let inversion = if spec.cost.as_quadratic().is_some() && spec.loss.as_quadratic().is_some() {
            Inversion::Analytic
        } else {
            Inversion::Bisection {
                tol: BISECTION_TOL,
                max_iter: BISECTION_MAX_ITER,
            }
        };
        Self::with_inversion(spec, inversion)
    }

    pub fn with_inversion(spec: NodeSpec, inversion: Inversion) -> Self {
        let v_at_xmin = incremental_cost(&spec, spec.x_min);
        let v_at_xmax = if spec.is_fixed() {
            v_at_xmin
        } else {
            incremental_cost(&spec, spec.x_max)
        };
        NodeKernel {
            spec,
            v_at_xmin,
            v_at_xmax,
            inversion,
        }
    }

    pub fn spec(&self) -> &NodeSpec {
        &self.spec
    }

    pub fn id(&self) -> NodeId {
        self.spec.id
    }

    pub fn v_at_xmin(&self) -> f64 {
        self.v_at_xmin
    }

    pub fn v_at_xmax(&self) -> f64 {
        self.v_at_xmax
    }

    pub fn inversion(&self) -> Inversion {
        self.inversion
    }

    /// Incremental cost `f'(x) / (1 − φ'(x))`, strictly increasing in `x`.
    pub fn v(&self, x: f64) -> Result<f64> {
        if !self.spec.contains(x) {
            return Err(Error::Domain {
                what: "generation",
                value: x,
                lo: self.spec.x_min,
                hi: self.spec.x_max,
            });
        }
        Ok(incremental_cost(&self.spec, x))
    }

    /// The unique `x` with `v(x) = lam`.
    pub fn v_inverse(&self, lam: f64) -> Result<f64> {
        if !(self.v_at_xmin <= lam && lam <= self.v_at_xmax) {
            return Err(Error::Domain {
                what: "price",
                value: lam,
                lo: self.v_at_xmin,
                hi: self.v_at_xmax,
            });
        }
        let spec = &self.spec;
        if spec.is_fixed() || lam == self.v_at_xmin {
            return Ok(spec.x_min);
        }
        if lam == self.v_at_xmax {
            return Ok(spec.x_max);
        }
        match self.inversion {
            Inversion::Analytic => {
                let (_, b, c) = spec
                    .cost
                    .as_quadratic()
                    .expect("analytic inversion needs quadratic cost");
                let (_, lb, lc) = spec
                    .loss
                    .as_quadratic()
                    .expect("analytic inversion needs quadratic loss");
                // b + 2c·x = λ·(1 − lb − 2lc·x)
                let x = (lam * (1.0 - lb) - b) / (2.0 * c + 2.0 * lc * lam);
                Ok(x.clamp(spec.x_min, spec.x_max))
            }
            Inversion::Bisection { tol, max_iter } => match self.bisect_v(lam, tol, max_iter) {
                (x, None) => Ok(x),
                (_, Some(residual)) => Err(Error::Convergence {
                    what: "incremental cost inversion",
                    iterations: max_iter,
                    residual,
                }),
            },
        }
    }

    /// Returns the last midpoint and, if the tolerance was not met, its residual.
    fn bisect_v(&self, lam: f64, tol: f64, max_iter: usize) -> (f64, Option<f64>) {
        let (mut a, mut b) = (self.spec.x_min, self.spec.x_max);
        let mut mid = 0.5 * (a + b);
        let mut residual = f64::INFINITY;
        for _ in 0..max_iter {
            mid = 0.5 * (a + b);
            let r = incremental_cost(&self.spec, mid) - lam;
            residual = r.abs();
            // bracket collapsed to adjacent floats: as good as it gets
            if residual <= tol || mid <= a || mid >= b {
                return (mid, None);
            }
            if r < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        (mid, Some(residual))
    }

    /// Local minimizer of the node Lagrangian, extended to every real price.
    pub fn x_hat(&self, lam: f64) -> f64 {
        let spec = &self.spec;
        if lam.is_nan() {
            return f64::NAN;
        }
        if spec.is_fixed() || lam <= self.v_at_xmin {
            return spec.x_min;
        }
        if lam >= self.v_at_xmax {
            return spec.x_max;
        }
        match self.inversion {
            // a stalled bisection still leaves the best bracket estimate
            Inversion::Bisection { tol, max_iter } => self.bisect_v(lam, tol, max_iter).0,
            Inversion::Analytic => self.v_inverse(lam).unwrap_or(f64::NAN),
        }
    }

    /// Derivative of the modified dual: `d − x̂(λ) + φ(x̂(λ))`.
    pub fn dual_gradient(&self, lam: f64) -> f64 {
        self.spec.shortfall(self.x_hat(lam))
    }

    /// Modified dual value `f(x̂) + λ·(d − x̂ + φ(x̂))`.
    pub fn dual_value(&self, lam: f64) -> f64 {
        let x = self.x_hat(lam);
        self.spec.cost.eval(x) + lam * self.spec.shortfall(x)
    }

    /// `(min, max)` of the dual gradient over all prices, attained at `x_max`
    /// and `x_min` respectively.
    pub fn gradient_bounds(&self) -> (f64, f64) {
        (
            self.spec.shortfall(self.spec.x_max),
            self.spec.shortfall(self.spec.x_min),
        )
    }
}

#[inline]
fn incremental_cost(spec: &NodeSpec, x: f64) -> f64 {
    spec.cost.derivative(x) / (1.0 - spec.loss.derivative(x))
}

/// Kernels for every node of a fleet, in fleet order.
pub fn kernels(fleet: &crate::model::Fleet) -> Vec<NodeKernel> {
    fleet.nodes().iter().cloned().map(NodeKernel::new).collect()
}

/// Aggregate dual gradient `Σ_i (d_i − x̂_i(λ) + φ_i(x̂_i(λ)))`.
pub fn aggregate_gradient(kernels: &[NodeKernel], lam: f64) -> f64 {
    kernels.iter().map(|k| k.dual_gradient(lam)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScalarFunction;
    use approx::assert_relative_eq;

    fn node(d: f64) -> NodeKernel {
        NodeKernel::new(NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 0.0, 10.0, d))
    }

    #[test]
    fn v_at_endpoints() {
        let k = node(5.0);
        assert_eq!(k.v(0.0).unwrap(), 2.0);
        assert_relative_eq!(k.v(10.0).unwrap(), 5.0, max_relative = 1e-15);
        assert_eq!(k.v_at_xmin(), 2.0);
        assert_relative_eq!(k.v_at_xmax(), 5.0, max_relative = 1e-15);
        assert!(matches!(k.v(10.5), Err(Error::Domain { .. })));
        assert!(matches!(k.v(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn lossless_v_is_cost_slope() {
        let k = NodeKernel::new(NodeSpec::quadratic(1, (1.0, 3.0, 0.5), 0.0, 0.0, 4.0, 0.0));
        for i in 0..=40 {
            let x = i as f64 * 0.1;
            assert_eq!(k.v(x).unwrap(), 3.0 + x);
        }
    }

    #[test]
    fn closed_form_inverse() {
        let k = node(5.0);
        let x = k.v_inverse(3.0).unwrap();
        assert_relative_eq!(x, 1.0 / 0.26, max_relative = 1e-14);
        assert_eq!(k.v_inverse(k.v_at_xmin()).unwrap(), 0.0);
        assert_eq!(k.v_inverse(k.v_at_xmax()).unwrap(), 10.0);
        assert!(k.v_inverse(1.0).is_err());
        assert!(k.v_inverse(6.0).is_err());
    }

    #[test]
    fn bisection_inverse_agrees_with_closed_form() {
        let spec = NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 0.0, 10.0, 5.0);
        let exact = NodeKernel::new(spec.clone());
        let bis = NodeKernel::with_inversion(
            spec,
            Inversion::Bisection {
                tol: BISECTION_TOL,
                max_iter: BISECTION_MAX_ITER,
            },
        );
        for i in 1..100 {
            let lam = 2.0 + 3.0 * i as f64 / 100.0;
            assert_relative_eq!(
                bis.v_inverse(lam).unwrap(),
                exact.v_inverse(lam).unwrap(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn bisection_reports_non_convergence() {
        let spec = NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 0.0, 10.0, 5.0);
        let k = NodeKernel::with_inversion(spec, Inversion::Bisection { tol: 0.0, max_iter: 3 });
        assert!(matches!(k.v_inverse(3.3), Err(Error::Convergence { .. })));
        // x_hat still answers with the coarse bracket estimate
        assert!((k.x_hat(3.3) - NodeKernel::new(k.spec().clone()).x_hat(3.3)).abs() < 10.0 / 8.0);
    }

    #[test]
    fn x_hat_regions() {
        let k = node(5.0);
        assert_eq!(k.x_hat(-5.0), 0.0);
        assert_eq!(k.x_hat(2.0), 0.0);
        assert_eq!(k.x_hat(5.0), 10.0);
        assert_eq!(k.x_hat(f64::INFINITY), 10.0);
        assert_eq!(k.x_hat(f64::NEG_INFINITY), 0.0);
        assert_relative_eq!(k.x_hat(3.0), 3.846_153_846_153_846, max_relative = 1e-14);
        assert!(k.x_hat(f64::NAN).is_nan());
    }

    #[test]
    fn gradient_saturates() {
        let k = node(5.0);
        for lam in [-10.0, 0.0, 1.0, 2.0] {
            assert_eq!(k.dual_gradient(lam), 5.0);
        }
        for lam in [5.0, 6.0, 100.0] {
            assert_relative_eq!(k.dual_gradient(lam), -4.0, epsilon = 1e-12);
        }
        assert_eq!(k.gradient_bounds().1, 5.0);
        assert_relative_eq!(k.gradient_bounds().0, -4.0, epsilon = 1e-12);
    }

    #[test]
    fn dual_value_below_zero_price_is_affine() {
        let k = node(5.0);
        assert_eq!(k.dual_value(0.0), 0.0);
        // slope d − x_min + φ(x_min) = 5
        for lam in [-3.0, -1.0, -0.5] {
            assert_relative_eq!(k.dual_value(lam), 5.0 * lam, max_relative = 1e-15);
        }
    }

    #[test]
    fn fixed_output_short_circuits() {
        let k = NodeKernel::new(NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.01, 3.0, 3.0, 1.0));
        assert_eq!(k.v_at_xmin(), k.v_at_xmax());
        for lam in [-100.0, 0.0, 2.6, 1e6] {
            assert_eq!(k.x_hat(lam), 3.0);
        }
        let load = NodeKernel::new(NodeSpec::fixed(2, 0.0, 7.0));
        assert_eq!(load.dual_gradient(123.0), 7.0);
    }

    #[derive(Debug)]
    struct Cubic;
    impl crate::model::SmoothFn for Cubic {
        fn eval(&self, x: f64) -> f64 {
            x + x * x * x / 3.0
        }
        fn derivative(&self, x: f64) -> f64 {
            1.0 + x * x
        }
    }

    #[test]
    fn generic_cost_uses_bisection() {
        let spec = NodeSpec {
            id: NodeId(4),
            cost: ScalarFunction::generic(Cubic, 0.0, 3.0),
            loss: ScalarFunction::quadratic_loss(0.05),
            x_min: 0.0,
            x_max: 3.0,
            demand: 1.0,
        };
        let k = NodeKernel::new(spec);
        assert!(matches!(k.inversion(), Inversion::Bisection { .. }));
        for i in 1..50 {
            let lam = k.v_at_xmin() + (k.v_at_xmax() - k.v_at_xmin()) * i as f64 / 50.0;
            let x = k.v_inverse(lam).unwrap();
            assert!((k.v(x).unwrap() - lam).abs() < 1e-10);
        }
    }
}
