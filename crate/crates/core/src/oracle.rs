//! Brute-force references used to check the dual solver and kernels.
//!
//! Nothing here touches the dual machinery: the grid search works on the
//! primal problem directly, and the finite difference is plain calculus.

use crate::error::{Error, Result};
use crate::model::Fleet;

pub const MAX_NODES: usize = 3;
pub const MAX_POINTS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub x_grid: Vec<f64>,
    pub cost: f64,
    /// `|D(x_grid)|`
    pub residual: f64,
    pub resolution: f64,
    pub band: f64,
    /// Bound on `|cost − optimal cost|` implied by the resolution and band.
    pub cost_band: f64,
}

/// `2·N·resolution·max(1, sup|1 − φ'|)`: wide enough that the grid cell around
/// any balanced point holds a survivor.
pub fn default_band(fleet: &Fleet, resolution: f64) -> f64 {
    let slope = fleet
        .nodes()
        .iter()
        .flat_map(|n| [n.x_min, n.x_max].map(|x| (1.0 - n.loss.derivative(x)).abs()))
        .fold(1.0, f64::max);
    2.0 * fleet.len() as f64 * resolution * slope
}

/// Cost tolerance for comparing a grid optimum against the exact optimum.
///
/// A survivor may undershoot the demand by up to `band`, saving at most
/// `λ*·band ≤ sup f' / inf(1 − φ')·band`; the grid point nearest the optimum
/// costs at most `sup f'·N·resolution` extra.
pub fn cost_band(fleet: &Fleet, resolution: f64, band: f64) -> f64 {
    let nodes = fleet.nodes();
    let f_slope = nodes
        .iter()
        .flat_map(|n| [n.x_min, n.x_max].map(|x| n.cost.derivative(x).abs()))
        .fold(0.0, f64::max);
    let p_slope = nodes
        .iter()
        .filter(|n| !n.is_fixed())
        .flat_map(|n| [n.x_min, n.x_max].map(|x| 1.0 - n.loss.derivative(x)))
        .fold(1.0, f64::min);
    f_slope * (nodes.len() as f64 * resolution + band / p_slope)
}

fn axis(lo: f64, hi: f64, resolution: f64) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let steps = ((hi - lo) / resolution).floor() as usize;
    let mut pts: Vec<f64> = (0..=steps).map(|j| lo + j as f64 * resolution).collect();
    if *pts.last().unwrap() < hi {
        pts.push(hi);
    }
    pts
}

/// Exhaustive search over the capacity-box grid for the cheapest point with
/// `|D(x)| ≤ band`.
///
/// All but the last coordinate are enumerated outright. `D` is strictly
/// increasing in the last coordinate, so the surviving indices there form a
/// contiguous run located by binary search; every other index provably fails
/// the band and is skipped.
pub fn grid_search(fleet: &Fleet, resolution: f64, band: Option<f64>) -> Result<GridSolution> {
    let n = fleet.len();
    if n > MAX_NODES {
        return Err(Error::Instance(format!(
            "grid search handles at most {MAX_NODES} nodes, got {n}"
        )));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::Numeric(format!("resolution must be positive, got {resolution}")));
    }
    if n == 0 {
        return Err(Error::Instance("empty instance".into()));
    }
    let band = band.unwrap_or_else(|| default_band(fleet, resolution));
    let nodes = fleet.nodes();
    let len = |s: &crate::model::NodeSpec| ((s.x_max - s.x_min) / resolution).floor() + 2.0;
    let head: f64 = nodes[..n - 1].iter().map(len).product();
    let tail = len(&nodes[n - 1]);
    if head > MAX_POINTS as f64 || tail > MAX_POINTS as f64 {
        return Err(Error::Instance(format!(
            "grid of {head} x {tail} points exceeds the {MAX_POINTS} cap per enumerated axis set"
        )));
    }
    let axes: Vec<Vec<f64>> = nodes.iter().map(|s| axis(s.x_min, s.x_max, resolution)).collect();

    let last = &nodes[n - 1];
    let last_axis = &axes[n - 1];
    let last_net: Vec<f64> = last_axis.iter().map(|&x| last.net_output(x)).collect();
    let demand = fleet.total_demand();

    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut idx = vec![0usize; n - 1];
    loop {
        let head: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        let head_net: f64 = nodes.iter().zip(&head).map(|(s, &x)| s.net_output(x)).sum();
        let head_cost: f64 = nodes.iter().zip(&head).map(|(s, &x)| s.cost.eval(x)).sum();
        // D = head_net + last_net[j] − demand, increasing in j
        let start = last_net.partition_point(|&p| head_net + p - demand < -band);
        for j in start..last_axis.len() {
            let d = head_net + last_net[j] - demand;
            if d > band {
                break;
            }
            let cost = head_cost + last.cost.eval(last_axis[j]);
            if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                let mut x = head.clone();
                x.push(last_axis[j]);
                best = Some((cost, x, d.abs()));
            }
        }

        // odometer over the head coordinates
        let mut k = 0;
        loop {
            if k == idx.len() {
                return finish(fleet, best, resolution, band);
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn finish(fleet: &Fleet, best: Option<(f64, Vec<f64>, f64)>, resolution: f64, band: f64) -> Result<GridSolution> {
    let (cost, x_grid, residual) = best.ok_or(Error::OracleInfeasible { resolution, band })?;
    Ok(GridSolution {
        x_grid,
        cost,
        residual,
        resolution,
        band,
        cost_band: cost_band(fleet, resolution, band),
    })
}

/// Centered difference `(f(at + h) − f(at − h)) / 2h`.
pub fn finite_difference(f: impl Fn(f64) -> f64, at: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Numeric(format!("step must be positive, got {h}")));
    }
    let (hi, lo) = (f(at + h), f(at - h));
    if !(hi.is_finite() && lo.is_finite()) {
        return Err(Error::Numeric(format!("non-finite evaluation near {at}")));
    }
    Ok((hi - lo) / (2.0 * h))
}
