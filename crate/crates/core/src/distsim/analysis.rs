use std::fmt;

use super::engine::Network;
use super::trace::{Snapshot, Trace};
use crate::error::{Error, Result};
use crate::model::{feasibility_margin, Fleet};

/// Network-wide quantities recomputed from the recorded prices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticSeries {
    pub t: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub mismatch: Vec<f64>,
    pub cost: Vec<f64>,
    pub disagreement: Vec<f64>,
    pub mean_lambda: Vec<f64>,
}

/// Recomputes the aggregates of every snapshot against the instance in effect
/// at its time.
pub fn diagnostics(trace: &Trace, gain: f64) -> Result<DiagnosticSeries> {
    if trace.snapshots.is_empty() {
        return Err(Error::Analysis("empty trace".into()));
    }
    let mut out = DiagnosticSeries::default();
    let mut seg_idx = 0;
    let mut net = network_for(trace, 0)?;
    for s in &trace.snapshots {
        let mut next = seg_idx;
        while next + 1 < trace.segments.len() && trace.segments[next + 1].start <= s.t {
            next += 1;
        }
        if next != seg_idx {
            seg_idx = next;
            net = network_for(trace, seg_idx)?;
        }
        let lam: Vec<f64> = s.rows.iter().map(|r| r.lambda).collect();
        if net.ids().len() != lam.len() || net.ids().iter().zip(&s.rows).any(|(id, r)| *id != r.node) {
            return Err(Error::Analysis(format!(
                "snapshot at t={} does not match its segment",
                s.t
            )));
        }
        let d = net.snapshot(s.t, &lam, gain);
        out.t.push(d.t);
        out.lyapunov.push(d.lyapunov);
        out.mismatch.push(d.mismatch);
        out.cost.push(d.cost);
        out.disagreement.push(d.disagreement);
        out.mean_lambda.push(d.mean_lambda());
    }
    Ok(out)
}

fn network_for(trace: &Trace, i: usize) -> Result<Network> {
    let seg = &trace.segments[i];
    Network::new(seg.fleet.clone(), &seg.topology)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Converged,
    DivergingUp,
    DivergingDown,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Converged => "converged",
            Classification::DivergingUp => "diverging_up",
            Classification::DivergingDown => "diverging_down",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceOptions {
    /// Trailing window length; defaults to `max(20 % of the span, 2)`.
    pub window: Option<f64>,
    /// Slope magnitude below which a feasible run counts as converged.
    pub slope_tol: f64,
}

impl Default for DivergenceOptions {
    fn default() -> Self {
        DivergenceOptions {
            window: None,
            slope_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub classification: Classification,
    /// Least-squares slope of the mean price over the window.
    pub slope: f64,
    /// Drift rate of the mean price predicted by the feasibility slacks;
    /// `None` for a feasible instance.
    pub analytic_rate: Option<f64>,
    /// `|slope − rate| / |rate|` when a rate is predicted.
    pub relative_error: Option<f64>,
    pub window: (f64, f64),
}

/// Asymptotic drift of the mean price for an infeasible instance: every node
/// pins to one end of its interval, so the mean moves at `(aggregate gradient)/N`.
pub fn analytic_rate(fleet: &Fleet) -> Option<f64> {
    let m = feasibility_margin(fleet);
    let n = fleet.len() as f64;
    if m.upper_slack < 0.0 {
        Some(-m.upper_slack / n)
    } else if m.lower_slack < 0.0 {
        Some(m.lower_slack / n)
    } else {
        None
    }
}

/// Classifies the end of the trace against its final instance, using only
/// the snapshots recorded since the last event.
pub fn detect_divergence(trace: &Trace, options: DivergenceOptions) -> Result<DivergenceReport> {
    let (start, end) = match (trace.segments.last(), trace.snapshots.last()) {
        (Some(seg), Some(s)) => (seg.start, s.t),
        _ => return Err(Error::Analysis("empty trace".into())),
    };
    detect_divergence_between(trace, start, end + 1.0, options)
}

/// Classifies the snapshots with `start ≤ t < end`, judged against the
/// instance in effect at the last of them.
pub fn detect_divergence_between(
    trace: &Trace,
    start: f64,
    end: f64,
    options: DivergenceOptions,
) -> Result<DivergenceReport> {
    let selected: Vec<&Snapshot> = trace.snapshots.iter().filter(|s| s.t >= start && s.t < end).collect();
    let (first, last) = match (selected.first(), selected.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::Analysis(format!("no snapshots in [{start}, {end})"))),
    };
    let span = last - first;
    let window = options.window.unwrap_or((0.2 * span).max(2.0));
    if window.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || window > span {
        return Err(Error::Analysis(format!(
            "window {window} exceeds the {span} s of trace available"
        )));
    }
    let points: Vec<(f64, f64)> = selected
        .iter()
        .filter(|s| s.t >= last - window)
        .map(|s| (s.t, s.mean_lambda()))
        .collect();
    if points.len() < 3 {
        return Err(Error::Analysis("fewer than three snapshots in the window".into()));
    }
    let slope = least_squares_slope(&points);
    if !slope.is_finite() {
        return Err(Error::Analysis("non-finite prices in the window".into()));
    }

    let fleet = &trace
        .segments
        .iter()
        .rev()
        .find(|seg| seg.start <= last)
        .expect("first segment starts at zero")
        .fleet;
    let rate = analytic_rate(fleet);
    let threshold = rate.map_or(options.slope_tol, |r| 0.5 * r.abs());
    let classification = if slope > threshold {
        Classification::DivergingUp
    } else if slope < -threshold {
        Classification::DivergingDown
    } else {
        Classification::Converged
    };
    Ok(DivergenceReport {
        classification,
        slope,
        analytic_rate: rate,
        relative_error: rate.map(|r| (slope - r).abs() / r.abs()),
        window: (last - window, last),
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), &(t, y)| {
        (num + (t - mt) * (y - my), den + (t - mt) * (t - mt))
    });
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instability {
    /// A price or aggregate became non-finite at `t`.
    NonFinite { t: f64 },
    /// Price disagreement grew monotonically over the second half of the run.
    DisagreementGrowth { from: f64, to: f64 },
}

/// Flags runs whose sampling time is too large for the forward-difference
/// scheme. Local gradients are bounded, so growth shows up in the spread of
/// prices rather than in the mismatch.
pub fn numerical_instability(trace: &Trace) -> Option<Instability> {
    const BLOCKS: usize = 8;

    if let Some(s) = trace
        .snapshots
        .iter()
        .find(|s| !s.is_finite() || !s.disagreement.is_finite())
    {
        return Some(Instability::NonFinite { t: s.t });
    }
    let tail = &trace.snapshots[trace.snapshots.len() / 2..];
    if tail.len() < BLOCKS {
        return None;
    }
    let size = tail.len() / BLOCKS;
    let envelope: Vec<f64> = tail
        .chunks(size)
        .take(BLOCKS)
        .map(|c| c.iter().map(|s| s.disagreement).fold(0.0, f64::max))
        .collect();
    let (from, to) = (envelope[0], envelope[BLOCKS - 1]);
    let growing = envelope.windows(2).all(|w| w[1] > w[0]);
    (growing && to > 10.0 * from && to > 1e-9).then_some(Instability::DisagreementGrowth { from, to })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distsim::{run, SimConfig};
    use crate::model::{NodeId, NodeSpec};
    use crate::topology::Topology;
    use approx::assert_abs_diff_eq;

    fn line(demand: f64) -> (Fleet, Topology) {
        let fleet = Fleet::new(vec![
            NodeSpec::quadratic(1, (0.0, 2.0, 0.1), 0.0, 0.0, 10.0, demand),
            NodeSpec::quadratic(2, (0.0, 1.0, 0.1), 0.0, 0.0, 10.0, demand),
            NodeSpec::fixed(3, 0.0, demand),
        ])
        .unwrap();
        let topo = Topology::build([1, 2, 3].map(NodeId), [(NodeId(1), NodeId(2)), (NodeId(2), NodeId(3))]).unwrap();
        (fleet, topo)
    }

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 - 1.0)).collect();
        assert_abs_diff_eq!(least_squares_slope(&pts), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn over_demand_drifts_up_at_the_predicted_rate() {
        let (fleet, topo) = line(10.0);
        let trace = run(&fleet, &topo, &SimConfig::new(1.0, 0.01, 30.0), &[]).unwrap();
        let rep = detect_divergence(&trace, DivergenceOptions::default()).unwrap();
        assert_eq!(rep.classification, Classification::DivergingUp);
        // capacity 20 against demand 30 over three nodes
        assert_abs_diff_eq!(rep.analytic_rate.unwrap(), 10.0 / 3.0, epsilon = 1e-12);
        assert!(rep.relative_error.unwrap() < 0.05);
    }

    #[test]
    fn feasible_run_converges() {
        let (fleet, topo) = line(3.0);
        let trace = run(&fleet, &topo, &SimConfig::new(1.0, 0.01, 30.0), &[]).unwrap();
        let rep = detect_divergence(&trace, DivergenceOptions::default()).unwrap();
        assert_eq!(rep.classification, Classification::Converged);
        assert_eq!(rep.analytic_rate, None);
        assert_eq!(numerical_instability(&trace), None);
    }

    #[test]
    fn window_longer_than_trace_is_an_error() {
        let (fleet, topo) = line(3.0);
        let trace = run(&fleet, &topo, &SimConfig::new(1.0, 0.01, 1.0), &[]).unwrap();
        assert!(matches!(
            detect_divergence(&trace, DivergenceOptions::default()),
            Err(Error::Analysis(_))
        ));
    }

    #[test]
    fn oversized_step_is_flagged() {
        let (fleet, topo) = line(3.0);
        // 1 − T·k·σ_max = 1 − 3 < −1
        let trace = run(&fleet, &topo, &SimConfig::new(1.0, 1.0, 200.0), &[]).unwrap();
        assert!(numerical_instability(&trace).is_some());
    }

    #[test]
    fn diagnostics_match_recorded_aggregates() {
        let (fleet, topo) = line(3.0);
        let trace = run(&fleet, &topo, &SimConfig::new(2.0, 0.05, 3.0), &[]).unwrap();
        let d = diagnostics(&trace, 2.0).unwrap();
        for (s, v) in trace.snapshots().iter().zip(&d.lyapunov) {
            assert_eq!(s.lyapunov, *v);
        }
    }
}
