use std::io;

use crate::error::{Error, Result};
use crate::model::{Fleet, NodeId};
use crate::topology::Topology;

pub const TRACE_HEADER: [&str; 9] = [
    "t",
    "node",
    "lambda",
    "x_hat",
    "grad",
    "mismatch",
    "cost",
    "lyapunov",
    "disagreement",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub node: NodeId,
    pub lambda: f64,
    pub x_hat: f64,
    /// Local dual gradient `d − x̂ + φ(x̂)`.
    pub grad: f64,
}

/// State of every live node at one update instant, plus network aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    /// Ascending by node id.
    pub rows: Vec<TraceRow>,
    /// `Σ (d − x + φ(x))`
    pub mismatch: f64,
    pub cost: f64,
    pub lyapunov: f64,
    /// `max_i |λ_i − mean λ|`
    pub disagreement: f64,
}

impl Snapshot {
    pub fn mean_lambda(&self) -> f64 {
        self.rows.iter().map(|r| r.lambda).sum::<f64>() / self.rows.len() as f64
    }

    pub fn lambda_of(&self, id: NodeId) -> Option<f64> {
        self.rows
            .binary_search_by_key(&id, |r| r.node)
            .ok()
            .map(|i| self.rows[i].lambda)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|r| r.lambda.is_finite() && r.x_hat.is_finite())
            && self.mismatch.is_finite()
            && self.lyapunov.is_finite()
    }
}

/// Stretch of simulated time with a fixed instance and graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub fleet: Fleet,
    pub topology: Topology,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub(crate) snapshots: Vec<Snapshot>,
    pub(crate) segments: Vec<Segment>,
    pub(crate) thinned: bool,
}

impl Trace {
    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Whether the row cap forced uniform thinning.
    pub fn thinned(&self) -> bool {
        self.thinned
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn row_count(&self) -> usize {
        self.snapshots.iter().map(|s| s.rows.len()).sum()
    }

    pub fn final_fleet(&self) -> &Fleet {
        &self.segments.last().expect("trace has at least one segment").fleet
    }

    pub fn final_topology(&self) -> &Topology {
        &self.segments.last().expect("trace has at least one segment").topology
    }

    /// `(t, mean λ)` for every snapshot.
    pub fn mean_lambda_series(&self) -> Vec<(f64, f64)> {
        self.snapshots.iter().map(|s| (s.t, s.mean_lambda())).collect()
    }

    /// Writes one CSV row per (time, node) with the aggregates repeated.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io_err = |e: csv::Error| Error::Numeric(format!("writing trace: {e}"));
        w.write_record(TRACE_HEADER).map_err(io_err)?;
        for s in &self.snapshots {
            for r in &s.rows {
                w.write_record([
                    s.t.to_string(),
                    r.node.to_string(),
                    r.lambda.to_string(),
                    r.x_hat.to_string(),
                    r.grad.to_string(),
                    s.mismatch.to_string(),
                    s.cost.to_string(),
                    s.lyapunov.to_string(),
                    s.disagreement.to_string(),
                ])
                .map_err(io_err)?;
            }
        }
        w.flush().map_err(|e| Error::Numeric(format!("writing trace: {e}")))
    }
}
