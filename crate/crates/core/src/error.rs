use std::fmt;

use crate::model::{Condition, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    Instance(String),

    #[error("assumptions violated: {}", AssumptionList(.0))]
    Assumptions(Vec<(NodeId, Condition)>),

    #[error("infeasible instance: lower slack {lower}, upper slack {upper}")]
    Infeasible { lower: f64, upper: f64 },

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{what} did not converge within {iterations} iterations (residual {residual})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("topology: {0}")]
    Topology(String),

    #[error("state: {0}")]
    State(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("no grid point within band {band} at resolution {resolution}")]
    OracleInfeasible { resolution: f64, band: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

struct AssumptionList<'a>(&'a [(NodeId, Condition)]);

impl fmt::Display for AssumptionList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (node, cond)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "node {node}: {cond}")?;
        }
        Ok(())
    }
}
