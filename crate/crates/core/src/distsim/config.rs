use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{NodeId, NodeSpec};

/// Default cap on recorded trace rows before uniform thinning kicks in.
pub const DEFAULT_MAX_ROWS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Coupling gain `k` on the consensus term.
    pub gain: f64,
    /// Sampling time shared by every node without an override.
    pub sampling: f64,
    /// Per-node sampling times. A nonempty map selects the asynchronous engine.
    pub per_node_sampling: BTreeMap<NodeId, f64>,
    pub horizon: f64,
    /// Initial prices; missing nodes start at zero.
    pub initial_lambda: BTreeMap<NodeId, f64>,
    /// Price a node starts from when it joins mid-run.
    pub rejoin_lambda: f64,
    /// Keep simulating when a departure splits the graph.
    pub allow_disconnect: bool,
    /// Record every n-th update instant.
    pub record_every: usize,
    pub max_rows: usize,
}

impl SimConfig {
    pub fn new(gain: f64, sampling: f64, horizon: f64) -> Self {
        SimConfig {
            gain,
            sampling,
            per_node_sampling: BTreeMap::new(),
            horizon,
            initial_lambda: BTreeMap::new(),
            rejoin_lambda: 0.0,
            allow_disconnect: false,
            record_every: 1,
            max_rows: DEFAULT_MAX_ROWS,
        }
    }

    pub fn sampling_of(&self, id: NodeId) -> f64 {
        self.per_node_sampling.get(&id).copied().unwrap_or(self.sampling)
    }

    pub fn initial_of(&self, id: NodeId) -> f64 {
        self.initial_lambda.get(&id).copied().unwrap_or(0.0)
    }

    pub fn is_asynchronous(&self) -> bool {
        !self.per_node_sampling.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.gain) {
            return Err(Error::Scenario(format!(
                "coupling gain must be positive, got {}",
                self.gain
            )));
        }
        if !positive(self.sampling) {
            return Err(Error::Scenario(format!(
                "sampling time must be positive, got {}",
                self.sampling
            )));
        }
        if let Some((id, t)) = self.per_node_sampling.iter().find(|(_, &t)| !positive(t)) {
            return Err(Error::Scenario(format!(
                "sampling time of node {id} must be positive, got {t}"
            )));
        }
        if !positive(self.horizon) {
            return Err(Error::Scenario(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if let Some((id, l)) = self.initial_lambda.iter().find(|(_, l)| !l.is_finite()) {
            return Err(Error::Scenario(format!(
                "initial price of node {id} is not finite ({l})"
            )));
        }
        if !self.rejoin_lambda.is_finite() {
            return Err(Error::Scenario("rejoin price is not finite".into()));
        }
        if self.record_every == 0 || self.max_rows == 0 {
            return Err(Error::Scenario("record_every and max_rows must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    DemandStep {
        node: NodeId,
        demand: f64,
    },
    NodeLeave {
        node: NodeId,
    },
    NodeJoin {
        spec: NodeSpec,
        /// Live nodes the newcomer links to.
        edges: Vec<NodeId>,
        /// Overrides [`SimConfig::rejoin_lambda`].
        lambda: Option<f64>,
    },
    CapacityChange {
        node: NodeId,
        x_min: f64,
        x_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub at: f64,
    pub kind: EventKind,
}

impl ScenarioEvent {
    pub fn new(at: f64, kind: EventKind) -> Self {
        ScenarioEvent { at, kind }
    }

    pub fn node(&self) -> NodeId {
        match &self.kind {
            EventKind::DemandStep { node, .. }
            | EventKind::NodeLeave { node }
            | EventKind::CapacityChange { node, .. } => *node,
            EventKind::NodeJoin { spec, .. } => spec.id,
        }
    }
}

pub(crate) fn check_events(events: &[ScenarioEvent], horizon: f64) -> Result<()> {
    for (i, ev) in events.iter().enumerate() {
        if !(ev.at >= 0.0 && ev.at <= horizon) {
            return Err(Error::Scenario(format!(
                "event {} at t={} lies outside [0, {horizon}]",
                i + 1,
                ev.at
            )));
        }
        if i > 0 && ev.at < events[i - 1].at {
            return Err(Error::Scenario(format!(
                "event {} at t={} is out of time order",
                i + 1,
                ev.at
            )));
        }
    }
    Ok(())
}
