//! TOML instance and scenario files.
//!
//! One document carries up to four sections:
//!
//! ```toml
//! [instance]
//! alpha_seed = 7            # optional, records how random alphas were drawn
//! [[instance.nodes]]
//! id = 1
//! a = 0.0
//! b = 2.0
//! c = 0.1
//! alpha = 0.001
//! x_min = 0.0
//! x_max = 10.0
//! demand = 4.0
//!
//! [topology]
//! edges = [[1, 2]]
//!
//! [sim]
//! k = 40.0
//! T = 0.005
//! horizon = 10.0
//! per_node_T = { "2" = 0.01 }
//! initial_lambda = { "1" = 3.0 }
//!
//! [[events]]
//! at = 5.0
//! kind = "demand_step"
//! node = 2
//! demand = 3.0
//! ```
//!
//! Instance files only need `[instance]`; scenario files also need
//! `[topology]` and `[sim]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::distsim::{EventKind, ScenarioEvent, SimConfig};
use crate::error::{Error, Result};
use crate::model::{validate_assumptions, Fleet, NodeId, NodeSpec, DEFAULT_SAMPLES};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: u32,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub alpha: f64,
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default)]
    pub demand: f64,
}

impl NodeDoc {
    pub fn to_spec(&self) -> NodeSpec {
        NodeSpec::quadratic(
            self.id,
            (self.a, self.b, self.c),
            self.alpha,
            self.x_min,
            self.x_max,
            self.demand,
        )
    }

    /// Fails for nodes whose cost or loss is not a plain quadratic.
    pub fn from_spec(spec: &NodeSpec) -> Result<NodeDoc> {
        let (a, b, c) = spec
            .cost
            .as_quadratic()
            .ok_or_else(|| Error::Parse(format!("node {}: cost is not quadratic", spec.id)))?;
        let alpha = match spec.loss.as_quadratic() {
            Some((0.0, 0.0, alpha)) => alpha,
            _ => {
                return Err(Error::Parse(format!(
                    "node {}: loss is not of the form alpha*x^2",
                    spec.id
                )))
            }
        };
        Ok(NodeDoc {
            id: spec.id.0,
            a,
            b,
            c,
            alpha,
            x_min: spec.x_min,
            x_max: spec.x_max,
            demand: spec.demand,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_seed: Option<u64>,
    pub nodes: Vec<Spanned<NodeDoc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub edges: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDoc {
    pub k: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub horizon: f64,
    #[serde(rename = "per_node_T", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_node_t: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_lambda: BTreeMap<String, f64>,
    #[serde(default)]
    pub rejoin_lambda: f64,
    #[serde(default)]
    pub allow_disconnect: bool,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventDoc {
    DemandStep {
        at: f64,
        node: u32,
        demand: f64,
    },
    NodeLeave {
        at: f64,
        node: u32,
    },
    NodeJoin {
        at: f64,
        node: NodeDoc,
        edges: Vec<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
    CapacityChange {
        at: f64,
        node: u32,
        x_min: f64,
        x_max: f64,
    },
}

impl EventDoc {
    fn to_event(&self) -> ScenarioEvent {
        match self {
            EventDoc::DemandStep { at, node, demand } => ScenarioEvent::new(
                *at,
                EventKind::DemandStep {
                    node: NodeId(*node),
                    demand: *demand,
                },
            ),
            EventDoc::NodeLeave { at, node } => ScenarioEvent::new(*at, EventKind::NodeLeave { node: NodeId(*node) }),
            EventDoc::NodeJoin {
                at,
                node,
                edges,
                lambda,
            } => ScenarioEvent::new(
                *at,
                EventKind::NodeJoin {
                    spec: node.to_spec(),
                    edges: edges.iter().copied().map(NodeId).collect(),
                    lambda: *lambda,
                },
            ),
            EventDoc::CapacityChange { at, node, x_min, x_max } => ScenarioEvent::new(
                *at,
                EventKind::CapacityChange {
                    node: NodeId(*node),
                    x_min: *x_min,
                    x_max: *x_max,
                },
            ),
        }
    }

    fn from_event(ev: &ScenarioEvent) -> Result<EventDoc> {
        let at = ev.at;
        Ok(match &ev.kind {
            EventKind::DemandStep { node, demand } => EventDoc::DemandStep {
                at,
                node: node.0,
                demand: *demand,
            },
            EventKind::NodeLeave { node } => EventDoc::NodeLeave { at, node: node.0 },
            EventKind::NodeJoin { spec, edges, lambda } => EventDoc::NodeJoin {
                at,
                node: NodeDoc::from_spec(spec)?,
                edges: edges.iter().map(|n| n.0).collect(),
                lambda: *lambda,
            },
            EventKind::CapacityChange { node, x_min, x_max } => EventDoc::CapacityChange {
                at,
                node: node.0,
                x_min: *x_min,
                x_max: *x_max,
            },
        })
    }
}

/// Raw document, before semantic validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub instance: InstanceDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Spanned<EventDoc>>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub fleet: Fleet,
    pub topology: Topology,
    pub config: SimConfig,
    pub events: Vec<ScenarioEvent>,
    pub alpha_seed: Option<u64>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn parse_doc(text: &str) -> Result<ScenarioDoc> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))
}

fn node_key(key: &str, table: &str) -> Result<NodeId> {
    key.trim()
        .parse::<u32>()
        .map(NodeId)
        .map_err(|_| Error::Parse(format!("[sim] {table}: key {key:?} is not a node id")))
}

fn fleet_from(doc: &InstanceDoc, text: &str) -> Result<Fleet> {
    let specs: Vec<NodeSpec> = doc.nodes.iter().map(|n| n.get_ref().to_spec()).collect();
    Fleet::new(specs).map_err(|e| {
        let culprit = match &e {
            Error::Assumptions(list) => list.first().map(|(id, _)| *id),
            Error::Instance(msg) => doc
                .nodes
                .iter()
                .rev()
                .find(|n| msg.ends_with(&format!(" {}", n.get_ref().id)))
                .map(|n| NodeId(n.get_ref().id)),
            _ => None,
        };
        let span = culprit.and_then(|id| doc.nodes.iter().rev().find(|n| n.get_ref().id == id.0));
        match span {
            Some(n) => Error::Parse(format!("line {}: {e}", line_of(text, n.span().start))),
            None => e,
        }
    })
}

/// Parses the `[instance]` section of a document; other sections are
/// syntax-checked but otherwise ignored.
pub fn parse_instance(text: &str) -> Result<Fleet> {
    let doc = parse_doc(text)?;
    fleet_from(&doc.instance, text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc = parse_doc(text)?;
    let fleet = fleet_from(&doc.instance, text)?;
    let topo_doc = doc
        .topology
        .as_ref()
        .ok_or_else(|| Error::Parse("missing [topology] section".into()))?;
    let sim = doc
        .sim
        .as_ref()
        .ok_or_else(|| Error::Parse("missing [sim] section".into()))?;

    let topology = Topology::build(
        fleet.ids(),
        topo_doc.edges.iter().map(|[a, b]| (NodeId(*a), NodeId(*b))),
    )?;

    let mut config = SimConfig::new(sim.k, sim.t, sim.horizon);
    for (key, &t) in &sim.per_node_t {
        config.per_node_sampling.insert(node_key(key, "per_node_T")?, t);
    }
    for (key, &l) in &sim.initial_lambda {
        config.initial_lambda.insert(node_key(key, "initial_lambda")?, l);
    }
    config.rejoin_lambda = sim.rejoin_lambda;
    config.allow_disconnect = sim.allow_disconnect;
    config.record_every = sim.record_every;
    config.validate()?;

    let mut events = Vec::with_capacity(doc.events.len());
    for (i, ev) in doc.events.iter().enumerate() {
        let e = ev.get_ref().to_event();
        let line = line_of(text, ev.span().start);
        if !(e.at >= 0.0 && e.at <= config.horizon) {
            return Err(Error::Parse(format!(
                "line {line}: event at t={} outside [0, {}]",
                e.at, config.horizon
            )));
        }
        if i > 0 && e.at < events.last().map_or(0.0, |p: &ScenarioEvent| p.at) {
            return Err(Error::Parse(format!("line {line}: events must be sorted by time")));
        }
        check_payload(&e.kind).map_err(|msg| Error::Parse(format!("line {line}: {msg}")))?;
        events.push(e);
    }
    Ok(Scenario {
        fleet,
        topology,
        config,
        events,
        alpha_seed: doc.instance.alpha_seed,
    })
}

/// Catches bad event data at load time instead of mid-run.
fn check_payload(kind: &EventKind) -> std::result::Result<(), String> {
    match kind {
        EventKind::DemandStep { demand, .. } if !demand.is_finite() => Err(format!("demand {demand} is not finite")),
        EventKind::CapacityChange { x_min, x_max, .. }
            if !(x_min.is_finite() && x_max.is_finite() && x_min <= x_max) =>
        {
            Err(format!("capacity [{x_min}, {x_max}] is not a finite interval"))
        }
        EventKind::NodeJoin { lambda: Some(l), .. } if !l.is_finite() => Err(format!("join price {l} is not finite")),
        EventKind::NodeJoin { spec, .. } => {
            let failures = validate_assumptions(std::slice::from_ref(spec), DEFAULT_SAMPLES)
                .map_err(|e| e.to_string())?
                .failures();
            match failures.first() {
                Some((id, c)) => Err(format!("joining node {id}: {c}")),
                None => Ok(()),
            }
        }
        _ => Ok(()),
    }
}

fn instance_doc(fleet: &Fleet, alpha_seed: Option<u64>) -> Result<InstanceDoc> {
    Ok(InstanceDoc {
        alpha_seed,
        nodes: fleet
            .nodes()
            .iter()
            .map(|n| NodeDoc::from_spec(n).map(|v| Spanned::new(0..0, v)))
            .collect::<Result<_>>()?,
    })
}

fn to_text(doc: &ScenarioDoc) -> Result<String> {
    toml::to_string(doc).map_err(|e| Error::Parse(format!("serializing: {e}")))
}

pub fn instance_to_toml(fleet: &Fleet, alpha_seed: Option<u64>) -> Result<String> {
    to_text(&ScenarioDoc {
        instance: instance_doc(fleet, alpha_seed)?,
        topology: None,
        sim: None,
        events: Vec::new(),
    })
}

impl Scenario {
    pub fn to_toml(&self) -> Result<String> {
        let c = &self.config;
        let keyed = |m: &BTreeMap<NodeId, f64>| m.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        to_text(&ScenarioDoc {
            instance: instance_doc(&self.fleet, self.alpha_seed)?,
            topology: Some(TopologyDoc {
                edges: self.topology.edges().map(|(a, b)| [a.0, b.0]).collect(),
            }),
            sim: Some(SimDoc {
                k: c.gain,
                t: c.sampling,
                horizon: c.horizon,
                per_node_t: keyed(&c.per_node_sampling),
                initial_lambda: keyed(&c.initial_lambda),
                rejoin_lambda: c.rejoin_lambda,
                allow_disconnect: c.allow_disconnect,
                record_every: c.record_every,
            }),
            events: self
                .events
                .iter()
                .map(|e| EventDoc::from_event(e).map(|v| Spanned::new(0..0, v)))
                .collect::<Result<_>>()?,
        })
    }
}
