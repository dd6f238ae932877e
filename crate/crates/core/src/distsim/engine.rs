use std::collections::BTreeMap;

use log::{debug, warn};

use super::config::{check_events, EventKind, ScenarioEvent, SimConfig};
use super::trace::{Segment, Snapshot, Trace, TraceRow};
use crate::error::{Error, Result};
use crate::kernel::NodeKernel;
use crate::model::{Fleet, NodeId};
use crate::topology::Topology;

/// Per-node prices keyed by node id.
pub type LambdaState = BTreeMap<NodeId, f64>;

/// Two instants closer than this are the same update instant.
fn time_eps(t: f64) -> f64 {
    1e-9 * t.abs().max(1.0)
}

/// Instance and graph with nodes stored in ascending id order, so dense
/// vectors of prices line up with kernels and Laplacian rows.
#[derive(Debug, Clone)]
pub(crate) struct Network {
    fleet: Fleet,
    topo: Topology,
    kernels: Vec<NodeKernel>,
}

impl Network {
    pub(crate) fn new(fleet: Fleet, topo: &Topology) -> Result<Self> {
        let mut ids: Vec<NodeId> = fleet.ids().collect();
        ids.sort();
        let mut graph_ids = topo.node_ids().to_vec();
        graph_ids.sort();
        if ids != graph_ids {
            return Err(Error::State("graph and instance node sets differ".into()));
        }
        let topo = Topology::build(ids.iter().copied(), topo.edges())?;
        let kernels = ids
            .iter()
            .map(|id| NodeKernel::new(fleet.get(*id).expect("id taken from fleet").clone()))
            .collect();
        Ok(Network { fleet, topo, kernels })
    }

    pub(crate) fn ids(&self) -> &[NodeId] {
        self.topo.node_ids()
    }

    fn dense(&self, state: &LambdaState) -> Result<Vec<f64>> {
        if state.len() != self.ids().len() {
            return Err(Error::State(format!(
                "state holds {} prices for {} nodes",
                state.len(),
                self.ids().len()
            )));
        }
        self.ids()
            .iter()
            .map(|id| {
                state
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::State(format!("no price for node {id}")))
            })
            .collect()
    }

    /// Forward-difference update of node `i` from the prices `lam`.
    fn update(&self, i: usize, lam: &[f64], gain: f64, sampling: f64) -> f64 {
        let li = lam[i];
        let coupling: f64 = self.topo.neighbor_indices(i).iter().map(|&j| lam[j] - li).sum();
        li + sampling * self.kernels[i].dual_gradient(li) + sampling * gain * coupling
    }

    pub(crate) fn snapshot(&self, t: f64, lam: &[f64], gain: f64) -> Snapshot {
        let mut rows = Vec::with_capacity(lam.len());
        let (mut mismatch, mut cost, mut dual) = (0.0, 0.0, 0.0);
        for ((k, &l), &node) in self.kernels.iter().zip(lam).zip(self.ids()) {
            let x = k.x_hat(l);
            let spec = k.spec();
            let grad = spec.shortfall(x);
            let f = spec.cost.eval(x);
            mismatch += grad;
            cost += f;
            dual += f + l * grad;
            rows.push(TraceRow {
                node,
                lambda: l,
                x_hat: x,
                grad,
            });
        }
        let mean = lam.iter().sum::<f64>() / lam.len() as f64;
        let disagreement = lam.iter().map(|l| (l - mean).abs()).fold(0.0, f64::max);
        Snapshot {
            t,
            rows,
            mismatch,
            cost,
            lyapunov: -dual + 0.5 * gain * self.topo.quadratic_form(lam),
            disagreement,
        }
    }

    /// Applies one event, returning the new network.
    fn apply(&self, ev: &ScenarioEvent, allow_disconnect: bool) -> Result<Network> {
        let live = |id: NodeId| {
            if self.topo.contains(id) {
                Ok(())
            } else {
                Err(Error::Scenario(format!(
                    "event at t={} targets unknown or departed node {id}",
                    ev.at
                )))
            }
        };
        let scenario = |e: Error| Error::Scenario(format!("event at t={}: {e}", ev.at));
        let (fleet, topo) = match &ev.kind {
            EventKind::DemandStep { node, demand } => {
                live(*node)?;
                (
                    self.fleet.with_demand(*node, *demand).map_err(scenario)?,
                    self.topo.clone(),
                )
            }
            EventKind::CapacityChange { node, x_min, x_max } => {
                live(*node)?;
                (
                    self.fleet.with_capacity(*node, *x_min, *x_max).map_err(scenario)?,
                    self.topo.clone(),
                )
            }
            EventKind::NodeLeave { node } => {
                live(*node)?;
                if self.topo.len() == 1 {
                    return Err(Error::Scenario(format!("node {node} is the last one and cannot leave")));
                }
                (
                    self.fleet.without(*node).map_err(scenario)?,
                    self.topo.without_node(*node)?,
                )
            }
            EventKind::NodeJoin { spec, edges, .. } => {
                if self.topo.contains(spec.id) {
                    return Err(Error::Scenario(format!(
                        "node {} joins at t={} but is already live",
                        spec.id, ev.at
                    )));
                }
                for &n in edges {
                    live(n)?;
                }
                (
                    self.fleet.with_node(spec.clone()).map_err(scenario)?,
                    self.topo.with_node(spec.id, edges)?,
                )
            }
        };
        if !allow_disconnect && !topo.is_connected() {
            return Err(Error::Topology(format!("event at t={} disconnects the graph", ev.at)));
        }
        Network::new(fleet, &topo)
    }

    pub(crate) fn segment(&self, start: f64) -> Segment {
        Segment {
            start,
            end: start,
            fleet: self.fleet.clone(),
            topology: self.topo.clone(),
        }
    }
}

/// One synchronous update of every node from the same price vector.
pub fn step_synchronous(
    state: &LambdaState,
    fleet: &Fleet,
    topo: &Topology,
    gain: f64,
    sampling: f64,
) -> Result<LambdaState> {
    let net = Network::new(fleet.clone(), topo)?;
    let lam = net.dense(state)?;
    Ok(net
        .ids()
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, net.update(i, &lam, gain, sampling)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
struct ClockEntry {
    id: NodeId,
    period: f64,
    /// Index of the next tick; it fires at `count·period`.
    count: u64,
    /// Value neighbors currently see.
    held: f64,
}

impl ClockEntry {
    fn next_tick(&self) -> f64 {
        self.count as f64 * self.period
    }
}

/// First tick index strictly after `t` for a clock of the given period.
fn first_tick_after(t: f64, period: f64) -> u64 {
    let mut count = (t / period).floor().max(0.0) as u64;
    while count as f64 * period <= t + time_eps(t) {
        count += 1;
    }
    count
}

/// Per-node clocks of the asynchronous engine.
///
/// All clocks share phase zero and first fire one period in. At a tick a node
/// reads the values its neighbors currently hold, replaces its own held value
/// with the update, and schedules its next tick one period later. Ticks that
/// coincide form one batch and all read the pre-batch values.
#[derive(Debug, Clone, PartialEq)]
pub struct AsyncClock {
    entries: Vec<ClockEntry>,
    time: f64,
}

impl AsyncClock {
    /// Clocks for `ids` with prices and periods taken from `config`.
    pub fn new(ids: impl IntoIterator<Item = NodeId>, config: &SimConfig) -> Self {
        let mut entries: Vec<ClockEntry> = ids
            .into_iter()
            .map(|id| ClockEntry {
                id,
                period: config.sampling_of(id),
                count: 1,
                held: config.initial_of(id),
            })
            .collect();
        entries.sort_by_key(|e| e.id);
        AsyncClock { entries, time: 0.0 }
    }

    /// Instant of the last processed batch, zero before the first.
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Instant of the next batch.
    pub fn next_time(&self) -> f64 {
        self.entries
            .iter()
            .map(ClockEntry::next_tick)
            .fold(f64::INFINITY, f64::min)
    }

    /// Prices currently visible to neighbors.
    pub fn held(&self) -> LambdaState {
        self.entries.iter().map(|e| (e.id, e.held)).collect()
    }

    fn check_ids(&self, net: &Network) -> Result<()> {
        if self.entries.len() != net.ids().len() || self.entries.iter().zip(net.ids()).any(|(e, id)| e.id != *id) {
            return Err(Error::State("clock and network node sets differ".into()));
        }
        Ok(())
    }

    /// Processes the next batch of ticks and returns its instant.
    fn advance(&mut self, net: &Network, gain: f64) -> f64 {
        let t = self.next_time();
        let eps = time_eps(t);
        let lam: Vec<f64> = self.entries.iter().map(|e| e.held).collect();
        for (i, e) in self.entries.iter_mut().enumerate() {
            if e.next_tick() <= t + eps {
                e.held = net.update(i, &lam, gain, e.period);
                e.count += 1;
            }
        }
        self.time = t;
        t
    }
}

/// Processes the next batch of ticks on a copy of `clock`.
pub fn step_asynchronous(clock: &AsyncClock, fleet: &Fleet, topo: &Topology, config: &SimConfig) -> Result<AsyncClock> {
    let net = Network::new(fleet.clone(), topo)?;
    clock.check_ids(&net)?;
    let mut next = clock.clone();
    next.advance(&net, config.gain);
    Ok(next)
}

/// Price state of a run under either engine.
enum Stepper {
    Synchronous { lam: Vec<f64>, sampling: f64, count: u64 },
    Asynchronous(AsyncClock),
}

impl Stepper {
    fn next_tick(&self) -> f64 {
        match self {
            Stepper::Synchronous { sampling, count, .. } => *count as f64 * sampling,
            Stepper::Asynchronous(clock) => clock.next_time(),
        }
    }

    fn advance(&mut self, net: &Network, gain: f64) {
        match self {
            Stepper::Synchronous { lam, sampling, count } => {
                *lam = (0..lam.len()).map(|i| net.update(i, lam, gain, *sampling)).collect();
                *count += 1;
            }
            Stepper::Asynchronous(clock) => {
                clock.advance(net, gain);
            }
        }
    }

    fn prices(&self) -> Vec<f64> {
        match self {
            Stepper::Synchronous { lam, .. } => lam.clone(),
            Stepper::Asynchronous(clock) => clock.entries.iter().map(|e| e.held).collect(),
        }
    }

    /// Realigns with `net` after a membership change at `t`; newcomers start
    /// from `lambda`.
    fn remap(&mut self, old_ids: &[NodeId], net: &Network, t: f64, lambda: f64, config: &SimConfig) {
        match self {
            Stepper::Synchronous { lam, .. } => {
                let prev: LambdaState = old_ids.iter().copied().zip(lam.iter().copied()).collect();
                *lam = net
                    .ids()
                    .iter()
                    .map(|id| prev.get(id).copied().unwrap_or(lambda))
                    .collect();
            }
            Stepper::Asynchronous(clock) => {
                let mut old: BTreeMap<NodeId, ClockEntry> = clock.entries.drain(..).map(|e| (e.id, e)).collect();
                clock.entries = net
                    .ids()
                    .iter()
                    .map(|&id| {
                        old.remove(&id).unwrap_or_else(|| {
                            let period = config.sampling_of(id);
                            ClockEntry {
                                id,
                                period,
                                count: first_tick_after(t, period),
                                held: lambda,
                            }
                        })
                    })
                    .collect();
            }
        }
    }
}

/// Decimating, row-capped snapshot store.
struct Recorder {
    every: usize,
    max_rows: usize,
    stride: usize,
    counter: usize,
    rows: usize,
    snapshots: Vec<Snapshot>,
    thinned: bool,
}

impl Recorder {
    fn new(config: &SimConfig) -> Self {
        Recorder {
            every: config.record_every,
            max_rows: config.max_rows,
            stride: 1,
            counter: 0,
            rows: 0,
            snapshots: Vec::new(),
            thinned: false,
        }
    }

    fn due(&mut self) -> bool {
        let due = self.counter.is_multiple_of(self.every * self.stride);
        self.counter += 1;
        due
    }

    fn push(&mut self, s: Snapshot) {
        self.rows += s.rows.len();
        self.snapshots.push(s);
        while self.rows > self.max_rows && self.snapshots.len() > 1 {
            let mut i = 0;
            self.snapshots.retain(|_| {
                i += 1;
                (i - 1) % 2 == 0
            });
            self.stride *= 2;
            self.rows = self.snapshots.iter().map(|s| s.rows.len()).sum();
            if !self.thinned {
                warn!("trace exceeds {} rows; thinning uniformly", self.max_rows);
            }
            self.thinned = true;
        }
    }
}

fn joined_lambda(ev: &ScenarioEvent, config: &SimConfig) -> f64 {
    match &ev.kind {
        EventKind::NodeJoin { lambda, .. } => lambda.unwrap_or(config.rejoin_lambda),
        _ => config.rejoin_lambda,
    }
}

/// Simulates the algorithm over `[0, horizon]`.
///
/// The timeline is the union of update instants and event times. At each
/// instant the due nodes update first, using the instance in force until
/// then; events due at that instant apply next; then a snapshot is taken.
/// A nonempty [`SimConfig::per_node_sampling`] selects the asynchronous
/// engine; with every period equal the two engines produce identical traces.
/// A run stops early at the first non-finite price.
pub fn run(fleet: &Fleet, topo: &Topology, config: &SimConfig, events: &[ScenarioEvent]) -> Result<Trace> {
    config.validate()?;
    check_events(events, config.horizon)?;
    if !config.allow_disconnect && !topo.is_connected() {
        return Err(Error::Topology("communication graph is disconnected".into()));
    }
    let mut net = Network::new(fleet.clone(), topo)?;
    if let Some(id) = config.initial_lambda.keys().find(|id| !topo.contains(**id)) {
        return Err(Error::Scenario(format!("initial price given for unknown node {id}")));
    }
    let mut stepper = if config.is_asynchronous() {
        Stepper::Asynchronous(AsyncClock::new(net.ids().iter().copied(), config))
    } else {
        Stepper::Synchronous {
            lam: net.ids().iter().map(|&id| config.initial_of(id)).collect(),
            sampling: config.sampling,
            count: 1,
        }
    };
    let mut segments = vec![net.segment(0.0)];
    let mut recorder = Recorder::new(config);
    let mut pending = events.iter().peekable();
    let horizon_end = config.horizon + time_eps(config.horizon);
    let mut t = 0.0;
    let mut first = true;

    loop {
        if !first {
            let tick = stepper.next_tick();
            t = pending.peek().map_or(tick, |ev| tick.min(ev.at));
            if t > horizon_end {
                break;
            }
            if tick <= t + time_eps(t) {
                stepper.advance(&net, config.gain);
            }
        }
        first = false;

        while let Some(ev) = pending.next_if(|ev| ev.at <= t + time_eps(t)) {
            debug!("t={t}: applying {:?}", ev.kind);
            let old_ids = net.ids().to_vec();
            net = net.apply(ev, config.allow_disconnect)?;
            stepper.remap(&old_ids, &net, t, joined_lambda(ev, config), config);
            let last = segments.last_mut().expect("at least one segment");
            if last.start == t {
                *last = net.segment(t);
            } else {
                last.end = t;
                segments.push(net.segment(t));
            }
        }

        let lam = stepper.prices();
        let finite = lam.iter().all(|l| l.is_finite());
        if recorder.due() || !finite {
            recorder.push(net.snapshot(t, &lam, config.gain));
        }
        if !finite {
            warn!("non-finite price at t={t}; stopping");
            break;
        }
    }

    segments.last_mut().expect("at least one segment").end = t.min(config.horizon);
    Ok(Trace {
        snapshots: recorder.snapshots,
        segments,
        thinned: recorder.thinned,
    })
}
