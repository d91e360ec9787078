//! Discrete-event simulation of one scenario, its replications and sweeps.
//!
//! A replication generates its demand, injects background traffic and runs
//! the fleet until the horizon. Vehicles move edge by edge; each edge
//! segment takes its length divided by the speed attainable at the
//! occupancy found on entry. Events at equal times fire in scheduling order,
//! so a replication depends only on `(scenario, replication index)`.

mod queue;

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use queue::{Event, EventKind, EventQueue};

use crate::demand::{generate_requests, DemandProfile, TripRequest};
use crate::dispatch::{
    on_arrival, select_with_tier, try_insert_shared, DispatchPolicy, Insertion, LegAction,
    PendingRequest, RequestState, RouteLeg, Sav, SavStatus, SelectionTier,
};
use crate::metrics::{
    aggregate, AggregateRecord, MetricsAccumulator, MetricsRecord, RecordLabel, VehicleTally,
};
use crate::netgraph::{EdgePosition, RoadGraph, StopDistanceTable, TieBreak};
use crate::rng::{exponential, rng_for, SimRng};
use crate::traffic::{
    count_stop_event, effective_speed, BackgroundFlow, Behavior, BehaviorProfile, BehaviorTable,
};
use crate::{EdgeId, Error, RequestId, Result, SavId, StopId};

/// Simulated seconds per replication unless overridden.
pub const DEFAULT_HORIZON: f64 = 4.0 * 3600.0;
/// Replications per scenario unless overridden.
pub const DEFAULT_REPLICATIONS: u32 = 20;

const BACKGROUND_STREAM: u64 = 1000;

/// Everything that defines one experiment cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Scenario {
    pub label: String,
    pub demand: DemandProfile,
    pub background: Vec<BackgroundFlow>,
    pub fleet_size: u32,
    pub profile: Behavior,
    pub behaviors: BehaviorTable,
    pub policy: DispatchPolicy,
    /// Seconds.
    pub horizon: f64,
    pub replications: u32,
    pub base_seed: u64,
    /// When false every replication reuses `base_seed`.
    pub vary_seed: bool,
    pub tie_break: TieBreak,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            label: "default".into(),
            demand: DemandProfile::default(),
            background: Vec::new(),
            fleet_size: 8,
            profile: Behavior::Normal,
            behaviors: BehaviorTable::default(),
            policy: DispatchPolicy::default(),
            horizon: DEFAULT_HORIZON,
            replications: DEFAULT_REPLICATIONS,
            base_seed: 1,
            vary_seed: true,
            tie_break: TieBreak::Lexicographic,
        }
    }
}

impl Scenario {
    pub fn replication_seed(&self, index: u32) -> u64 {
        if self.vary_seed {
            self.base_seed.wrapping_add(index as u64)
        } else {
            self.base_seed
        }
    }

    pub fn validate(&self, net: &SimNetwork) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Configuration("horizon must be > 0".into()));
        }
        if self.replications == 0 {
            return Err(Error::Configuration("replications must be >= 1".into()));
        }
        self.policy.validate()?;
        self.behaviors.validate()?;
        self.demand
            .validate()
            .map_err(|e| Error::Configuration(alloc::format!("{e}")))?;
        for flow in &self.background {
            flow.validate()?;
            for v in [flow.origin_vertex, flow.destination_vertex] {
                net.graph.vertex(v).map_err(|_| {
                    Error::Configuration(alloc::format!(
                        "background flow references unknown vertex {v}"
                    ))
                })?;
            }
        }
        if self.fleet_size > 0 && net.graph.stops().is_empty() {
            return Err(Error::Configuration(
                "a fleet needs at least one stop".into(),
            ));
        }
        // zone coverage for nonzero demand
        generate_requests(
            &DemandProfile {
                horizon: 1.0,
                ..self.demand
            },
            net.graph.stops(),
            0,
        )
        .map_err(|e| Error::Configuration(alloc::format!("{e}")))?;
        Ok(())
    }
}

/// A validated graph with its precomputed stop-to-stop table.
#[derive(Debug, Clone)]
pub struct SimNetwork {
    pub graph: RoadGraph,
    pub table: StopDistanceTable,
}

impl SimNetwork {
    pub fn new(graph: RoadGraph) -> Result<Self> {
        Self::with_tie_break(graph, TieBreak::Lexicographic)
    }

    pub fn with_tie_break(graph: RoadGraph, tie: TieBreak) -> Result<Self> {
        let report = graph.validate();
        if !report.is_empty() {
            return Err(Error::Configuration(alloc::format!(
                "invalid network:\n{report}"
            )));
        }
        let ids: Vec<StopId> = graph.stops().iter().map(|s| s.id).collect();
        let table = StopDistanceTable::build_for(&graph, &ids, tie)?;
        Ok(Self { graph, table })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LogKind {
    RequestArrival,
    Assign,
    Share,
    Depart,
    Move,
    Arrive,
    Pickup,
    Dropoff,
    DwellEnd,
    Idle,
}

impl LogKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::RequestArrival => "request_arrival",
            LogKind::Assign => "assign",
            LogKind::Share => "share",
            LogKind::Depart => "depart",
            LogKind::Move => "move",
            LogKind::Arrive => "arrive",
            LogKind::Pickup => "pickup",
            LogKind::Dropoff => "dropoff",
            LogKind::DwellEnd => "dwell_end",
            LogKind::Idle => "idle",
        }
    }
}

/// One fleet or request state transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub time: f64,
    pub sav: Option<SavId>,
    pub kind: LogKind,
    pub request: Option<RequestId>,
    pub stop: Option<StopId>,
    /// Distance covered, for `Move` entries.
    pub meters: f64,
}

pub const LOG_CSV_HEADER: &str = "time_s,sav_id,event,request_id,stop_id,meters";

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6},", self.time)?;
        if let Some(s) = self.sav {
            write!(f, "{s}")?;
        }
        write!(f, ",{},", self.kind.as_str())?;
        if let Some(r) = self.request {
            write!(f, "{r}")?;
        }
        f.write_str(",")?;
        if let Some(s) = self.stop {
            write!(f, "{s}")?;
        }
        write!(f, ",{:.6}", self.meters)
    }
}

/// Vehicles on an edge right after it changed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancySample {
    pub time: f64,
    pub edge: EdgeId,
    pub occupancy: u32,
}

pub const OCCUPANCY_CSV_HEADER: &str = "time_s,edge_id,occupancy";

impl fmt::Display for OccupancySample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6},{},{}", self.time, self.edge, self.occupancy)
    }
}

/// Receives the event log of a replication.
pub trait EventSink {
    fn record(&mut self, entry: &LogEntry);

    /// Called on every edge occupancy change; ignored unless overridden.
    fn occupancy(&mut self, _sample: &OccupancySample) {}
}

impl EventSink for Vec<LogEntry> {
    fn record(&mut self, entry: &LogEntry) {
        self.push(*entry);
    }
}

/// Per-replication switches.
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Recount every request and vehicle invariant after each event.
    pub audit: bool,
    pub log: Option<&'a mut dyn EventSink>,
}

/// Passenger and vehicle bookkeeping at the end of a replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Conservation {
    pub generated: u64,
    pub unassigned: u64,
    pub assigned: u64,
    pub onboard: u64,
    pub completed: u64,
    pub background_injected: u64,
    pub background_exited: u64,
    pub background_in_network: u64,
    pub events_processed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub record: MetricsRecord,
    pub conservation: Conservation,
}

/// Demand of one replication; identical for every fleet size and profile.
pub fn replication_requests(
    net: &SimNetwork,
    scenario: &Scenario,
    index: u32,
) -> Result<Vec<TripRequest>> {
    let mut requests = generate_requests(
        &scenario.demand,
        net.graph.stops(),
        scenario.replication_seed(index),
    )?;
    requests.retain(|r| r.request_time < scenario.horizon);
    Ok(requests)
}

/// Runs one seeded replication.
pub fn run_replication(net: &SimNetwork, scenario: &Scenario, index: u32) -> Result<MetricsRecord> {
    scenario.validate(net)?;
    let requests = replication_requests(net, scenario, index)?;
    Ok(simulate(net, scenario, index, requests, RunOptions::default())?.record)
}

/// Runs one replication over an explicit request list.
pub fn simulate(
    net: &SimNetwork,
    scenario: &Scenario,
    index: u32,
    requests: Vec<TripRequest>,
    options: RunOptions<'_>,
) -> Result<ReplicationOutcome> {
    scenario.validate(net)?;
    for r in &requests {
        for s in [r.origin, r.destination] {
            if net.table.distance(s, s).is_none() {
                return Err(Error::UnknownStop {
                    request: r.id,
                    stop: s,
                });
            }
        }
        r.validate()?;
    }
    let mut sim = Simulation::new(net, scenario, index, requests, options)?;
    sim.run()?;
    Ok(sim.finish())
}

/// Records and aggregate of every replication of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub records: Vec<MetricsRecord>,
    pub aggregate: AggregateRecord,
}

impl ScenarioResult {
    /// Combines replication records (any order) into a result.
    pub fn from_records(mut records: Vec<MetricsRecord>) -> Option<Self> {
        records.sort_by_key(|r| r.replication);
        let aggregate = aggregate(&records)?;
        Some(Self { records, aggregate })
    }
}

/// Runs every replication in sequence.
pub fn run_scenario(net: &SimNetwork, scenario: &Scenario) -> Result<ScenarioResult> {
    scenario.validate(net)?;
    let records = (0..scenario.replications)
        .map(|i| {
            run_replication(net, scenario, i).map_err(|e| Error::Replication {
                index: i,
                source: alloc::boxed::Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioResult::from_records(records).expect("replications >= 1"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub fleet_size: u32,
    pub profile: Behavior,
    pub result: ScenarioResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, fleet_size: u32, profile: Behavior) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.fleet_size == fleet_size && c.profile == profile)
    }

    pub fn records(&self) -> impl Iterator<Item = &MetricsRecord> {
        self.cells.iter().flat_map(|c| c.result.records.iter())
    }

    pub fn aggregates(&self) -> Vec<AggregateRecord> {
        self.cells
            .iter()
            .map(|c| c.result.aggregate.clone())
            .collect()
    }
}

/// Scenario of one sweep cell. Seeds are left untouched so every cell sees
/// the same demand.
pub fn sweep_cell_scenario(base: &Scenario, fleet_size: u32, profile: Behavior) -> Scenario {
    Scenario {
        fleet_size,
        profile,
        ..base.clone()
    }
}

pub fn check_sweep_lists(fleet_sizes: &[u32], profiles: &[Behavior]) -> Result<()> {
    if fleet_sizes.is_empty() || profiles.is_empty() {
        return Err(Error::Configuration(
            "a sweep needs at least one fleet size and one profile".into(),
        ));
    }
    Ok(())
}

/// Fleet size by behavior grid, one aggregated cell per pair.
pub fn run_sweep(
    net: &SimNetwork,
    base: &Scenario,
    fleet_sizes: &[u32],
    profiles: &[Behavior],
) -> Result<SweepResult> {
    check_sweep_lists(fleet_sizes, profiles)?;
    let mut cells = Vec::new();
    for &fleet_size in fleet_sizes {
        for &profile in profiles {
            let scenario = sweep_cell_scenario(base, fleet_size, profile);
            let result = run_scenario(net, &scenario)?;
            cells.push(SweepCell {
                fleet_size,
                profile,
                result,
            });
        }
    }
    Ok(SweepResult { cells })
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    edge: usize,
    from: f64,
    to: f64,
}

#[derive(Debug, Clone, Copy)]
struct ActiveSegment {
    segment: Segment,
    travel_time: f64,
    free_flow_time: f64,
}

struct FleetVehicle {
    sav: Sav,
    pending_segments: VecDeque<Segment>,
    current: Option<ActiveSegment>,
    previous_speed: Option<f64>,
    tally: VehicleTally,
}

struct BackgroundVehicle {
    flow: usize,
    next_edge: usize,
    current: Option<ActiveSegment>,
    previous_speed: Option<f64>,
    tally: VehicleTally,
    done: bool,
}

struct FlowRuntime {
    edges: Vec<usize>,
    rate_per_second: f64,
    rng: SimRng,
}

#[derive(Debug, Default, Clone, Copy)]
struct Counters {
    generated: u64,
    unassigned: u64,
    assigned: u64,
    onboard: u64,
    completed: u64,
}

struct Simulation<'a, 'o> {
    net: &'a SimNetwork,
    scenario: &'a Scenario,
    index: u32,
    profile: BehaviorProfile,
    queue: EventQueue,
    now: f64,
    requests: Vec<PendingRequest>,
    request_slot: BTreeMap<RequestId, usize>,
    arrived: usize,
    has_oversized: bool,
    counters: Counters,
    fleet: Vec<FleetVehicle>,
    occupancy: Vec<u32>,
    flows: Vec<FlowRuntime>,
    background: Vec<BackgroundVehicle>,
    background_exited: u64,
    metrics: MetricsAccumulator,
    events: u64,
    options: RunOptions<'o>,
}

impl<'a, 'o> Simulation<'a, 'o> {
    fn new(
        net: &'a SimNetwork,
        scenario: &'a Scenario,
        index: u32,
        mut requests: Vec<TripRequest>,
        options: RunOptions<'o>,
    ) -> Result<Self> {
        requests.retain(|r| r.request_time < scenario.horizon);
        requests.sort_by(|a, b| {
            a.request_time
                .total_cmp(&b.request_time)
                .then(a.id.cmp(&b.id))
        });
        let mut request_slot = BTreeMap::new();
        for (i, r) in requests.iter().enumerate() {
            if request_slot.insert(r.id, i).is_some() {
                return Err(Error::InvalidInput(alloc::format!(
                    "duplicate request id {}",
                    r.id
                )));
            }
        }
        let seed = scenario.replication_seed(index);
        let graph = &net.graph;

        let mut stops: Vec<_> = graph.stops().to_vec();
        stops.sort_by_key(|s| s.id);
        let fleet = (0..scenario.fleet_size)
            .map(|i| {
                let home = stops[i as usize % stops.len()];
                FleetVehicle {
                    sav: Sav::parked(
                        i,
                        scenario.policy.capacity,
                        scenario.profile,
                        home.id,
                        EdgePosition {
                            edge: home.edge,
                            offset: home.slack,
                        },
                    ),
                    pending_segments: VecDeque::new(),
                    current: None,
                    previous_speed: None,
                    tally: VehicleTally::default(),
                }
            })
            .collect();

        let mut flows = Vec::new();
        for (i, f) in scenario.background.iter().enumerate() {
            let path = graph.shortest_path(f.origin_vertex, f.destination_vertex)?;
            let edges = path
                .edges
                .iter()
                .map(|&e| graph.edge_slot(e))
                .collect::<Result<Vec<_>>>()?;
            flows.push(FlowRuntime {
                edges,
                rate_per_second: f.rate / 3600.0,
                rng: rng_for(seed, BACKGROUND_STREAM + i as u64),
            });
        }

        let has_oversized = requests
            .iter()
            .any(|r| r.party_size > scenario.policy.capacity);
        let mut queue = EventQueue::new();
        queue.schedule(scenario.horizon, EventKind::HorizonEnd);
        for (i, r) in requests.iter().enumerate() {
            queue.schedule(r.request_time, EventKind::RequestArrival(i));
        }
        for (i, flow) in flows.iter_mut().enumerate() {
            if flow.rate_per_second > 0.0 && !flow.edges.is_empty() {
                let t = exponential(&mut flow.rng, flow.rate_per_second);
                queue.schedule(t, EventKind::BackgroundInject(i));
            }
        }

        Ok(Self {
            net,
            scenario,
            index,
            profile: scenario.behaviors.get(scenario.profile),
            queue,
            now: 0.0,
            requests: requests.into_iter().map(PendingRequest::new).collect(),
            request_slot,
            arrived: 0,
            has_oversized,
            counters: Counters::default(),
            fleet,
            occupancy: vec![0; graph.edges().len()],
            flows,
            background: Vec::new(),
            background_exited: 0,
            metrics: MetricsAccumulator::new(scenario.fleet_size),
            events: 0,
            options,
        })
    }

    fn log(
        &mut self,
        sav: Option<SavId>,
        kind: LogKind,
        request: Option<RequestId>,
        stop: Option<StopId>,
        meters: f64,
    ) {
        if let Some(sink) = self.options.log.as_mut() {
            sink.record(&LogEntry {
                time: self.now,
                sav,
                kind,
                request,
                stop,
                meters,
            });
        }
    }

    fn change_occupancy(&mut self, slot: usize, entering: bool) {
        let count = &mut self.occupancy[slot];
        if entering {
            *count += 1;
        } else {
            *count -= 1;
        }
        let occupancy = *count;
        if let Some(sink) = self.options.log.as_mut() {
            let edge = self.net.graph.edges()[slot].id;
            sink.occupancy(&OccupancySample {
                time: self.now,
                edge,
                occupancy,
            });
        }
    }

    fn run(&mut self) -> Result<()> {
        while let Some(event) = self.queue.pop() {
            if event.time < self.now {
                return Err(Error::Consistency(alloc::format!(
                    "event time went backwards: {} < {}",
                    event.time,
                    self.now
                )));
            }
            self.now = event.time;
            self.events += 1;
            match event.kind {
                EventKind::HorizonEnd => break,
                EventKind::RequestArrival(i) => self.on_request(i)?,
                EventKind::SavEdgeExit(s) => {
                    self.finish_sav_segment(s);
                    self.enter_sav_segment(s);
                }
                EventKind::SavArrivalAtStop(s) => self.on_sav_arrival(s)?,
                EventKind::DwellEnd(s) => self.on_dwell_end(s)?,
                EventKind::BackgroundInject(f) => self.on_inject(f),
                EventKind::BackgroundEdgeExit(v) => self.on_background_exit(v),
            }
            self.check_counts()?;
            if self.options.audit {
                self.audit()?;
            }
        }
        Ok(())
    }

    fn check_counts(&self) -> Result<()> {
        let c = self.counters;
        if c.unassigned + c.assigned + c.onboard + c.completed != c.generated {
            return Err(Error::Consistency(alloc::format!(
                "passenger conservation broken: {c:?}"
            )));
        }
        Ok(())
    }

    fn audit(&self) -> Result<()> {
        let mut c = Counters {
            generated: self.arrived as u64,
            ..Counters::default()
        };
        for (i, p) in self.requests.iter().enumerate() {
            if i >= self.arrived {
                if p.state != RequestState::Unassigned {
                    return Err(Error::Consistency(alloc::format!(
                        "request {} served before arriving",
                        p.request.id
                    )));
                }
                continue;
            }
            match p.state {
                RequestState::Unassigned => c.unassigned += 1,
                RequestState::Assigned => c.assigned += 1,
                RequestState::Onboard => c.onboard += 1,
                RequestState::Completed => c.completed += 1,
            }
        }
        let k = self.counters;
        if (
            c.generated,
            c.unassigned,
            c.assigned,
            c.onboard,
            c.completed,
        ) != (
            k.generated,
            k.unassigned,
            k.assigned,
            k.onboard,
            k.completed,
        ) {
            return Err(Error::Consistency(alloc::format!(
                "recount {c:?} differs from counters {k:?}"
            )));
        }
        let mut legs_seen = 0u64;
        for v in &self.fleet {
            v.sav.check_invariants()?;
            for &(r, _) in &v.sav.onboard {
                if self.requests[self.request_slot[&r]].state != RequestState::Onboard {
                    return Err(Error::Consistency(alloc::format!(
                        "request {r} aboard but not onboard"
                    )));
                }
            }
            for leg in &v.sav.route {
                if leg.action == LegAction::Pickup {
                    legs_seen += 1;
                    if self.requests[self.request_slot[&leg.request]].state
                        != RequestState::Assigned
                    {
                        return Err(Error::Consistency(alloc::format!(
                            "pickup leg for request {} not in assigned state",
                            leg.request
                        )));
                    }
                }
            }
        }
        if legs_seen != c.assigned {
            return Err(Error::Consistency(alloc::format!(
                "{} assigned requests but {legs_seen} pickup legs",
                c.assigned
            )));
        }
        Ok(())
    }

    fn distance(&self, from: StopId, to: StopId) -> f64 {
        self.net.table.distance(from, to).unwrap_or(f64::INFINITY)
    }

    fn on_request(&mut self, slot: usize) -> Result<()> {
        self.arrived = self.arrived.max(slot + 1);
        self.counters.generated += 1;
        self.counters.unassigned += 1;
        self.metrics.request_generated();
        let r = self.requests[slot].request;
        self.log(
            None,
            LogKind::RequestArrival,
            Some(r.id),
            Some(r.origin),
            0.0,
        );
        self.dispatch_idle()?;
        if self.requests[slot].state == RequestState::Unassigned {
            self.try_share(slot)?;
        }
        Ok(())
    }

    /// Hands unassigned requests to idle vehicles until one side runs out.
    fn dispatch_idle(&mut self) -> Result<()> {
        loop {
            if self.counters.unassigned == 0 {
                return Ok(());
            }
            let idle: Vec<usize> = (0..self.fleet.len())
                .filter(|&s| self.fleet[s].sav.status == SavStatus::Idle)
                .collect();
            if idle.is_empty() {
                return Ok(());
            }
            // parties larger than a vehicle can never board and stay unserved
            let capacity = self.scenario.policy.capacity;
            let servable: Vec<PendingRequest>;
            let pending = if self.has_oversized {
                servable = self.requests[..self.arrived]
                    .iter()
                    .filter(|p| p.request.party_size <= capacity)
                    .copied()
                    .collect();
                &servable[..]
            } else {
                &self.requests[..self.arrived]
            };
            let mut chosen: Option<(usize, RequestId)> = None;
            let mut fcfs: Option<RequestId> = None;
            for &s in &idle {
                let anchor = self.fleet[s].sav.anchor;
                let sel = select_with_tier(
                    &self.scenario.policy,
                    pending,
                    |stop| self.distance(anchor, stop),
                    self.now,
                );
                match sel {
                    Some(sel) if sel.tier == SelectionTier::OverdueInRadius => {
                        chosen = Some((s, sel.request));
                        break;
                    }
                    Some(sel) => fcfs = Some(sel.request),
                    None => {}
                }
            }
            let (s, request) = match (chosen, fcfs) {
                (Some(c), _) => c,
                (None, Some(request)) => {
                    // every idle vehicle sees the same first-come request: send the nearest
                    let origin = self.requests[self.request_slot[&request]].request.origin;
                    let s = idle
                        .iter()
                        .copied()
                        .min_by(|&a, &b| {
                            self.distance(self.fleet[a].sav.anchor, origin)
                                .total_cmp(&self.distance(self.fleet[b].sav.anchor, origin))
                                .then(a.cmp(&b))
                        })
                        .expect("idle is non-empty");
                    (s, request)
                }
                (None, None) => return Ok(()),
            };
            self.assign_idle(s, self.request_slot[&request])?;
        }
    }

    fn assign_idle(&mut self, s: usize, slot: usize) -> Result<()> {
        self.requests[slot].advance(RequestState::Assigned)?;
        self.counters.unassigned -= 1;
        self.counters.assigned += 1;
        let r = self.requests[slot].request;
        self.fleet[s].sav.route = vec![RouteLeg::pickup(&r), RouteLeg::dropoff(&r)];
        self.log(
            Some(s as SavId),
            LogKind::Assign,
            Some(r.id),
            Some(r.origin),
            0.0,
        );
        self.start_leg(s)
    }

    /// Offers a fresh request to every busy vehicle; the insertion adding the
    /// most shared distance wins, then the smallest detour, then the lowest id.
    fn try_share(&mut self, slot: usize) -> Result<()> {
        let candidate = self.requests[slot].request;
        let mut best: Option<(usize, Insertion)> = None;
        for (s, v) in self.fleet.iter().enumerate() {
            if v.sav.status == SavStatus::Idle {
                continue;
            }
            let Ok(ins) =
                try_insert_shared(&self.scenario.policy, &v.sav, &candidate, &self.net.table)
            else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((_, b)) => {
                    ins.shared_gain() > b.shared_gain()
                        || (ins.shared_gain() == b.shared_gain()
                            && ins.added_distance() < b.added_distance())
                }
            };
            if better {
                best = Some((s, ins));
            }
        }
        if let Some((s, ins)) = best {
            if ins.after.distance > self.scenario.policy.detour_budget_factor * ins.before.distance
            {
                return Err(Error::Consistency(
                    "accepted insertion exceeds the detour budget".into(),
                ));
            }
            self.requests[slot].advance(RequestState::Assigned)?;
            self.counters.unassigned -= 1;
            self.counters.assigned += 1;
            self.fleet[s].sav.route = ins.legs;
            self.log(
                Some(s as SavId),
                LogKind::Share,
                Some(candidate.id),
                Some(candidate.origin),
                0.0,
            );
        }
        Ok(())
    }

    /// Starts driving from the current stop to the next leg's stop.
    fn start_leg(&mut self, s: usize) -> Result<()> {
        let from = self.fleet[s].sav.anchor;
        let to = self.fleet[s].sav.route[0].stop;
        let path = self.net.table.path(from, to).ok_or_else(|| {
            Error::Consistency(alloc::format!(
                "no table path from stop {from} to stop {to}"
            ))
        })?;
        let graph = &self.net.graph;
        let from_slack = graph.stop(from)?.slack;
        let to_slack = graph.stop(to)?.slack;
        let last = path.edges.len().saturating_sub(1);
        let mut segments = VecDeque::with_capacity(path.edges.len());
        for (k, &e) in path.edges.iter().enumerate() {
            let slot = graph.edge_slot(e)?;
            let start = if k == 0 { from_slack } else { 0.0 };
            let end = if k == last {
                to_slack
            } else {
                graph.edges()[slot].length
            };
            segments.push_back(Segment {
                edge: slot,
                from: start,
                to: end,
            });
        }
        let v = &mut self.fleet[s];
        v.sav.status = SavStatus::EnRoute;
        v.sav.anchor = to;
        v.sav.lead_distance = path.distance;
        v.pending_segments = segments;
        v.previous_speed = None;
        self.log(
            Some(s as SavId),
            LogKind::Depart,
            Some(self.fleet[s].sav.route[0].request),
            Some(to),
            0.0,
        );
        if self.fleet[s].pending_segments.is_empty() {
            self.queue
                .schedule(self.now, EventKind::SavArrivalAtStop(s));
        } else {
            self.enter_sav_segment(s);
        }
        Ok(())
    }

    fn enter_sav_segment(&mut self, s: usize) {
        let Some(segment) = self.fleet[s].pending_segments.pop_front() else {
            return;
        };
        let edge = &self.net.graph.edges()[segment.edge];
        let meters = segment.to - segment.from;
        let speed = effective_speed(edge, self.occupancy[segment.edge], &self.profile);
        let travel_time = meters / speed;
        let v = &mut self.fleet[s];
        if meters > 0.0 {
            if let Some(prev) = v.previous_speed {
                if count_stop_event(prev, speed) {
                    v.tally.stops += 1;
                }
            }
            v.previous_speed = Some(speed);
        }
        v.current = Some(ActiveSegment {
            segment,
            travel_time,
            free_flow_time: meters / edge.free_flow_speed,
        });
        let kind = if v.pending_segments.is_empty() {
            EventKind::SavArrivalAtStop(s)
        } else {
            EventKind::SavEdgeExit(s)
        };
        self.change_occupancy(segment.edge, true);
        self.queue.schedule(self.now + travel_time, kind);
    }

    fn finish_sav_segment(&mut self, s: usize) {
        let Some(active) = self.fleet[s].current.take() else {
            return;
        };
        let seg = active.segment;
        let meters = seg.to - seg.from;
        self.change_occupancy(seg.edge, false);
        let edge_id = self.net.graph.edges()[seg.edge].id;
        let v = &mut self.fleet[s];
        v.tally.travel_time += active.travel_time;
        v.tally.free_flow_time += active.free_flow_time;
        v.sav.position = EdgePosition {
            edge: edge_id,
            offset: seg.to,
        };
        v.sav.lead_distance = (v.sav.lead_distance - meters).max(0.0);
        let distinct = v.sav.onboard.len();
        self.metrics.sav_travel(meters, distinct);
        self.log(Some(s as SavId), LogKind::Move, None, None, meters);
    }

    fn on_sav_arrival(&mut self, s: usize) -> Result<()> {
        self.finish_sav_segment(s);
        let leg =
            *self.fleet[s].sav.route.first().ok_or_else(|| {
                Error::Consistency(alloc::format!("sav {s} arrived without a leg"))
            })?;
        self.log(
            Some(s as SavId),
            LogKind::Arrive,
            Some(leg.request),
            Some(leg.stop),
            0.0,
        );
        let slot = self.request_slot[&leg.request];
        let dwell = self.profile.dwell_time;
        let arrival = on_arrival(
            &mut self.fleet[s].sav,
            &mut self.requests[slot],
            self.now,
            dwell,
        )?;
        match leg.action {
            LegAction::Pickup => {
                self.counters.assigned -= 1;
                self.counters.onboard += 1;
                // boarding completes when the dwell ends
                let wait = arrival.departure_time - self.requests[slot].wait_start;
                self.metrics.pickup(wait);
                self.log(
                    Some(s as SavId),
                    LogKind::Pickup,
                    Some(leg.request),
                    Some(leg.stop),
                    0.0,
                );
            }
            LegAction::Dropoff => {
                self.counters.onboard -= 1;
                self.counters.completed += 1;
                self.metrics.dropoff(s, leg.party_size);
                self.log(
                    Some(s as SavId),
                    LogKind::Dropoff,
                    Some(leg.request),
                    Some(leg.stop),
                    0.0,
                );
            }
        }
        let sav = &self.fleet[s].sav;
        if sav.onboard_total() > sav.capacity {
            return Err(Error::Consistency(alloc::format!("sav {s} over capacity")));
        }
        self.queue
            .schedule(arrival.departure_time, EventKind::DwellEnd(s));
        Ok(())
    }

    fn on_dwell_end(&mut self, s: usize) -> Result<()> {
        self.log(
            Some(s as SavId),
            LogKind::DwellEnd,
            None,
            Some(self.fleet[s].sav.anchor),
            0.0,
        );
        if self.fleet[s].sav.route.is_empty() {
            self.fleet[s].sav.status = SavStatus::Idle;
            self.log(
                Some(s as SavId),
                LogKind::Idle,
                None,
                Some(self.fleet[s].sav.anchor),
                0.0,
            );
            self.dispatch_idle()
        } else {
            self.start_leg(s)
        }
    }

    fn on_inject(&mut self, f: usize) {
        self.background.push(BackgroundVehicle {
            flow: f,
            next_edge: 0,
            current: None,
            previous_speed: None,
            tally: VehicleTally::default(),
            done: false,
        });
        let v = self.background.len() - 1;
        self.enter_background_edge(v);
        let flow = &mut self.flows[f];
        let next = self.now + exponential(&mut flow.rng, flow.rate_per_second);
        if next < self.scenario.horizon {
            self.queue.schedule(next, EventKind::BackgroundInject(f));
        }
    }

    fn enter_background_edge(&mut self, v: usize) {
        let veh = &mut self.background[v];
        let slot = self.flows[veh.flow].edges[veh.next_edge];
        veh.next_edge += 1;
        let edge = &self.net.graph.edges()[slot];
        let speed = effective_speed(edge, self.occupancy[slot], &BehaviorProfile::BACKGROUND);
        if let Some(prev) = veh.previous_speed {
            if count_stop_event(prev, speed) {
                veh.tally.stops += 1;
            }
        }
        veh.previous_speed = Some(speed);
        let travel_time = edge.length / speed;
        veh.current = Some(ActiveSegment {
            segment: Segment {
                edge: slot,
                from: 0.0,
                to: edge.length,
            },
            travel_time,
            free_flow_time: edge.length / edge.free_flow_speed,
        });
        self.change_occupancy(slot, true);
        self.queue
            .schedule(self.now + travel_time, EventKind::BackgroundEdgeExit(v));
    }

    fn on_background_exit(&mut self, v: usize) {
        let veh = &mut self.background[v];
        let Some(active) = veh.current.take() else {
            return;
        };
        self.change_occupancy(active.segment.edge, false);
        let veh = &mut self.background[v];
        veh.tally.travel_time += active.travel_time;
        veh.tally.free_flow_time += active.free_flow_time;
        self.metrics
            .background_travel(active.segment.to - active.segment.from);
        if veh.next_edge == self.flows[veh.flow].edges.len() {
            veh.done = true;
            self.background_exited += 1;
        } else {
            self.enter_background_edge(v);
        }
    }

    fn finish(self) -> ReplicationOutcome {
        let mut tallies: Vec<VehicleTally> = self.background.iter().map(|v| v.tally).collect();
        tallies.extend(self.fleet.iter().map(|v| v.tally));
        let injected = self.background.len() as u64;
        let in_network = self.background.iter().filter(|v| !v.done).count() as u64;
        let c = self.counters;
        let conservation = Conservation {
            generated: c.generated,
            unassigned: c.unassigned,
            assigned: c.assigned,
            onboard: c.onboard,
            completed: c.completed,
            background_injected: injected,
            background_exited: self.background_exited,
            background_in_network: in_network,
            events_processed: self.events,
        };
        let label = RecordLabel {
            scenario: self.scenario.label.clone(),
            fleet_size: self.scenario.fleet_size,
            profile: self.scenario.profile,
            replication: self.index,
        };
        ReplicationOutcome {
            record: self.metrics.finalize(label, &tallies),
            conservation,
        }
    }
}
