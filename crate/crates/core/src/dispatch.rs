//! SAV dispatcher: overdue-first request selection and shared-ride insertion.
//!
//! Idle vehicles pick requests with [`select_next_request`]. Requests that
//! have waited longer than the overdue threshold and whose pickup lies within
//! the priority radius go first, longest wait first; otherwise requests are
//! served first-come, first-served. Vehicles already carrying out a route can
//! absorb a new request through [`try_insert_shared`], which picks the
//! pickup/dropoff insertion that maximizes shared distance (distance driven
//! with two or more distinct requests aboard) under a detour budget.

use alloc::vec::Vec;

use crate::demand::TripRequest;
use crate::netgraph::{EdgePosition, StopDistanceTable};
use crate::traffic::Behavior;
use crate::{Error, RequestId, Result, SavId, StopId};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DispatchPolicy {
    /// Seconds of waiting after which a request is overdue.
    pub overdue_threshold: f64,
    /// Meters from the vehicle within which overdue requests take priority.
    pub priority_radius: f64,
    /// Maximum ratio of new to current route length for shared insertions.
    pub detour_budget_factor: f64,
    /// Passenger seats per vehicle.
    pub capacity: u32,
}

impl Default for DispatchPolicy {
    fn default() -> Self {
        Self {
            overdue_threshold: 20.0 * 60.0,
            priority_radius: 3218.0,
            detour_budget_factor: 1.4,
            capacity: 5,
        }
    }
}

impl DispatchPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.overdue_threshold > 0.0) {
            return Err(Error::Configuration("overdue_threshold must be > 0".into()));
        }
        if !(self.priority_radius > 0.0) {
            return Err(Error::Configuration("priority_radius must be > 0".into()));
        }
        if !(self.detour_budget_factor >= 1.0) {
            return Err(Error::Configuration(
                "detour_budget_factor must be >= 1".into(),
            ));
        }
        if self.capacity == 0 {
            return Err(Error::Configuration("capacity must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LegAction {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteLeg {
    pub stop: StopId,
    pub action: LegAction,
    pub request: RequestId,
    pub party_size: u32,
}

impl RouteLeg {
    pub fn pickup(r: &TripRequest) -> Self {
        Self {
            stop: r.origin,
            action: LegAction::Pickup,
            request: r.id,
            party_size: r.party_size,
        }
    }

    pub fn dropoff(r: &TripRequest) -> Self {
        Self {
            stop: r.destination,
            action: LegAction::Dropoff,
            request: r.id,
            party_size: r.party_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SavStatus {
    Idle,
    EnRoute,
    Dwelling,
}

/// A fleet vehicle as the dispatcher sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sav {
    pub id: SavId,
    pub capacity: u32,
    pub profile: Behavior,
    pub position: EdgePosition,
    /// Stop the vehicle is at (idle, dwelling) or driving to (en route).
    pub anchor: StopId,
    /// Meters left before reaching `anchor`; zero unless en route.
    pub lead_distance: f64,
    pub route: Vec<RouteLeg>,
    pub onboard: Vec<(RequestId, u32)>,
    pub status: SavStatus,
}

impl Sav {
    /// An idle vehicle parked at `stop`.
    pub fn parked(
        id: SavId,
        capacity: u32,
        profile: Behavior,
        stop: StopId,
        position: EdgePosition,
    ) -> Self {
        Self {
            id,
            capacity,
            profile,
            position,
            anchor: stop,
            lead_distance: 0.0,
            route: Vec::new(),
            onboard: Vec::new(),
            status: SavStatus::Idle,
        }
    }

    pub fn onboard_total(&self) -> u32 {
        self.onboard.iter().map(|&(_, n)| n).sum()
    }

    /// Legs that can no longer be reordered: the one being driven.
    pub fn committed_legs(&self) -> usize {
        usize::from(self.status == SavStatus::EnRoute)
    }

    pub fn has_spare_capacity(&self) -> bool {
        self.onboard_total() < self.capacity
    }

    /// Capacity and leg-ordering invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| {
            Err(Error::Consistency(alloc::format!("sav {}: {msg}", self.id)))
        };
        if self.onboard_total() > self.capacity {
            return fail(alloc::format!(
                "{} aboard exceeds capacity {}",
                self.onboard_total(),
                self.capacity
            ));
        }
        for &(req, _) in &self.onboard {
            let drops = self
                .route
                .iter()
                .filter(|l| l.request == req && l.action == LegAction::Dropoff)
                .count();
            let picks = self
                .route
                .iter()
                .filter(|l| l.request == req && l.action == LegAction::Pickup)
                .count();
            if drops != 1 || picks != 0 {
                return fail(alloc::format!(
                    "onboard request {req} has {drops} dropoff and {picks} pickup legs"
                ));
            }
        }
        for (i, leg) in self.route.iter().enumerate() {
            if leg.action == LegAction::Pickup {
                let later_drop = self.route[i + 1..]
                    .iter()
                    .any(|l| l.request == leg.request && l.action == LegAction::Dropoff);
                if !later_drop {
                    return fail(alloc::format!(
                        "pickup of request {} has no later dropoff",
                        leg.request
                    ));
                }
            }
        }
        if self.status == SavStatus::Idle && !self.route.is_empty() {
            return fail("idle with pending legs".into());
        }
        if self.route.is_empty() && self.status == SavStatus::EnRoute {
            return fail("en route without legs".into());
        }
        if simulate_load(self.onboard_total(), &self.route) > self.capacity {
            return fail("planned route overloads the vehicle".into());
        }
        Ok(())
    }
}

fn simulate_load(start: u32, legs: &[RouteLeg]) -> u32 {
    let mut load = start;
    let mut peak = load;
    for leg in legs {
        match leg.action {
            LegAction::Pickup => load += leg.party_size,
            LegAction::Dropoff => load = load.saturating_sub(leg.party_size),
        }
        peak = peak.max(load);
    }
    peak
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestState {
    Unassigned,
    Assigned,
    Onboard,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingRequest {
    pub request: TripRequest,
    /// Equals the request time.
    pub wait_start: f64,
    pub state: RequestState,
}

impl PendingRequest {
    pub fn new(request: TripRequest) -> Self {
        Self {
            request,
            wait_start: request.request_time,
            state: RequestState::Unassigned,
        }
    }

    /// Moves one step along unassigned -> assigned -> onboard -> completed.
    pub fn advance(&mut self, to: RequestState) -> Result<()> {
        use RequestState::*;
        let ok = matches!(
            (self.state, to),
            (Unassigned, Assigned) | (Assigned, Onboard) | (Onboard, Completed)
        );
        if !ok {
            return Err(Error::Consistency(alloc::format!(
                "request {}: illegal transition {:?} -> {:?}",
                self.request.id,
                self.state,
                to
            )));
        }
        self.state = to;
        Ok(())
    }
}

/// Which rule produced a selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionTier {
    OverdueInRadius,
    FirstComeFirstServe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub request: RequestId,
    pub tier: SelectionTier,
}

/// Picks the next unassigned request for a vehicle.
///
/// `pickup_distance` maps a stop to the vehicle's driving distance to it.
pub fn select_next_request(
    policy: &DispatchPolicy,
    pending: &[PendingRequest],
    pickup_distance: impl Fn(StopId) -> f64,
    now: f64,
) -> Option<RequestId> {
    select_with_tier(policy, pending, pickup_distance, now).map(|s| s.request)
}

pub fn select_with_tier(
    policy: &DispatchPolicy,
    pending: &[PendingRequest],
    pickup_distance: impl Fn(StopId) -> f64,
    now: f64,
) -> Option<Selection> {
    let open = pending
        .iter()
        .filter(|p| p.state == RequestState::Unassigned);

    let overdue = open
        .clone()
        .filter(|p| now - p.wait_start > policy.overdue_threshold)
        .filter(|p| pickup_distance(p.request.origin) <= policy.priority_radius)
        // longest wait == earliest wait start
        .min_by(|a, b| {
            a.wait_start
                .total_cmp(&b.wait_start)
                .then(a.request.id.cmp(&b.request.id))
        });
    if let Some(p) = overdue {
        return Some(Selection {
            request: p.request.id,
            tier: SelectionTier::OverdueInRadius,
        });
    }
    open.min_by(|a, b| {
        a.request
            .request_time
            .total_cmp(&b.request.request_time)
            .then(a.request.id.cmp(&b.request.id))
    })
    .map(|p| Selection {
        request: p.request.id,
        tier: SelectionTier::FirstComeFirstServe,
    })
}

/// Driving distance between stops.
pub trait StopMetric {
    fn distance(&self, from: StopId, to: StopId) -> f64;
}

impl StopMetric for StopDistanceTable {
    fn distance(&self, from: StopId, to: StopId) -> f64 {
        StopDistanceTable::distance(self, from, to).unwrap_or(f64::INFINITY)
    }
}

impl<F: Fn(StopId, StopId) -> f64> StopMetric for F {
    fn distance(&self, from: StopId, to: StopId) -> f64 {
        self(from, to)
    }
}

/// Length and shared distance of a planned route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteSummary {
    /// Meters from the vehicle's current position through the last leg.
    pub distance: f64,
    /// Meters of that distance with at least two distinct requests aboard.
    pub shared: f64,
    /// Every leg keeps the load within capacity.
    pub within_capacity: bool,
}

/// Walks a route starting at `start` (reached after `lead` meters with the
/// `onboard` parties aboard).
pub fn evaluate_route(
    start: StopId,
    lead: f64,
    onboard: &[(RequestId, u32)],
    legs: &[RouteLeg],
    capacity: u32,
    metric: &impl StopMetric,
) -> RouteSummary {
    let mut aboard: Vec<(RequestId, u32)> = onboard.to_vec();
    let mut load: u32 = aboard.iter().map(|&(_, n)| n).sum();
    let mut within_capacity = load <= capacity;
    let mut distance = lead;
    let mut shared = if aboard.len() >= 2 { lead } else { 0.0 };
    let mut at = start;
    for leg in legs {
        let hop = metric.distance(at, leg.stop);
        distance += hop;
        if aboard.len() >= 2 {
            shared += hop;
        }
        match leg.action {
            LegAction::Pickup => {
                aboard.push((leg.request, leg.party_size));
                load += leg.party_size;
                within_capacity &= load <= capacity;
            }
            LegAction::Dropoff => {
                if let Some(i) = aboard.iter().position(|&(r, _)| r == leg.request) {
                    load -= aboard.remove(i).1;
                }
            }
        }
        at = leg.stop;
    }
    RouteSummary {
        distance,
        shared,
        within_capacity,
    }
}

/// An accepted shared-ride insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    pub legs: Vec<RouteLeg>,
    /// Index of the new pickup leg in `legs`.
    pub pickup_index: usize,
    /// Index of the new dropoff leg in `legs`.
    pub dropoff_index: usize,
    pub before: RouteSummary,
    pub after: RouteSummary,
}

impl Insertion {
    pub fn shared_gain(&self) -> f64 {
        self.after.shared - self.before.shared
    }

    pub fn added_distance(&self) -> f64 {
        self.after.distance - self.before.distance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// The vehicle has no route to share.
    NoActiveRoute,
    /// Party larger than the vehicle.
    Oversized,
    /// Every insertion that would share seats overloads the vehicle.
    Capacity,
    /// Every capacity-feasible sharing insertion breaks the detour budget.
    DetourBudget,
    /// No insertion adds shared distance.
    NoSharing,
}

/// Route with the candidate's pickup inserted before original index `i` and
/// its dropoff before original index `j` (`i <= j`).
pub fn with_insertion(
    legs: &[RouteLeg],
    candidate: &TripRequest,
    i: usize,
    j: usize,
) -> Vec<RouteLeg> {
    let mut out = Vec::with_capacity(legs.len() + 2);
    out.extend_from_slice(&legs[..i]);
    out.push(RouteLeg::pickup(candidate));
    out.extend_from_slice(&legs[i..j]);
    out.push(RouteLeg::dropoff(candidate));
    out.extend_from_slice(&legs[j..]);
    out
}

/// Tries to fold `candidate` into the vehicle's current route.
///
/// Every (pickup, dropoff) position pair after the committed legs is
/// evaluated. Among insertions that respect capacity and keep the new route
/// within `detour_budget_factor` times the current length, the one with the
/// most shared distance wins (then the shortest route, then the earliest
/// positions). It is accepted only if it adds shared distance. The vehicle is
/// never modified.
pub fn try_insert_shared(
    policy: &DispatchPolicy,
    sav: &Sav,
    candidate: &TripRequest,
    metric: &impl StopMetric,
) -> core::result::Result<Insertion, Rejection> {
    if sav.route.is_empty() {
        return Err(Rejection::NoActiveRoute);
    }
    if candidate.party_size > sav.capacity {
        return Err(Rejection::Oversized);
    }
    let eval = |legs: &[RouteLeg]| {
        evaluate_route(
            sav.anchor,
            sav.lead_distance,
            &sav.onboard,
            legs,
            sav.capacity,
            metric,
        )
    };
    let before = eval(&sav.route);
    let budget = policy.detour_budget_factor * before.distance;

    let n = sav.route.len();
    let mut best: Option<(RouteSummary, usize, usize)> = None;
    let (mut sharing_seen, mut sharing_fits) = (false, false);
    for i in sav.committed_legs()..=n {
        for j in i..=n {
            let legs = with_insertion(&sav.route, candidate, i, j);
            let after = eval(&legs);
            let shares = after.shared > before.shared;
            sharing_seen |= shares;
            if !after.within_capacity {
                continue;
            }
            sharing_fits |= shares;
            if after.distance > budget {
                continue;
            }
            let better = match &best {
                None => true,
                Some((b, _, _)) => {
                    after.shared > b.shared
                        || (after.shared == b.shared && after.distance < b.distance)
                }
            };
            if better {
                best = Some((after, i, j));
            }
        }
    }
    match best {
        Some((after, i, j)) if after.shared > before.shared => Ok(Insertion {
            legs: with_insertion(&sav.route, candidate, i, j),
            pickup_index: i,
            dropoff_index: j + 1,
            before,
            after,
        }),
        _ if !sharing_seen => Err(Rejection::NoSharing),
        _ if !sharing_fits => Err(Rejection::Capacity),
        _ => Err(Rejection::DetourBudget),
    }
}

/// What happened when a vehicle reached the stop of its next leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub leg: RouteLeg,
    /// When the dwell ends and the next leg can start.
    pub departure_time: f64,
}

/// Executes the vehicle's next leg at its stop: boards or alights the party
/// and starts the dwell.
pub fn on_arrival(
    sav: &mut Sav,
    request: &mut PendingRequest,
    now: f64,
    dwell_time: f64,
) -> Result<Arrival> {
    let Some(&leg) = sav.route.first() else {
        return Err(Error::Consistency(alloc::format!(
            "sav {} arrived with no legs",
            sav.id
        )));
    };
    if leg.request != request.request.id {
        return Err(Error::Consistency(alloc::format!(
            "sav {} leg targets request {} but request {} was supplied",
            sav.id,
            leg.request,
            request.request.id
        )));
    }
    match leg.action {
        LegAction::Pickup => {
            if request.state != RequestState::Assigned {
                return Err(Error::Consistency(alloc::format!(
                    "sav {} pickup of request {} in state {:?}",
                    sav.id,
                    leg.request,
                    request.state
                )));
            }
            if sav.onboard_total() + leg.party_size > sav.capacity {
                return Err(Error::Consistency(alloc::format!(
                    "sav {} boarding {} would exceed capacity {}",
                    sav.id,
                    leg.party_size,
                    sav.capacity
                )));
            }
            request.advance(RequestState::Onboard)?;
            sav.onboard.push((leg.request, leg.party_size));
        }
        LegAction::Dropoff => {
            let Some(i) = sav.onboard.iter().position(|&(r, _)| r == leg.request) else {
                return Err(Error::Consistency(alloc::format!(
                    "sav {} dropoff of request {} that is not aboard",
                    sav.id,
                    leg.request
                )));
            };
            request.advance(RequestState::Completed)?;
            sav.onboard.remove(i);
        }
    }
    sav.route.remove(0);
    sav.anchor = leg.stop;
    sav.lead_distance = 0.0;
    sav.status = SavStatus::Dwelling;
    Ok(Arrival {
        leg,
        departure_time: now + dwell_time,
    })
}
