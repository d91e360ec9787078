//! Random instances and brute-force reference implementations shared by the
//! integration tests and the acceptance gate.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use savsim_core::demand::TripRequest;
use savsim_core::dispatch::{
    DispatchPolicy, LegAction, PendingRequest, RequestState, RouteLeg, Sav, SavStatus,
};
use savsim_core::netgraph::{DirectedEdge, EdgePosition, RoadGraph, Vertex, Zone};
use savsim_core::traffic::Behavior;
use savsim_core::{RequestId, StopId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A strongly connected graph with at most 30 vertices, 80 edges and 2–10
/// stops. Strong connectivity comes from a random Hamiltonian cycle; ids are
/// deliberately sparse and unordered.
pub fn random_graph(seed: u64) -> RoadGraph {
    let mut rng = rng(seed);
    let n = rng.random_range(2..=30usize);
    let mut coords = BTreeSet::new();
    while coords.len() < n {
        coords.insert((rng.random_range(0..100i32), rng.random_range(0..100i32)));
    }
    let mut coords: Vec<_> = coords.into_iter().collect();
    coords.shuffle(&mut rng);
    // integer-lattice coordinates scaled to meters make equal-length routes common
    let vertices: Vec<Vertex> = coords
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Vertex::new(3 * i as u32 + 7, x as f64 * 10.0, y as f64 * 10.0))
        .collect();

    let mut pairs = BTreeSet::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for i in 0..n {
        pairs.insert((order[i], order[(i + 1) % n]));
    }
    let max_edges = 80.min(n * (n - 1));
    let target = rng.random_range(pairs.len()..=max_edges);
    while pairs.len() < target {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            pairs.insert((a, b));
        }
    }
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.shuffle(&mut rng);
    let edges: Vec<DirectedEdge> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            DirectedEdge::between(
                1000 - i as u32,
                &vertices[a],
                &vertices[b],
                rng.random_range(5.0..30.0),
                rng.random_range(1..50),
            )
            .unwrap()
        })
        .collect();
    let mut graph = RoadGraph::new(vertices, edges.clone());

    let m = rng.random_range(2..=10usize);
    let mut used: Vec<u32> = Vec::new();
    for _ in 0..m {
        let edge = if !used.is_empty() && rng.random_bool(0.3) {
            used[rng.random_range(0..used.len())]
        } else {
            edges[rng.random_range(0..edges.len())].id
        };
        used.push(edge);
        let len = graph.edge(edge).unwrap().length;
        let slack = match rng.random_range(0..10) {
            0 => 0.0,
            1 => len,
            _ => rng.random_range(0.0..=len),
        };
        let zone = [
            Zone::PeripheralHousing,
            Zone::CentralOpportunity,
            Zone::Other,
        ][rng.random_range(0..3)];
        graph.place_stop(edge, slack, zone).unwrap();
    }
    graph
}

/// The two-tier selection rule, evaluated literally.
pub fn brute_select(
    policy: &DispatchPolicy,
    pending: &[PendingRequest],
    distance: &dyn Fn(StopId) -> f64,
    now: f64,
) -> Option<RequestId> {
    let open: Vec<&PendingRequest> = pending
        .iter()
        .filter(|p| p.state == RequestState::Unassigned)
        .collect();
    let mut overdue: Vec<&PendingRequest> = open
        .iter()
        .copied()
        .filter(|p| {
            now - p.wait_start > policy.overdue_threshold
                && distance(p.request.origin) <= policy.priority_radius
        })
        .collect();
    if !overdue.is_empty() {
        // longest wait first, then smallest id
        overdue.sort_by(|a, b| {
            (now - b.wait_start)
                .partial_cmp(&(now - a.wait_start))
                .unwrap()
                .then(a.request.id.cmp(&b.request.id))
        });
        return Some(overdue[0].request.id);
    }
    let mut open = open;
    open.sort_by(|a, b| {
        a.request
            .request_time
            .partial_cmp(&b.request.request_time)
            .unwrap()
            .then(a.request.id.cmp(&b.request.id))
    });
    open.first().map(|p| p.request.id)
}

pub struct DispatchState {
    pub policy: DispatchPolicy,
    pub pending: Vec<PendingRequest>,
    pub distances: Vec<f64>,
    pub now: f64,
}

/// Up to 20 pending requests with frequent ties in time, distance and the
/// threshold/radius boundaries.
pub fn random_dispatch_state(seed: u64) -> DispatchState {
    let mut rng = rng(seed);
    let policy = if rng.random_bool(0.5) {
        DispatchPolicy::default()
    } else {
        DispatchPolicy {
            overdue_threshold: rng.random_range(1..30) as f64 * 60.0,
            priority_radius: rng.random_range(1..10) as f64 * 500.0,
            ..DispatchPolicy::default()
        }
    };
    let stops = 12;
    let distances: Vec<f64> = (0..stops)
        .map(|_| match rng.random_range(0..4) {
            0 => policy.priority_radius,
            _ => rng.random_range(0..16) as f64 * 500.0,
        })
        .collect();
    let k = rng.random_range(0..=20usize);
    let mut ids: Vec<u32> = (0..k as u32 * 3 + 1).collect();
    ids.shuffle(&mut rng);
    let pending: Vec<PendingRequest> = (0..k)
        .map(|i| {
            let t = rng.random_range(0..40) as f64 * 60.0;
            let origin = rng.random_range(0..stops as u32);
            let mut p = PendingRequest::new(TripRequest {
                id: ids[i],
                origin,
                destination: (origin + 1) % stops as u32,
                request_time: t,
                party_size: 1,
            });
            p.state = match rng.random_range(0..6) {
                0 => RequestState::Assigned,
                1 => RequestState::Onboard,
                _ => RequestState::Unassigned,
            };
            p
        })
        .collect();
    let latest = pending
        .iter()
        .map(|p| p.request.request_time)
        .fold(0.0, f64::max);
    let now = match rng.random_range(0..4) {
        // lands exactly on the threshold for some request
        0 if !pending.is_empty() => pending[0].request.request_time + policy.overdue_threshold,
        _ => latest + rng.random_range(0..60) as f64 * 60.0,
    };
    DispatchState {
        policy,
        pending,
        distances,
        now,
    }
}

/// Route length and shared distance, walked leg by leg.
pub fn brute_route(
    start: StopId,
    lead: f64,
    onboard: &[(RequestId, u32)],
    legs: &[RouteLeg],
    capacity: u32,
    d: &dyn Fn(StopId, StopId) -> f64,
) -> (f64, f64, bool) {
    let mut riders: BTreeSet<RequestId> = onboard.iter().map(|&(r, _)| r).collect();
    let mut load: u32 = onboard.iter().map(|&(_, n)| n).sum();
    let mut ok = load <= capacity;
    let mut total = lead;
    let mut shared = if riders.len() >= 2 { lead } else { 0.0 };
    let mut at = start;
    for leg in legs {
        let hop = d(at, leg.stop);
        total += hop;
        if riders.len() >= 2 {
            shared += hop;
        }
        match leg.action {
            LegAction::Pickup => {
                riders.insert(leg.request);
                load += leg.party_size;
                ok &= load <= capacity;
            }
            LegAction::Dropoff => {
                riders.remove(&leg.request);
                load -= leg.party_size;
            }
        }
        at = leg.stop;
    }
    (total, shared, ok)
}

pub struct InsertionCase {
    pub policy: DispatchPolicy,
    pub sav: Sav,
    pub candidate: TripRequest,
    pub matrix: Vec<Vec<f64>>,
}

impl InsertionCase {
    pub fn distance(&self, a: StopId, b: StopId) -> f64 {
        self.matrix[a as usize][b as usize]
    }
}

/// A vehicle with at most four legs (onboard dropoffs and assigned
/// pickup/dropoff pairs, randomly interleaved) and a candidate request.
pub fn random_insertion_case(seed: u64) -> InsertionCase {
    let mut rng = rng(seed);
    loop {
        let stops = rng.random_range(2..=6usize);
        let matrix: Vec<Vec<f64>> = (0..stops)
            .map(|i| {
                (0..stops)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            rng.random_range(1..40) as f64 * 50.0
                        }
                    })
                    .collect()
            })
            .collect();
        let capacity = rng.random_range(1..=6u32);
        let onboard_n = rng.random_range(0..=3usize);
        let assigned_n = rng.random_range(0..=(4 - onboard_n) / 2);
        if onboard_n + assigned_n == 0 {
            continue;
        }
        let stop = |rng: &mut ChaCha8Rng| rng.random_range(0..stops as u32);
        let mut onboard = Vec::new();
        let mut groups: Vec<Vec<RouteLeg>> = Vec::new();
        let mut next_id = 0;
        for _ in 0..onboard_n {
            let party = rng.random_range(1..=2);
            onboard.push((next_id, party));
            groups.push(vec![RouteLeg {
                stop: stop(&mut rng),
                action: LegAction::Dropoff,
                request: next_id,
                party_size: party,
            }]);
            next_id += 1;
        }
        for _ in 0..assigned_n {
            let party = rng.random_range(1..=2);
            let (o, d) = (stop(&mut rng), stop(&mut rng));
            groups.push(vec![
                RouteLeg {
                    stop: o,
                    action: LegAction::Pickup,
                    request: next_id,
                    party_size: party,
                },
                RouteLeg {
                    stop: d,
                    action: LegAction::Dropoff,
                    request: next_id,
                    party_size: party,
                },
            ]);
            next_id += 1;
        }
        // random interleaving that keeps each group's internal order
        let mut route = Vec::new();
        let mut cursors = vec![0usize; groups.len()];
        while route.len() < groups.iter().map(Vec::len).sum::<usize>() {
            let live: Vec<usize> = (0..groups.len())
                .filter(|&g| cursors[g] < groups[g].len())
                .collect();
            let g = live[rng.random_range(0..live.len())];
            route.push(groups[g][cursors[g]]);
            cursors[g] += 1;
        }
        let en_route = rng.random_bool(0.5);
        let anchor = if en_route {
            route[0].stop
        } else {
            stop(&mut rng)
        };
        let sav = Sav {
            id: 0,
            capacity,
            profile: Behavior::Normal,
            position: EdgePosition {
                edge: 0,
                offset: 0.0,
            },
            anchor,
            lead_distance: if en_route {
                rng.random_range(0..20) as f64 * 25.0
            } else {
                0.0
            },
            route,
            onboard,
            status: if en_route {
                SavStatus::EnRoute
            } else {
                SavStatus::Dwelling
            },
        };
        if sav.check_invariants().is_err() {
            continue;
        }
        let o = stop(&mut rng);
        let mut d = stop(&mut rng);
        while d == o {
            d = stop(&mut rng);
        }
        let candidate = TripRequest {
            id: 100,
            origin: o,
            destination: d,
            request_time: 0.0,
            party_size: rng.random_range(1..=3),
        };
        let policy = DispatchPolicy {
            detour_budget_factor: [1.0, 1.2, 1.4, 2.0, 3.0][rng.random_range(0..5)],
            capacity,
            ..DispatchPolicy::default()
        };
        return InsertionCase {
            policy,
            sav,
            candidate,
            matrix,
        };
    }
}

/// Best shared distance among all budget- and capacity-feasible insertions,
/// together with the current route's shared distance.
pub fn brute_best_insertion(case: &InsertionCase) -> (f64, Option<f64>) {
    let sav = &case.sav;
    let d = |a: StopId, b: StopId| case.distance(a, b);
    let (before_len, before_shared, _) = brute_route(
        sav.anchor,
        sav.lead_distance,
        &sav.onboard,
        &sav.route,
        sav.capacity,
        &d,
    );
    let first = if sav.status == SavStatus::EnRoute {
        1
    } else {
        0
    };
    let pick = RouteLeg {
        stop: case.candidate.origin,
        action: LegAction::Pickup,
        request: case.candidate.id,
        party_size: case.candidate.party_size,
    };
    let drop = RouteLeg {
        stop: case.candidate.destination,
        action: LegAction::Dropoff,
        request: case.candidate.id,
        party_size: case.candidate.party_size,
    };
    let n = sav.route.len();
    let mut best: Option<f64> = None;
    // final positions p < q of the new legs in the amended route
    for p in first..=n {
        for q in p + 1..=n + 1 {
            let mut legs = sav.route.clone();
            legs.insert(p, pick);
            legs.insert(q, drop);
            let (len, shared, ok) = brute_route(
                sav.anchor,
                sav.lead_distance,
                &sav.onboard,
                &legs,
                sav.capacity,
                &d,
            );
            if ok && len <= case.policy.detour_budget_factor * before_len {
                best = Some(best.map_or(shared, |b: f64| b.max(shared)));
            }
        }
    }
    (before_shared, best)
}
