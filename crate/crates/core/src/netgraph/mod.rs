//! Weighted directed road graph with mid-edge pickup/dropoff stops.
//!
//! Streets are directed edges and intersections are vertices placed in a
//! planar metric frame (meters). Edge weight is the Euclidean length between
//! the endpoints. Stops sit on an edge at a *slack* distance from the edge's
//! source vertex.

mod routing;

use alloc::collections::BTreeMap;
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{EdgeId, Error, Result, StopId, VertexId};

pub use routing::{
    EdgePosition, PathResult, ShortestPathTree, StopDistanceTable, StopPath, TieBreak,
};

/// Relative tolerance used when checking stored lengths against coordinates.
pub const LENGTH_REL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vertex {
    pub id: VertexId,
    /// East coordinate, meters.
    pub x: f64,
    /// North coordinate, meters.
    pub y: f64,
}

impl Vertex {
    pub fn new(id: VertexId, x: f64, y: f64) -> Self {
        Self { id, x, y }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Euclidean distance between two vertices.
pub fn edge_weight(source: &Vertex, sink: &Vertex) -> Result<f64> {
    if !source.is_finite() || !sink.is_finite() {
        return Err(Error::InvalidInput(alloc::format!(
            "non-finite coordinates on vertex {} or {}",
            source.id,
            sink.id
        )));
    }
    let (dx, dy) = (sink.x - source.x, sink.y - source.y);
    Ok(libm::sqrt(dx * dx + dy * dy))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DirectedEdge {
    pub id: EdgeId,
    pub source: VertexId,
    pub sink: VertexId,
    /// Meters.
    pub length: f64,
    /// Meters per second.
    pub free_flow_speed: f64,
    /// Jam occupancy, vehicles.
    pub capacity_vehicles: u32,
}

impl DirectedEdge {
    /// Builds an edge whose length is the Euclidean distance between endpoints.
    pub fn between(
        id: EdgeId,
        source: &Vertex,
        sink: &Vertex,
        free_flow_speed: f64,
        capacity_vehicles: u32,
    ) -> Result<Self> {
        Ok(Self {
            id,
            source: source.id,
            sink: sink.id,
            length: edge_weight(source, sink)?,
            free_flow_speed,
            capacity_vehicles,
        })
    }
}

/// Land-use tag of a stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Zone {
    PeripheralHousing,
    CentralOpportunity,
    Other,
}

impl Zone {
    pub fn as_str(self) -> &'static str {
        match self {
            Zone::PeripheralHousing => "peripheral_housing",
            Zone::CentralOpportunity => "central_opportunity",
            Zone::Other => "other",
        }
    }
}

impl core::str::FromStr for Zone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peripheral_housing" => Ok(Zone::PeripheralHousing),
            "central_opportunity" => Ok(Zone::CentralOpportunity),
            "other" => Ok(Zone::Other),
            _ => Err(Error::InvalidInput(alloc::format!("unknown zone '{s}'"))),
        }
    }
}

/// A pickup/dropoff location pinned to an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Stop {
    pub id: StopId,
    pub edge: EdgeId,
    /// Meters from the host edge's source vertex.
    pub slack: f64,
    pub zone: Zone,
}

/// One problem found by [`RoadGraph::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateVertexId(VertexId),
    DuplicateEdgeId(EdgeId),
    NonFiniteCoordinate(VertexId),
    DanglingEndpoint {
        edge: EdgeId,
        vertex: VertexId,
    },
    SelfLoop(EdgeId),
    DuplicatePair {
        source: VertexId,
        sink: VertexId,
        edges: (EdgeId, EdgeId),
    },
    /// `to` cannot be reached from `from`.
    NotStronglyConnected {
        from: VertexId,
        to: VertexId,
    },
    LengthMismatch {
        edge: EdgeId,
        stored: f64,
        expected: f64,
    },
    NonPositiveSpeed(EdgeId),
    ZeroCapacity(EdgeId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateVertexId(v) => write!(f, "duplicate vertex id {v}"),
            Violation::DuplicateEdgeId(e) => write!(f, "duplicate edge id {e}"),
            Violation::NonFiniteCoordinate(v) => write!(f, "vertex {v} has non-finite coordinates"),
            Violation::DanglingEndpoint { edge, vertex } => {
                write!(f, "edge {edge} references missing vertex {vertex}")
            }
            Violation::SelfLoop(e) => write!(f, "edge {e} is a self-loop"),
            Violation::DuplicatePair {
                source,
                sink,
                edges,
            } => write!(
                f,
                "edges {} and {} both connect {source} -> {sink}",
                edges.0, edges.1
            ),
            Violation::NotStronglyConnected { from, to } => write!(
                f,
                "graph is not strongly connected: vertex {to} is unreachable from vertex {from}"
            ),
            Violation::LengthMismatch {
                edge,
                stored,
                expected,
            } => write!(
                f,
                "edge {edge} stores length {stored} but its endpoints are {expected} m apart"
            ),
            Violation::NonPositiveSpeed(e) => {
                write!(f, "edge {e} has non-positive free-flow speed")
            }
            Violation::ZeroCapacity(e) => write!(f, "edge {e} has zero vehicle capacity"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "ok: no violations");
        }
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        Ok(())
    }
}

/// The road network `G = (V, E)` plus its registered stops.
///
/// Construction is permissive so that malformed inputs can be reported by
/// [`RoadGraph::validate`]; routing assumes a validated graph.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    vertices: Vec<Vertex>,
    edges: Vec<DirectedEdge>,
    stops: Vec<Stop>,
    vertex_index: BTreeMap<VertexId, usize>,
    edge_index: BTreeMap<EdgeId, usize>,
    stop_index: BTreeMap<StopId, usize>,
    // Outgoing edge indices per vertex index, ordered by (sink id, edge id).
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl RoadGraph {
    pub fn new(vertices: Vec<Vertex>, edges: Vec<DirectedEdge>) -> Self {
        let mut vertex_index = BTreeMap::new();
        for (i, v) in vertices.iter().enumerate() {
            vertex_index.entry(v.id).or_insert(i);
        }
        let mut edge_index = BTreeMap::new();
        for (i, e) in edges.iter().enumerate() {
            edge_index.entry(e.id).or_insert(i);
        }
        let mut out_edges = vec![Vec::new(); vertices.len()];
        let mut in_edges = vec![Vec::new(); vertices.len()];
        for (&_, &i) in edge_index.iter() {
            let e = &edges[i];
            if let (Some(&s), Some(&t)) = (vertex_index.get(&e.source), vertex_index.get(&e.sink)) {
                out_edges[s].push(i);
                in_edges[t].push(i);
            }
        }
        for list in out_edges.iter_mut() {
            list.sort_by_key(|&i| (edges[i].sink, edges[i].id));
        }
        for list in in_edges.iter_mut() {
            list.sort_by_key(|&i| (edges[i].source, edges[i].id));
        }
        Self {
            vertices,
            edges,
            stops: Vec::new(),
            vertex_index,
            edge_index,
            stop_index: BTreeMap::new(),
            out_edges,
            in_edges,
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[DirectedEdge] {
        &self.edges
    }

    pub fn stops(&self) -> &[Stop] {
        &self.stops
    }

    pub fn vertex(&self, id: VertexId) -> Result<&Vertex> {
        self.vertex_index
            .get(&id)
            .map(|&i| &self.vertices[i])
            .ok_or_else(|| Error::not_found("vertex", id))
    }

    pub fn edge(&self, id: EdgeId) -> Result<&DirectedEdge> {
        self.edge_index
            .get(&id)
            .map(|&i| &self.edges[i])
            .ok_or_else(|| Error::not_found("edge", id))
    }

    pub fn stop(&self, id: StopId) -> Result<&Stop> {
        self.stop_index
            .get(&id)
            .map(|&i| &self.stops[i])
            .ok_or_else(|| Error::not_found("stop", id))
    }

    pub(crate) fn vertex_slot(&self, id: VertexId) -> Result<usize> {
        self.vertex_index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::not_found("vertex", id))
    }

    pub(crate) fn edge_slot(&self, id: EdgeId) -> Result<usize> {
        self.edge_index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::not_found("edge", id))
    }

    pub(crate) fn out_edges_of(&self, vertex_slot: usize) -> &[usize] {
        &self.out_edges[vertex_slot]
    }

    pub(crate) fn in_edges_of(&self, vertex_slot: usize) -> &[usize] {
        &self.in_edges[vertex_slot]
    }

    /// Places a new stop on `edge_id` with a fresh id (one past the largest
    /// registered id) and registers it.
    pub fn place_stop(&mut self, edge_id: EdgeId, slack: f64, zone: Zone) -> Result<Stop> {
        let id = self.stop_index.keys().next_back().map_or(0, |&k| k + 1);
        self.insert_stop(Stop {
            id,
            edge: edge_id,
            slack,
            zone,
        })
    }

    /// Registers a stop with a caller-chosen id.
    pub fn insert_stop(&mut self, stop: Stop) -> Result<Stop> {
        let edge = self.edge(stop.edge)?;
        if !(stop.slack.is_finite() && stop.slack >= 0.0 && stop.slack <= edge.length) {
            return Err(Error::InvalidInput(alloc::format!(
                "slack {} outside [0, {}] on edge {}",
                stop.slack,
                edge.length,
                edge.id
            )));
        }
        if self.stop_index.contains_key(&stop.id) {
            return Err(Error::InvalidInput(alloc::format!(
                "duplicate stop id {}",
                stop.id
            )));
        }
        self.stop_index.insert(stop.id, self.stops.len());
        self.stops.push(stop);
        Ok(stop)
    }

    /// Checks every structural invariant and returns all violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        let mut seen = BTreeMap::new();
        for v in &self.vertices {
            if seen.insert(v.id, ()).is_some() {
                violations.push(Violation::DuplicateVertexId(v.id));
            }
            if !v.is_finite() {
                violations.push(Violation::NonFiniteCoordinate(v.id));
            }
        }

        let mut seen_edges = BTreeMap::new();
        let mut pairs: BTreeMap<(VertexId, VertexId), EdgeId> = BTreeMap::new();
        for e in &self.edges {
            if seen_edges.insert(e.id, ()).is_some() {
                violations.push(Violation::DuplicateEdgeId(e.id));
            }
            let source = self.vertex(e.source).ok();
            let sink = self.vertex(e.sink).ok();
            if source.is_none() {
                violations.push(Violation::DanglingEndpoint {
                    edge: e.id,
                    vertex: e.source,
                });
            }
            if sink.is_none() {
                violations.push(Violation::DanglingEndpoint {
                    edge: e.id,
                    vertex: e.sink,
                });
            }
            if e.source == e.sink {
                violations.push(Violation::SelfLoop(e.id));
            }
            if let Some(&first) = pairs.get(&(e.source, e.sink)) {
                violations.push(Violation::DuplicatePair {
                    source: e.source,
                    sink: e.sink,
                    edges: (first, e.id),
                });
            } else {
                pairs.insert((e.source, e.sink), e.id);
            }
            if let (Some(s), Some(t)) = (source, sink) {
                if let Ok(expected) = edge_weight(s, t) {
                    let tol = LENGTH_REL_TOLERANCE * expected.max(1.0);
                    if !(libm::fabs(e.length - expected) <= tol) {
                        violations.push(Violation::LengthMismatch {
                            edge: e.id,
                            stored: e.length,
                            expected,
                        });
                    }
                }
            }
            if !(e.free_flow_speed > 0.0 && e.free_flow_speed.is_finite()) {
                violations.push(Violation::NonPositiveSpeed(e.id));
            }
            if e.capacity_vehicles == 0 {
                violations.push(Violation::ZeroCapacity(e.id));
            }
        }

        if let Some(v) = self.connectivity_witness() {
            violations.push(v);
        }
        ValidationReport { violations }
    }

    /// Returns `None` when strongly connected, else one unreachable pair.
    fn connectivity_witness(&self) -> Option<Violation> {
        let (&root_id, &root) = self.vertex_index.iter().next()?;
        let forward = self.reachable(root, false);
        if let Some((&id, _)) = self.vertex_index.iter().find(|(_, &i)| !forward[i]) {
            return Some(Violation::NotStronglyConnected {
                from: root_id,
                to: id,
            });
        }
        let backward = self.reachable(root, true);
        if let Some((&id, _)) = self.vertex_index.iter().find(|(_, &i)| !backward[i]) {
            return Some(Violation::NotStronglyConnected {
                from: id,
                to: root_id,
            });
        }
        None
    }

    fn reachable(&self, root: usize, reverse: bool) -> Vec<bool> {
        let mut seen = vec![false; self.vertices.len()];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            let adjacent = if reverse {
                &self.in_edges[v]
            } else {
                &self.out_edges[v]
            };
            for &ei in adjacent {
                let e = &self.edges[ei];
                let next = if reverse { e.source } else { e.sink };
                let n = self.vertex_index[&next];
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }
}
