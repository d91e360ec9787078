//! Shortest paths between vertices and between mid-edge stops.
//!
//! A trip from stop `b_i` (slack `d_i` on edge `e_i`) to stop `b_j` (slack
//! `d_j` on edge `e_j`) finishes `e_i`, follows a shortest vertex path from
//! the sink of `e_i` to the source of `e_j`, then drives `d_j` into `e_j`:
//!
//! ```text
//! d(b_i, b_j) = (w(e_i) - d_i) + sum of middle edge weights + d_j
//! ```
//!
//! When both stops share an edge and `d_j >= d_i` the distance is simply
//! `d_j - d_i`; otherwise the vehicle has to loop around.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;

use super::RoadGraph;
use crate::rng::rng_for;
use crate::{EdgeId, Error, Result, StopId, VertexId};

/// How to choose among several shortest paths of equal length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TieBreak {
    /// Lexicographically smallest vertex-id sequence.
    #[default]
    Lexicographic,
    /// Uniformly random among tied successors, reproducible from the seed.
    Seeded(u64),
}

/// A location along a directed edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePosition {
    pub edge: EdgeId,
    /// Meters from the edge's source vertex.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub edges: Vec<EdgeId>,
    pub vertices: Vec<VertexId>,
    /// Meters.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopPath {
    pub origin_stop: StopId,
    pub dest_stop: StopId,
    /// Edges in traversal order, starting with the origin stop's host edge.
    pub edges: Vec<EdgeId>,
    /// Meters.
    pub distance: f64,
}

impl StopPath {
    fn empty(stop: StopId) -> Self {
        Self {
            origin_stop: stop,
            dest_stop: stop,
            edges: Vec::new(),
            distance: 0.0,
        }
    }

    /// Recomputes the distance from the edge list and the stops' slacks.
    pub fn recompute_distance(&self, graph: &RoadGraph) -> Result<f64> {
        let from = graph.stop(self.origin_stop)?;
        let to = graph.stop(self.dest_stop)?;
        path_distance(graph, &self.edges, from.slack, to.slack)
    }
}

/// Distance covered by a position-to-position edge list.
fn path_distance(
    graph: &RoadGraph,
    edges: &[EdgeId],
    from_offset: f64,
    to_offset: f64,
) -> Result<f64> {
    match edges {
        [] => Ok(0.0),
        [_] => Ok(to_offset - from_offset),
        [first, middle @ .., _] => {
            let mut total = graph.edge(*first)?.length - from_offset;
            for &e in middle {
                total += graph.edge(e)?.length;
            }
            Ok(total + to_offset)
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct QueueItem {
    dist: f64,
    slot: usize,
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.slot.cmp(&self.slot))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest distances from one vertex.
#[derive(Debug, Clone)]
pub struct ShortestPathTree {
    source: usize,
    dist: Vec<f64>,
}

impl ShortestPathTree {
    pub fn distance_to(&self, graph: &RoadGraph, vertex: VertexId) -> Result<f64> {
        Ok(self.dist[graph.vertex_slot(vertex)?])
    }

    fn tight(&self, graph: &RoadGraph, edge_slot: usize) -> bool {
        let e = &graph.edges[edge_slot];
        let (u, v) = (graph.vertex_index[&e.source], graph.vertex_index[&e.sink]);
        let (du, dv) = (self.dist[u], self.dist[v]);
        du.is_finite() && du + e.length <= dv + 1e-9 * dv.max(1.0)
    }

    /// Extracts one shortest path to `target`, breaking ties per `tie`.
    pub fn path_to(
        &self,
        graph: &RoadGraph,
        target: VertexId,
        tie: TieBreak,
    ) -> Result<PathResult> {
        let t = graph.vertex_slot(target)?;
        let source_id = graph.vertices[self.source].id;
        if !self.dist[t].is_finite() {
            return Err(Error::Unreachable {
                from: source_id,
                to: target,
            });
        }

        // Vertices that reach the target through tight edges only.
        let n = graph.vertices.len();
        let mut reaches = vec![false; n];
        let mut stack = vec![t];
        reaches[t] = true;
        while let Some(v) = stack.pop() {
            for &ei in graph.in_edges_of(v) {
                if self.tight(graph, ei) {
                    let u = graph.vertex_index[&graph.edges[ei].source];
                    if !reaches[u] {
                        reaches[u] = true;
                        stack.push(u);
                    }
                }
            }
        }

        let mut rng = match tie {
            TieBreak::Lexicographic => None,
            TieBreak::Seeded(seed) => {
                Some(rng_for(seed, ((source_id as u64) << 32) | target as u64))
            }
        };
        let mut visited = vec![false; n];
        let mut at = self.source;
        visited[at] = true;
        let mut edges = Vec::new();
        let mut vertices = vec![source_id];
        let mut candidates = Vec::new();
        while at != t {
            candidates.clear();
            for &ei in graph.out_edges_of(at) {
                let next = graph.vertex_index[&graph.edges[ei].sink];
                if reaches[next] && !visited[next] && self.tight(graph, ei) {
                    candidates.push((ei, next));
                }
            }
            let pick = match (&mut rng, candidates.len()) {
                (_, 0) => {
                    return Err(Error::Consistency(alloc::format!(
                        "shortest-path extraction stalled at vertex {}",
                        graph.vertices[at].id
                    )))
                }
                (Some(rng), len) => candidates[rng.random_range(0..len)],
                (None, _) => candidates[0],
            };
            edges.push(graph.edges[pick.0].id);
            vertices.push(graph.vertices[pick.1].id);
            visited[pick.1] = true;
            at = pick.1;
        }
        let distance = edges
            .iter()
            .map(|&e| graph.edge(e).map(|e| e.length))
            .sum::<Result<f64>>()?;
        Ok(PathResult {
            edges,
            vertices,
            distance,
        })
    }
}

impl RoadGraph {
    /// Dijkstra from `from`.
    pub fn shortest_path_tree(&self, from: VertexId) -> Result<ShortestPathTree> {
        let source = self.vertex_slot(from)?;
        let mut dist = vec![f64::INFINITY; self.vertices.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(QueueItem {
            dist: 0.0,
            slot: source,
        });
        while let Some(QueueItem { dist: d, slot }) = heap.pop() {
            if d > dist[slot] {
                continue;
            }
            for &ei in self.out_edges_of(slot) {
                let e = &self.edges[ei];
                let next = self.vertex_index[&e.sink];
                let candidate = d + e.length;
                if candidate < dist[next] {
                    dist[next] = candidate;
                    heap.push(QueueItem {
                        dist: candidate,
                        slot: next,
                    });
                }
            }
        }
        Ok(ShortestPathTree { source, dist })
    }

    /// Minimum-weight path between two vertices, ties broken by the
    /// lexicographically smallest vertex-id sequence.
    pub fn shortest_path(&self, from: VertexId, to: VertexId) -> Result<PathResult> {
        self.shortest_path_with(from, to, TieBreak::Lexicographic)
    }

    pub fn shortest_path_with(
        &self,
        from: VertexId,
        to: VertexId,
        tie: TieBreak,
    ) -> Result<PathResult> {
        self.vertex_slot(to)?;
        self.shortest_path_tree(from)?.path_to(self, to, tie)
    }

    /// Travel distance between two stops.
    pub fn stop_distance(&self, from: StopId, to: StopId) -> Result<StopPath> {
        self.stop_distance_with(from, to, TieBreak::Lexicographic)
    }

    pub fn stop_distance_with(&self, from: StopId, to: StopId, tie: TieBreak) -> Result<StopPath> {
        let a = *self.stop(from)?;
        let b = *self.stop(to)?;
        if from == to {
            return Ok(StopPath::empty(from));
        }
        let (edges, distance) = self.route_between(
            EdgePosition {
                edge: a.edge,
                offset: a.slack,
            },
            EdgePosition {
                edge: b.edge,
                offset: b.slack,
            },
            tie,
            None,
        )?;
        Ok(StopPath {
            origin_stop: from,
            dest_stop: to,
            edges,
            distance,
        })
    }

    /// Travel distance between two arbitrary edge positions.
    pub fn position_distance(
        &self,
        from: EdgePosition,
        to: EdgePosition,
    ) -> Result<(Vec<EdgeId>, f64)> {
        for p in [from, to] {
            let len = self.edge(p.edge)?.length;
            if !(p.offset >= 0.0 && p.offset <= len) {
                return Err(Error::InvalidInput(alloc::format!(
                    "offset {} outside edge {}",
                    p.offset,
                    p.edge
                )));
            }
        }
        if from == to {
            return Ok((Vec::new(), 0.0));
        }
        self.route_between(from, to, TieBreak::Lexicographic, None)
    }

    fn route_between(
        &self,
        from: EdgePosition,
        to: EdgePosition,
        tie: TieBreak,
        cached: Option<&ShortestPathTree>,
    ) -> Result<(Vec<EdgeId>, f64)> {
        if from.edge == to.edge && to.offset >= from.offset {
            return Ok((vec![from.edge], to.offset - from.offset));
        }
        let first = self.edge(from.edge)?;
        let last = self.edge(to.edge)?;
        let owned;
        let tree = match cached {
            Some(tree) => tree,
            None => {
                owned = self.shortest_path_tree(first.sink)?;
                &owned
            }
        };
        let middle = tree.path_to(self, last.source, tie)?;
        let mut edges = Vec::with_capacity(middle.edges.len() + 2);
        edges.push(first.id);
        edges.extend_from_slice(&middle.edges);
        edges.push(last.id);
        let distance = path_distance(self, &edges, from.offset, to.offset)?;
        Ok((edges, distance))
    }
}

/// All ordered stop-to-stop paths, precomputed once.
#[derive(Debug, Clone, PartialEq)]
pub struct StopDistanceTable {
    entries: BTreeMap<(StopId, StopId), StopPath>,
    stops: Vec<StopId>,
    dijkstra_runs: usize,
}

impl StopDistanceTable {
    /// Builds the table over every stop registered with `graph`.
    pub fn build(graph: &RoadGraph) -> Result<Self> {
        let ids: Vec<StopId> = graph.stops().iter().map(|s| s.id).collect();
        Self::build_for(graph, &ids, TieBreak::Lexicographic)
    }

    /// Builds the table over `stops`, running one Dijkstra per distinct
    /// sink vertex of the stops' host edges.
    pub fn build_for(graph: &RoadGraph, stops: &[StopId], tie: TieBreak) -> Result<Self> {
        let mut ids: Vec<StopId> = stops.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() < 2 {
            return Err(Error::InvalidInput(alloc::format!(
                "a distance table needs at least 2 stops, got {}",
                ids.len()
            )));
        }
        let mut trees: BTreeMap<VertexId, ShortestPathTree> = BTreeMap::new();
        for &id in &ids {
            let sink = graph.edge(graph.stop(id)?.edge)?.sink;
            if let alloc::collections::btree_map::Entry::Vacant(slot) = trees.entry(sink) {
                slot.insert(graph.shortest_path_tree(sink)?);
            }
        }
        let mut entries = BTreeMap::new();
        for &i in &ids {
            let a = *graph.stop(i)?;
            for &j in &ids {
                if i == j {
                    continue;
                }
                let b = *graph.stop(j)?;
                let (edges, distance) = graph.route_between(
                    EdgePosition {
                        edge: a.edge,
                        offset: a.slack,
                    },
                    EdgePosition {
                        edge: b.edge,
                        offset: b.slack,
                    },
                    tie,
                    Some(&trees[&graph.edge(a.edge)?.sink]),
                )?;
                entries.insert(
                    (i, j),
                    StopPath {
                        origin_stop: i,
                        dest_stop: j,
                        edges,
                        distance,
                    },
                );
            }
        }
        Ok(Self {
            entries,
            stops: ids,
            dijkstra_runs: trees.len(),
        })
    }

    /// Number of stored ordered pairs, `m(m - 1)`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stops(&self) -> &[StopId] {
        &self.stops
    }

    pub fn dijkstra_runs(&self) -> usize {
        self.dijkstra_runs
    }

    fn knows(&self, stop: StopId) -> bool {
        self.stops.binary_search(&stop).is_ok()
    }

    /// Path between two stops; the diagonal yields an empty zero-length path.
    pub fn path(&self, from: StopId, to: StopId) -> Option<StopPath> {
        if from == to {
            return self.knows(from).then(|| StopPath::empty(from));
        }
        self.entries.get(&(from, to)).cloned()
    }

    pub fn get(&self, from: StopId, to: StopId) -> Option<&StopPath> {
        self.entries.get(&(from, to))
    }

    pub fn distance(&self, from: StopId, to: StopId) -> Option<f64> {
        if from == to {
            return self.knows(from).then_some(0.0);
        }
        self.entries.get(&(from, to)).map(|p| p.distance)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StopPath> {
        self.entries.values()
    }
}
