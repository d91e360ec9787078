//! Independent check of stop-to-stop distances.
//!
//! Every stop splits its host edge at its slack, creating a vertex; stops at
//! the same slack on the same edge share that vertex. A plain Dijkstra over
//! the split graph then yields the driving distance between any two stops
//! directly, without the special cases the table construction needs. None
//! of the routing code in `savsim-core` is reused here.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use savsim_core::netgraph::{RoadGraph, StopDistanceTable};
use savsim_core::StopId;

/// Absolute tolerance for table/oracle agreement.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// The graph with every stop turned into a vertex.
#[derive(Debug, Clone)]
pub struct SplitGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    stop_node: BTreeMap<StopId, usize>,
}

impl SplitGraph {
    pub fn new(graph: &RoadGraph) -> Self {
        let mut node_of_vertex = BTreeMap::new();
        for (i, v) in graph.vertices().iter().enumerate() {
            node_of_vertex.insert(v.id, i);
        }
        let mut nodes = graph.vertices().len();
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes];
        let mut stop_node = BTreeMap::new();

        let mut stops_on: BTreeMap<u32, Vec<(f64, StopId)>> = BTreeMap::new();
        for s in graph.stops() {
            stops_on.entry(s.edge).or_default().push((s.slack, s.id));
        }
        for e in graph.edges() {
            let src = node_of_vertex[&e.source];
            let dst = node_of_vertex[&e.sink];
            let mut on_edge = stops_on.remove(&e.id).unwrap_or_default();
            on_edge.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut prev, mut prev_offset) = (src, 0.0);
            let mut i = 0;
            while i < on_edge.len() {
                let offset = on_edge[i].0;
                let node = nodes;
                nodes += 1;
                adjacency.push(Vec::new());
                while i < on_edge.len() && on_edge[i].0 == offset {
                    stop_node.insert(on_edge[i].1, node);
                    i += 1;
                }
                adjacency[prev].push((node, offset - prev_offset));
                prev = node;
                prev_offset = offset;
            }
            adjacency[prev].push((dst, e.length - prev_offset));
        }
        Self {
            adjacency,
            stop_node,
        }
    }

    /// Distances from one stop's node to every node.
    fn dijkstra(&self, from: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.adjacency.len()];
        let mut heap = BinaryHeap::new();
        dist[from] = 0.0;
        heap.push(Reverse((Dist(0.0), from)));
        while let Some(Reverse((Dist(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Reverse((Dist(nd), v)));
                }
            }
        }
        dist
    }

    /// Driving distance for every ordered pair of distinct stops.
    pub fn all_stop_distances(&self) -> BTreeMap<(StopId, StopId), f64> {
        let mut out = BTreeMap::new();
        for (&from, &node) in &self.stop_node {
            let dist = self.dijkstra(node);
            for (&to, &target) in &self.stop_node {
                if from != to {
                    out.insert((from, to), dist[target]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub from: StopId,
    pub to: StopId,
    pub table: Option<f64>,
    pub oracle: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub pairs_checked: usize,
    pub table_entries: usize,
    pub max_abs_difference: f64,
    pub mismatches: Vec<Mismatch>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.table_entries == self.pairs_checked
    }
}

/// Compares every table entry against the split-graph distances.
pub fn check_table(graph: &RoadGraph, table: &StopDistanceTable) -> OracleReport {
    let oracle = SplitGraph::new(graph).all_stop_distances();
    let mut report = OracleReport {
        table_entries: table.len(),
        ..OracleReport::default()
    };
    for (&(from, to), &expected) in &oracle {
        report.pairs_checked += 1;
        let got = table.distance(from, to);
        let diff = got.map_or(f64::INFINITY, |d| (d - expected).abs());
        report.max_abs_difference = report.max_abs_difference.max(diff);
        if diff.is_nan() || diff > TOLERANCE {
            report.mismatches.push(Mismatch {
                from,
                to,
                table: got,
                oracle: expected,
            });
        }
    }
    report
}
