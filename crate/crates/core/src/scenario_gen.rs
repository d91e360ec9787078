//! Synthetic grid network with a ring of housing stops around a central
//! opportunity zone.
//!
//! The grid spans exactly `width` × `height` meters. Column and row counts are
//! the smallest that keep the spacing at or below `grid_spacing`; every
//! neighbouring pair of vertices is joined by two directed edges. Housing
//! stops sit on the clockwise outer ring, opportunity stops on edges lying
//! wholly inside the middle third of both dimensions.

use alloc::vec::Vec;

use rand::Rng;

use crate::demand::DemandProfile;
use crate::engine::Scenario;
use crate::netgraph::{DirectedEdge, RoadGraph, Vertex, Zone};
use crate::rng::rng_for;
use crate::traffic::BackgroundFlow;
use crate::{EdgeId, Error, Result, VertexId};

/// 40 mph.
pub const DEFAULT_FREE_FLOW_SPEED: f64 = 17.88;
/// Road length occupied by one jammed vehicle.
pub const METERS_PER_JAMMED_VEHICLE: f64 = 8.0;

const STOP_STREAM: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SyntheticSpec {
    /// Meters (9 miles).
    pub width: f64,
    /// Meters (8 miles).
    pub height: f64,
    /// Largest allowed distance between neighbouring grid vertices.
    pub grid_spacing: f64,
    pub peripheral_stop_count: u32,
    pub central_stop_count: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            width: 14484.0,
            height: 12875.0,
            grid_spacing: 1600.0,
            peripheral_stop_count: 8,
            central_stop_count: 6,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width", self.width),
            ("height", self.height),
            ("grid_spacing", self.grid_spacing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(alloc::format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.peripheral_stop_count == 0 || self.central_stop_count == 0 {
            return Err(Error::InvalidInput("stop counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Vertex columns and rows.
    pub fn dimensions(&self) -> (usize, usize) {
        let count =
            |extent: f64| libm::ceil(extent / self.grid_spacing - 1e-9).max(1.0) as usize + 1;
        (count(self.width), count(self.height))
    }
}

/// A generated network and the demand and background traffic that go with it.
#[derive(Debug, Clone)]
pub struct SyntheticNetwork {
    pub graph: RoadGraph,
    pub demand: DemandProfile,
    pub background: Vec<BackgroundFlow>,
}

fn vertex_id(nx: usize, col: usize, row: usize) -> VertexId {
    (row * nx + col) as VertexId
}

/// The bidirectional grid without stops.
pub fn generate_grid(spec: &SyntheticSpec) -> Result<RoadGraph> {
    spec.validate()?;
    let (nx, ny) = spec.dimensions();
    let dx = spec.width / (nx - 1) as f64;
    let dy = spec.height / (ny - 1) as f64;
    let mut vertices = Vec::with_capacity(nx * ny);
    for row in 0..ny {
        for col in 0..nx {
            // the last column/row lands exactly on the boundary
            let x = if col == nx - 1 {
                spec.width
            } else {
                col as f64 * dx
            };
            let y = if row == ny - 1 {
                spec.height
            } else {
                row as f64 * dy
            };
            vertices.push(Vertex::new(vertex_id(nx, col, row), x, y));
        }
    }
    let mut edges = Vec::new();
    let link = |a: usize, b: usize, edges: &mut Vec<DirectedEdge>| -> Result<()> {
        for (s, t) in [(a, b), (b, a)] {
            let mut e = DirectedEdge::between(
                edges.len() as EdgeId,
                &vertices[s],
                &vertices[t],
                DEFAULT_FREE_FLOW_SPEED,
                1,
            )?;
            e.capacity_vehicles = (libm::round(e.length / METERS_PER_JAMMED_VEHICLE) as u32).max(1);
            edges.push(e);
        }
        Ok(())
    };
    for row in 0..ny {
        for col in 0..nx {
            let here = row * nx + col;
            if col + 1 < nx {
                link(here, here + 1, &mut edges)?;
            }
            if row + 1 < ny {
                link(here, here + nx, &mut edges)?;
            }
        }
    }
    Ok(RoadGraph::new(vertices, edges))
}

impl SyntheticNetwork {
    /// The default experiment on this network: its demand and background
    /// traffic with protocol defaults for everything else.
    pub fn scenario(&self, base_seed: u64) -> Scenario {
        Scenario {
            label: "synthetic".into(),
            demand: self.demand,
            background: self.background.clone(),
            base_seed,
            ..Scenario::default()
        }
    }
}

/// Vertex ids of the outer ring in clockwise order, starting top-left.
fn clockwise_ring(nx: usize, ny: usize) -> Vec<VertexId> {
    let mut ring = Vec::new();
    for col in 0..nx {
        ring.push(vertex_id(nx, col, ny - 1));
    }
    for row in (0..ny - 1).rev() {
        ring.push(vertex_id(nx, nx - 1, row));
    }
    for col in (0..nx - 1).rev() {
        ring.push(vertex_id(nx, col, 0));
    }
    for row in 1..ny - 1 {
        ring.push(vertex_id(nx, 0, row));
    }
    ring
}

fn edge_between(graph: &RoadGraph, source: VertexId, sink: VertexId) -> Option<&DirectedEdge> {
    graph
        .edges()
        .iter()
        .find(|e| e.source == source && e.sink == sink)
}

/// Builds the grid, places the stops and attaches default demand and
/// background flows.
pub fn generate_network(spec: &SyntheticSpec) -> Result<SyntheticNetwork> {
    let mut graph = generate_grid(spec)?;
    let (nx, ny) = spec.dimensions();
    let mut rng = rng_for(spec.seed, STOP_STREAM);

    let ring = clockwise_ring(nx, ny);
    let ring_edges: Vec<EdgeId> = (0..ring.len())
        .map(|i| {
            edge_between(&graph, ring[i], ring[(i + 1) % ring.len()])
                .expect("grid ring edge")
                .id
        })
        .collect();
    let k = spec.peripheral_stop_count as usize;
    if k > ring_edges.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "{k} peripheral stops requested but the outer ring has only {} edges",
            ring_edges.len()
        )));
    }
    // evenly spread around the ring, rotated by a seeded offset
    let step = ring_edges.len() as f64 / k as f64;
    let offset: f64 = rng.random_range(0.0..step);
    for i in 0..k {
        let edge = ring_edges[libm::floor(offset + i as f64 * step) as usize % ring_edges.len()];
        let len = graph.edge(edge)?.length;
        let slack = len * rng.random_range(0.2..=0.8);
        graph.place_stop(edge, slack, Zone::PeripheralHousing)?;
    }

    let (cx, cy) = (spec.width / 2.0, spec.height / 2.0);
    // keeps every central stop strictly closer to the center than any ring point
    let radius = spec.width.min(spec.height) / 2.0;
    let inside = |v: &Vertex| {
        let in_third = v.x >= spec.width / 3.0
            && v.x <= 2.0 * spec.width / 3.0
            && v.y >= spec.height / 3.0
            && v.y <= 2.0 * spec.height / 3.0;
        in_third && libm::hypot(v.x - cx, v.y - cy) < radius
    };
    let mut candidates: Vec<EdgeId> = graph
        .edges()
        .iter()
        .filter(|e| {
            inside(graph.vertex(e.source).unwrap()) && inside(graph.vertex(e.sink).unwrap())
        })
        .map(|e| e.id)
        .collect();
    let k = spec.central_stop_count as usize;
    if k > candidates.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "{k} central stops requested but only {} edges lie inside the central zone",
            candidates.len()
        )));
    }
    // partial Fisher-Yates
    for i in 0..k {
        let j = rng.random_range(i..candidates.len());
        candidates.swap(i, j);
    }
    let mut chosen = candidates[..k].to_vec();
    chosen.sort_unstable();
    for edge in chosen {
        let len = graph.edge(edge)?.length;
        let slack = len * rng.random_range(0.2..=0.8);
        graph.place_stop(edge, slack, Zone::CentralOpportunity)?;
    }

    let background = default_background(nx, ny);
    Ok(SyntheticNetwork {
        graph,
        demand: DemandProfile::default(),
        background,
    })
}

/// Vehicles per hour on each default background flow.
pub const DEFAULT_BACKGROUND_RATE: f64 = 60.0;

/// Corner-to-opposite-corner flows in both diagonals and directions.
pub fn default_background(nx: usize, ny: usize) -> Vec<BackgroundFlow> {
    let bl = vertex_id(nx, 0, 0);
    let br = vertex_id(nx, nx - 1, 0);
    let tl = vertex_id(nx, 0, ny - 1);
    let tr = vertex_id(nx, nx - 1, ny - 1);
    [(bl, tr), (tr, bl), (br, tl), (tl, br)]
        .into_iter()
        .map(|(origin_vertex, destination_vertex)| BackgroundFlow {
            origin_vertex,
            destination_vertex,
            rate: DEFAULT_BACKGROUND_RATE,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox(graph: &RoadGraph) -> (f64, f64, f64, f64) {
        let xs = graph.vertices().iter().map(|v| v.x);
        let ys = graph.vertices().iter().map(|v| v.y);
        (
            xs.clone().fold(f64::INFINITY, f64::min),
            xs.fold(f64::NEG_INFINITY, f64::max),
            ys.clone().fold(f64::INFINITY, f64::min),
            ys.fold(f64::NEG_INFINITY, f64::max),
        )
    }

    #[test]
    fn default_spec_bounding_box_is_nine_by_eight_miles() {
        let spec = SyntheticSpec::default();
        assert_eq!((spec.width, spec.height), (14484.0, 12875.0));
        let net = generate_network(&spec).unwrap();
        assert_eq!(bbox(&net.graph), (0.0, 14484.0, 0.0, 12875.0));
        assert_eq!(spec.dimensions(), (11, 10));
    }

    #[test]
    fn default_network_validates_and_has_requested_stops() {
        let net = generate_network(&SyntheticSpec::default()).unwrap();
        assert!(net.graph.validate().is_empty(), "{}", net.graph.validate());
        let count = |z| net.graph.stops().iter().filter(|s| s.zone == z).count();
        assert_eq!(count(Zone::PeripheralHousing), 8);
        assert_eq!(count(Zone::CentralOpportunity), 6);
        for e in net.graph.edges() {
            assert_eq!(e.free_flow_speed, DEFAULT_FREE_FLOW_SPEED);
            assert!(e.capacity_vehicles >= 1);
        }
    }

    #[test]
    fn degenerate_two_by_two_grid_is_strongly_connected() {
        let spec = SyntheticSpec {
            width: 1000.0,
            height: 1000.0,
            grid_spacing: 1000.0,
            ..SyntheticSpec::default()
        };
        let g = generate_grid(&spec).unwrap();
        assert_eq!(g.vertices().len(), 4);
        assert_eq!(g.edges().len(), 8);
        assert!(g.validate().is_empty());
        // no edge lies inside the middle third, so central stops cannot be hosted
        assert!(matches!(
            generate_network(&spec),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn default_diameter_spans_the_width() {
        let net = generate_network(&SyntheticSpec::default()).unwrap();
        let g = &net.graph;
        let mut diameter: f64 = 0.0;
        for v in g.vertices() {
            let tree = g.shortest_path_tree(v.id).unwrap();
            for w in g.vertices() {
                diameter = diameter.max(tree.distance_to(g, w.id).unwrap());
            }
        }
        assert!(diameter >= 14484.0, "{diameter}");
    }

    #[test]
    fn same_seed_same_network() {
        let a = generate_network(&SyntheticSpec::default()).unwrap();
        let b = generate_network(&SyntheticSpec::default()).unwrap();
        assert_eq!(a.graph.stops(), b.graph.stops());
        assert_eq!(a.graph.edges(), b.graph.edges());
        let c = generate_network(&SyntheticSpec {
            seed: 99,
            ..SyntheticSpec::default()
        })
        .unwrap();
        assert_ne!(a.graph.stops(), c.graph.stops());
    }

    #[test]
    fn housing_stops_are_farther_from_center_than_central_stops() {
        for seed in 0..20 {
            for (w, h) in [(14484.0, 12875.0), (30000.0, 6000.0), (5000.0, 5000.0)] {
                let spec = SyntheticSpec {
                    width: w,
                    height: h,
                    seed,
                    central_stop_count: 2,
                    ..SyntheticSpec::default()
                };
                let Ok(net) = generate_network(&spec) else {
                    continue;
                };
                let g = &net.graph;
                let dist = |s: &crate::netgraph::Stop| {
                    let e = g.edge(s.edge).unwrap();
                    let (a, b) = (g.vertex(e.source).unwrap(), g.vertex(e.sink).unwrap());
                    let t = s.slack / e.length;
                    libm::hypot(
                        a.x + t * (b.x - a.x) - w / 2.0,
                        a.y + t * (b.y - a.y) - h / 2.0,
                    )
                };
                let min_ring = g
                    .stops()
                    .iter()
                    .filter(|s| s.zone == Zone::PeripheralHousing)
                    .map(dist)
                    .fold(f64::INFINITY, f64::min);
                let max_center = g
                    .stops()
                    .iter()
                    .filter(|s| s.zone == Zone::CentralOpportunity)
                    .map(dist)
                    .fold(0.0, f64::max);
                assert!(min_ring > max_center, "seed {seed} {w}x{h}");
                assert!(g.validate().is_empty());
            }
        }
    }

    #[test]
    fn too_many_stops_is_invalid_input() {
        let spec = SyntheticSpec {
            peripheral_stop_count: 1000,
            ..SyntheticSpec::default()
        };
        assert!(matches!(
            generate_network(&spec),
            Err(Error::InvalidInput(_))
        ));
        let spec = SyntheticSpec {
            grid_spacing: 0.0,
            ..SyntheticSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
