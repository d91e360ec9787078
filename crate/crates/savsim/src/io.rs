//! Network JSON, scenario JSON and request CSV formats.
//!
//! Every writer goes through [`write_atomic`], so a failed run never leaves a
//! half-written file behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use savsim_core::demand::{validate_requests, TripRequest};
use savsim_core::engine::Scenario;
use savsim_core::netgraph::{edge_weight, DirectedEdge, RoadGraph, Stop, Vertex};

use crate::overrides::{apply_overrides, Override, OverrideError};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}")]
    Model {
        path: PathBuf,
        source: savsim_core::Error,
    },
    #[error("{path} fails validation:\n{report}")]
    InvalidNetwork { path: PathBuf, report: String },
    #[error(transparent)]
    Override(#[from] OverrideError),
    #[error("{path}: override does not fit the field: {message}")]
    OverrideType { path: PathBuf, message: String },
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_owned(),
        source,
    })
}

fn parse_error(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

/// Writes `contents` to a temporary file next to `path`, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let err = |source| IoError::Write {
        path: path.to_owned(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(contents).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub id: u32,
    pub source: u32,
    pub sink: u32,
    /// Euclidean length of the endpoints when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    pub free_flow_speed: f64,
    pub capacity_vehicles: u32,
}

/// On-disk network document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default)]
    pub stops: Vec<Stop>,
}

impl NetworkFile {
    pub fn from_graph(graph: &RoadGraph) -> Self {
        Self {
            vertices: graph.vertices().to_vec(),
            edges: graph
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    id: e.id,
                    source: e.source,
                    sink: e.sink,
                    length: Some(e.length),
                    free_flow_speed: e.free_flow_speed,
                    capacity_vehicles: e.capacity_vehicles,
                })
                .collect(),
            stops: graph.stops().to_vec(),
        }
    }

    /// Builds the graph without validating it, so that structural problems
    /// can be reported rather than rejected outright.
    pub fn into_graph(self) -> savsim_core::Result<RoadGraph> {
        let by_id: std::collections::BTreeMap<u32, Vertex> =
            self.vertices.iter().map(|v| (v.id, *v)).collect();
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in self.edges {
            let length = match (e.length, by_id.get(&e.source), by_id.get(&e.sink)) {
                (Some(l), _, _) => l,
                (None, Some(a), Some(b)) => edge_weight(a, b)?,
                // dangling endpoint: reported by validation
                (None, _, _) => 0.0,
            };
            edges.push(DirectedEdge {
                id: e.id,
                source: e.source,
                sink: e.sink,
                length,
                free_flow_speed: e.free_flow_speed,
                capacity_vehicles: e.capacity_vehicles,
            });
        }
        let mut graph = RoadGraph::new(self.vertices, edges);
        for stop in self.stops {
            graph.insert_stop(stop)?;
        }
        Ok(graph)
    }
}

/// Parses a network file without validating the graph.
pub fn read_network(path: &Path) -> Result<RoadGraph, IoError> {
    let text = read_to_string(path)?;
    let file: NetworkFile = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    file.into_graph().map_err(|source| IoError::Model {
        path: path.to_owned(),
        source,
    })
}

/// Parses a network file and rejects it unless it validates cleanly.
pub fn load_network(path: &Path) -> Result<RoadGraph, IoError> {
    let graph = read_network(path)?;
    let report = graph.validate();
    if !report.is_empty() {
        return Err(IoError::InvalidNetwork {
            path: path.to_owned(),
            report: report.to_string(),
        });
    }
    Ok(graph)
}

pub fn network_json(graph: &RoadGraph) -> String {
    let mut s =
        serde_json::to_string_pretty(&NetworkFile::from_graph(graph)).expect("network serializes");
    s.push('\n');
    s
}

pub fn write_network(path: &Path, graph: &RoadGraph) -> Result<(), IoError> {
    write_atomic(path, network_json(graph).as_bytes())
}

/// On-disk scenario document: the core scenario plus the network path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    /// Relative paths resolve against the scenario file's directory.
    pub network: PathBuf,
    #[serde(flatten)]
    pub scenario: Scenario,
}

/// A scenario ready to run, with its network path resolved.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub network_path: PathBuf,
    pub scenario: Scenario,
}

/// Reads a scenario document, filling unspecified fields with defaults, and
/// applies dotted-path overrides to the completed document.
pub fn load_scenario(path: &Path, overrides: &[Override]) -> Result<LoadedScenario, IoError> {
    let text = read_to_string(path)?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    let file: ScenarioFile = serde_json::from_value(raw).map_err(|e| parse_error(path, e))?;
    let file = if overrides.is_empty() {
        file
    } else {
        let mut doc = serde_json::to_value(&file).expect("scenario serializes");
        apply_overrides(&mut doc, overrides)?;
        serde_json::from_value(doc).map_err(|e| IoError::OverrideType {
            path: path.to_owned(),
            message: e.to_string(),
        })?
    };
    let network_path = if file.network.is_absolute() {
        file.network
    } else {
        path.parent().unwrap_or(Path::new(".")).join(file.network)
    };
    Ok(LoadedScenario {
        network_path,
        scenario: file.scenario,
    })
}

pub fn scenario_json(network: &Path, scenario: &Scenario) -> String {
    let file = ScenarioFile {
        network: network.to_owned(),
        scenario: scenario.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("scenario serializes");
    s.push('\n');
    s
}

pub const REQUEST_CSV_HEADER: &str = "id,origin,destination,request_time_s,party_size";

#[derive(Debug, Serialize, Deserialize)]
struct RequestRow {
    id: u32,
    origin: u32,
    destination: u32,
    request_time_s: f64,
    party_size: u32,
}

/// Reads a request CSV and checks it against the graph's stops. Rows are
/// returned sorted by request time.
pub fn load_requests(path: &Path, graph: &RoadGraph) -> Result<Vec<TripRequest>, IoError> {
    let text = read_to_string(path)?;
    let requests = parse_requests(&text).map_err(|e| parse_error(path, e))?;
    validate_requests(requests, graph).map_err(|source| IoError::Model {
        path: path.to_owned(),
        source,
    })
}

pub fn parse_requests(text: &str) -> Result<Vec<TripRequest>, csv::Error> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize::<RequestRow>()
        .map(|row| {
            row.map(|r| TripRequest {
                id: r.id,
                origin: r.origin,
                destination: r.destination,
                request_time: r.request_time_s,
                party_size: r.party_size,
            })
        })
        .collect()
}

pub fn requests_csv(requests: &[TripRequest]) -> String {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    let mut out = String::from(REQUEST_CSV_HEADER);
    out.push('\n');
    for r in requests {
        writer
            .serialize(RequestRow {
                id: r.id,
                origin: r.origin,
                destination: r.destination,
                request_time_s: r.request_time,
                party_size: r.party_size,
            })
            .expect("in-memory write");
    }
    out.push_str(
        std::str::from_utf8(&writer.into_inner().expect("in-memory flush")).expect("utf-8"),
    );
    out
}
