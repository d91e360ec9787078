//! Deterministic discrete-event simulator for on-demand, ride-shared
//! autonomous vehicle (SAV) fleets on a directed road network.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel replication live in the `savsim` companion crate.
//!
//! Module map:
//!
//! - [`netgraph`]: road graph, mid-edge stops, shortest paths and the
//!   stop-to-stop distance table.
//! - [`demand`]: Poisson trip-request generation between zones.
//! - [`traffic`]: speed-density closure, behavior profiles, stop counting.
//! - [`dispatch`]: request selection and shared-ride insertion.
//! - [`engine`]: the event loop, replications and sweeps.
//! - [`metrics`]: per-replication measures, aggregation and CSV rendering.
//! - [`scenario_gen`]: synthetic grid network with peripheral and central stops.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod demand;
pub mod dispatch;
pub mod engine;
mod error;
pub mod metrics;
pub mod netgraph;
pub mod rng;
pub mod scenario_gen;
pub mod traffic;

pub use error::{Error, Result};

/// Identifier of a road-graph vertex.
pub type VertexId = u32;
/// Identifier of a directed edge.
pub type EdgeId = u32;
/// Identifier of a pickup/dropoff stop.
pub type StopId = u32;
/// Identifier of a trip request.
pub type RequestId = u32;
/// Identifier of a fleet vehicle.
pub type SavId = u32;
