//! Speed-density closure, driving-behavior profiles and stop counting.
//!
//! Edge speed follows the linear Greenshields relation with a crawl floor:
//! `v = v_free * max(0.05, 1 - occupancy / capacity)`.

use core::fmt;

use crate::netgraph::DirectedEdge;
use crate::{EdgeId, Error, Result, VertexId};

/// Fraction of free-flow speed a saturated edge still allows.
pub const CRAWL_FACTOR: f64 = 0.05;
/// Below this speed (m/s) a vehicle counts as stopped.
pub const STOP_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Behavior {
    Cautious,
    Normal,
    Aggressive,
}

impl Behavior {
    pub const ALL: [Behavior; 3] = [Behavior::Cautious, Behavior::Normal, Behavior::Aggressive];

    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Cautious => "cautious",
            Behavior::Normal => "normal",
            Behavior::Aggressive => "aggressive",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Behavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cautious" => Ok(Behavior::Cautious),
            "normal" => Ok(Behavior::Normal),
            "aggressive" => Ok(Behavior::Aggressive),
            _ => Err(Error::InvalidInput(alloc::format!(
                "unknown behavior profile '{s}'"
            ))),
        }
    }
}

/// How an automated driver converts attainable speed into its own speed,
/// and how long it dwells per boarding or alighting event.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BehaviorProfile {
    pub speed_factor: f64,
    /// Seconds.
    pub dwell_time: f64,
}

impl BehaviorProfile {
    pub const CAUTIOUS: Self = Self {
        speed_factor: 0.85,
        dwell_time: 20.0,
    };
    pub const NORMAL: Self = Self {
        speed_factor: 1.00,
        dwell_time: 12.0,
    };
    pub const AGGRESSIVE: Self = Self {
        speed_factor: 1.10,
        dwell_time: 8.0,
    };
    /// Human-driven background traffic.
    pub const BACKGROUND: Self = Self::NORMAL;
}

/// The three named profiles, overridable per scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BehaviorTable {
    pub cautious: BehaviorProfile,
    pub normal: BehaviorProfile,
    pub aggressive: BehaviorProfile,
}

impl Default for BehaviorTable {
    fn default() -> Self {
        Self {
            cautious: BehaviorProfile::CAUTIOUS,
            normal: BehaviorProfile::NORMAL,
            aggressive: BehaviorProfile::AGGRESSIVE,
        }
    }
}

impl BehaviorTable {
    pub fn get(&self, behavior: Behavior) -> BehaviorProfile {
        match behavior {
            Behavior::Cautious => self.cautious,
            Behavior::Normal => self.normal,
            Behavior::Aggressive => self.aggressive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in Behavior::ALL {
            let p = self.get(b);
            if !(p.speed_factor > 0.0 && p.speed_factor.is_finite()) || !(p.dwell_time >= 0.0) {
                return Err(Error::Configuration(alloc::format!(
                    "invalid {b} profile {p:?}"
                )));
            }
        }
        if !(self.cautious.speed_factor < self.normal.speed_factor
            && self.normal.speed_factor < self.aggressive.speed_factor)
        {
            return Err(Error::Configuration(
                "speed factors must satisfy cautious < normal < aggressive".into(),
            ));
        }
        Ok(())
    }
}

/// Live state of one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeState {
    pub edge: EdgeId,
    pub occupancy: u32,
    pub current_speed: f64,
}

impl EdgeState {
    pub fn new(edge: &DirectedEdge, occupancy: u32) -> Self {
        Self {
            edge: edge.id,
            occupancy,
            current_speed: edge_speed(edge, occupancy),
        }
    }
}

/// Stationary background demand between two vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BackgroundFlow {
    pub origin_vertex: VertexId,
    pub destination_vertex: VertexId,
    /// Vehicles per hour.
    pub rate: f64,
}

impl BackgroundFlow {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::Configuration(alloc::format!(
                "background rate {} < 0",
                self.rate
            )));
        }
        if self.origin_vertex == self.destination_vertex {
            return Err(Error::Configuration(alloc::format!(
                "background flow from vertex {} to itself",
                self.origin_vertex
            )));
        }
        Ok(())
    }
}

/// Attainable speed (m/s) on `edge` at the given occupancy.
pub fn edge_speed(edge: &DirectedEdge, occupancy: u32) -> f64 {
    let load = occupancy as f64 / edge.capacity_vehicles.max(1) as f64;
    edge.free_flow_speed * (1.0 - load).max(CRAWL_FACTOR)
}

/// Speed a driver with `profile` actually holds; never above free flow.
pub fn effective_speed(edge: &DirectedEdge, occupancy: u32, profile: &BehaviorProfile) -> f64 {
    (edge_speed(edge, occupancy) * profile.speed_factor).min(edge.free_flow_speed)
}

/// Seconds to traverse the whole edge.
pub fn edge_travel_time(edge: &DirectedEdge, occupancy: u32, profile: &BehaviorProfile) -> f64 {
    edge.length / effective_speed(edge, occupancy, profile)
}

/// True when a vehicle drops from at-or-above walking pace to below it.
pub fn count_stop_event(previous_speed: f64, new_speed: f64) -> bool {
    previous_speed >= STOP_THRESHOLD && new_speed < STOP_THRESHOLD
}
