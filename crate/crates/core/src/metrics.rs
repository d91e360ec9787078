//! Replication measures, cross-replication aggregation and CSV rendering.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::traffic::Behavior;

/// Column order shared by the per-replication and aggregate CSV files.
pub const METRIC_NAMES: [&str; 9] = [
    "avg_delay_min",
    "avg_stops",
    "total_distance_m",
    "trips_completed",
    "trips_per_sav",
    "avg_wait_min",
    "passengers_served",
    "shared_miles_m",
    "unserved",
];

pub const RECORD_CSV_HEADER: &str = "scenario,fleet_size,profile,replication,avg_delay_min,avg_stops,total_distance_m,trips_completed,trips_per_sav,avg_wait_min,passengers_served,shared_miles_m,unserved";

/// Delay of one vehicle: time lost against free flow, never negative.
pub fn vehicle_delay(actual_travel_time: f64, free_flow_time: f64) -> f64 {
    (actual_travel_time - free_flow_time).max(0.0)
}

/// Identifies which run a record belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordLabel {
    pub scenario: String,
    pub fleet_size: u32,
    pub profile: Behavior,
    pub replication: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VehicleTally {
    /// Seconds spent moving.
    pub travel_time: f64,
    /// Seconds the same distance takes at free flow.
    pub free_flow_time: f64,
    pub stops: u32,
}

/// Online accumulator owned by one replication.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    total_distance: f64,
    sav_distance: f64,
    shared_distance: f64,
    wait_sum: f64,
    waits: u64,
    trips_by_sav: Vec<u64>,
    passengers_served: u64,
    requests_generated: u64,
}

impl MetricsAccumulator {
    pub fn new(fleet_size: u32) -> Self {
        Self {
            trips_by_sav: alloc::vec![0; fleet_size as usize],
            ..Self::default()
        }
    }

    pub fn request_generated(&mut self) {
        self.requests_generated += 1;
    }

    pub fn background_travel(&mut self, meters: f64) {
        self.total_distance += meters;
    }

    /// Distance driven by a fleet vehicle carrying `distinct_requests` parties.
    pub fn sav_travel(&mut self, meters: f64, distinct_requests: usize) {
        self.total_distance += meters;
        self.sav_distance += meters;
        if distinct_requests >= 2 {
            self.shared_distance += meters;
        }
    }

    /// A party boarded after waiting `wait` seconds.
    pub fn pickup(&mut self, wait: f64) {
        self.wait_sum += wait;
        self.waits += 1;
    }

    pub fn dropoff(&mut self, sav: usize, party_size: u32) {
        self.trips_by_sav[sav] += 1;
        self.passengers_served += party_size as u64;
    }

    pub fn passengers_served(&self) -> u64 {
        self.passengers_served
    }

    pub fn shared_distance(&self) -> f64 {
        self.shared_distance
    }

    /// Closes the replication. `vehicles` covers every vehicle that entered
    /// the network (background and fleet).
    pub fn finalize(self, label: RecordLabel, vehicles: &[VehicleTally]) -> MetricsRecord {
        let n = vehicles.len();
        let (avg_delay_min, avg_stops) = if n == 0 {
            (0.0, 0.0)
        } else {
            let delay: f64 = vehicles
                .iter()
                .map(|v| vehicle_delay(v.travel_time, v.free_flow_time))
                .sum();
            let stops: u64 = vehicles.iter().map(|v| v.stops as u64).sum();
            (delay / n as f64 / 60.0, stops as f64 / n as f64)
        };
        let trips_completed: u64 = self.trips_by_sav.iter().sum();
        let fleet = self.trips_by_sav.len();
        MetricsRecord {
            scenario: label.scenario,
            fleet_size: label.fleet_size,
            profile: label.profile,
            replication: label.replication,
            avg_delay_min,
            avg_stops,
            total_distance_m: self.total_distance,
            sav_distance_m: self.sav_distance,
            trips_completed,
            trips_per_sav: if fleet == 0 {
                0.0
            } else {
                trips_completed as f64 / fleet as f64
            },
            avg_wait_min: if self.waits == 0 {
                0.0
            } else {
                self.wait_sum / self.waits as f64 / 60.0
            },
            passengers_served: self.passengers_served,
            shared_miles_m: self.shared_distance,
            unserved: self.requests_generated - trips_completed,
            requests_generated: self.requests_generated,
            trips_by_sav: self.trips_by_sav,
            vehicles: n as u64,
            empty_vehicle_population: n == 0,
            empty_wait_population: self.waits == 0,
        }
    }
}

/// Measures of one replication.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsRecord {
    pub scenario: String,
    pub fleet_size: u32,
    pub profile: Behavior,
    pub replication: u32,
    pub avg_delay_min: f64,
    pub avg_stops: f64,
    /// All vehicles, fleet deadheading included.
    pub total_distance_m: f64,
    pub sav_distance_m: f64,
    pub trips_completed: u64,
    pub trips_per_sav: f64,
    pub trips_by_sav: Vec<u64>,
    /// Over picked-up requests only.
    pub avg_wait_min: f64,
    pub passengers_served: u64,
    /// Fleet meters with two or more distinct requests aboard.
    pub shared_miles_m: f64,
    /// Generated but not completed by the horizon.
    pub unserved: u64,
    pub requests_generated: u64,
    pub vehicles: u64,
    pub empty_vehicle_population: bool,
    pub empty_wait_population: bool,
}

impl MetricsRecord {
    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [f64; 9] {
        [
            self.avg_delay_min,
            self.avg_stops,
            self.total_distance_m,
            self.trips_completed as f64,
            self.trips_per_sav,
            self.avg_wait_min,
            self.passengers_served as f64,
            self.shared_miles_m,
            self.unserved as f64,
        ]
    }

    fn sort_key(&self) -> (&str, u32, Behavior, u32) {
        (
            &self.scenario,
            self.fleet_size,
            self.profile,
            self.replication,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            // exact, free of summation rounding
            return Self {
                mean: min,
                std_dev: 0.0,
                min,
                max,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_dev =
            libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0));
        Self {
            mean,
            std_dev,
            min,
            max,
        }
    }
}

/// Statistics of every metric across a scenario's replications.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AggregateRecord {
    pub scenario: String,
    pub fleet_size: u32,
    pub profile: Behavior,
    pub replications: u32,
    /// In [`METRIC_NAMES`] order.
    pub metrics: [Summary; 9],
}

impl AggregateRecord {
    pub fn metric(&self, name: &str) -> Option<Summary> {
        METRIC_NAMES
            .iter()
            .position(|&m| m == name)
            .map(|i| self.metrics[i])
    }
}

/// Folds the records of one scenario; input order does not matter.
pub fn aggregate(records: &[MetricsRecord]) -> Option<AggregateRecord> {
    let mut sorted: Vec<&MetricsRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.replication);
    let first = sorted.first()?;
    let mut metrics = [Summary::default(); 9];
    for (i, m) in metrics.iter_mut().enumerate() {
        let column: Vec<f64> = sorted.iter().map(|r| r.values()[i]).collect();
        *m = Summary::of(&column);
    }
    Some(AggregateRecord {
        scenario: first.scenario.clone(),
        fleet_size: first.fleet_size,
        profile: first.profile,
        replications: sorted.len() as u32,
        metrics,
    })
}

fn push_field(out: &mut String, field: &str) {
    if field.contains([',', '"', '\n', '\r']) {
        out.push('"');
        out.push_str(&field.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(field);
    }
}

/// Per-replication CSV, rows sorted by (scenario, fleet size, profile, replication).
pub fn records_csv(records: &[MetricsRecord]) -> String {
    let mut rows: Vec<&MetricsRecord> = records.iter().collect();
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut out = String::from(RECORD_CSV_HEADER);
    out.push('\n');
    for r in rows {
        push_field(&mut out, &r.scenario);
        let _ = writeln!(
            out,
            ",{},{},{},{:.6},{:.6},{:.6},{},{:.6},{:.6},{},{:.6},{}",
            r.fleet_size,
            r.profile,
            r.replication,
            r.avg_delay_min,
            r.avg_stops,
            r.total_distance_m,
            r.trips_completed,
            r.trips_per_sav,
            r.avg_wait_min,
            r.passengers_served,
            r.shared_miles_m,
            r.unserved
        );
    }
    out
}

/// Aggregate CSV: one row per (cell, statistic).
pub fn aggregates_csv(aggregates: &[AggregateRecord]) -> String {
    let mut rows: Vec<&AggregateRecord> = aggregates.iter().collect();
    rows.sort_by(|a, b| {
        (&a.scenario, a.fleet_size, a.profile).cmp(&(&b.scenario, b.fleet_size, b.profile))
    });
    let mut out = String::from("scenario,fleet_size,profile,replications,statistic");
    for name in METRIC_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    type Statistic = (&'static str, fn(&Summary) -> f64);
    for a in rows {
        let stats: [Statistic; 4] = [
            ("mean", |s| s.mean),
            ("std", |s| s.std_dev),
            ("min", |s| s.min),
            ("max", |s| s.max),
        ];
        for (name, pick) in stats {
            push_field(&mut out, &a.scenario);
            let _ = write!(
                out,
                ",{},{},{},{}",
                a.fleet_size, a.profile, a.replications, name
            );
            for m in &a.metrics {
                let _ = write!(out, ",{:.6}", pick(m));
            }
            out.push('\n');
        }
    }
    out
}
