//! Parallel replications. Each replication depends only on the scenario and
//! its index, so results are identical to the sequential functions in
//! `savsim_core::engine` whatever the worker count.

use rayon::prelude::*;

use savsim_core::demand::TripRequest;
use savsim_core::engine::{
    check_sweep_lists, replication_requests, simulate, sweep_cell_scenario, EventSink, LogEntry,
    OccupancySample, RunOptions, Scenario, ScenarioResult, SimNetwork, SweepCell, SweepResult,
};
use savsim_core::metrics::MetricsRecord;
use savsim_core::traffic::Behavior;
use savsim_core::Error;

/// What a replication produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRun {
    pub record: MetricsRecord,
    /// Present when the event log was requested.
    pub log: Option<Vec<LogEntry>>,
    /// Present when edge occupancy sampling was requested.
    pub occupancy: Option<Vec<OccupancySample>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunnerOptions {
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    pub event_log: bool,
    pub occupancy: bool,
    pub audit: bool,
}

#[derive(Default)]
struct Recorder {
    log: Option<Vec<LogEntry>>,
    occupancy: Option<Vec<OccupancySample>>,
}

impl EventSink for Recorder {
    fn record(&mut self, entry: &LogEntry) {
        if let Some(log) = &mut self.log {
            log.push(*entry);
        }
    }

    fn occupancy(&mut self, sample: &OccupancySample) {
        if let Some(samples) = &mut self.occupancy {
            samples.push(*sample);
        }
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Error> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Configuration(format!("cannot start worker pool: {e}")))
}

fn replicate(
    net: &SimNetwork,
    scenario: &Scenario,
    index: u32,
    fixed_requests: Option<&[TripRequest]>,
    options: RunnerOptions,
) -> Result<ReplicationRun, Error> {
    let wrap = |e| Error::Replication {
        index,
        source: Box::new(e),
    };
    let requests = match fixed_requests {
        Some(r) => r.to_vec(),
        None => replication_requests(net, scenario, index).map_err(wrap)?,
    };
    let mut recorder = Recorder {
        log: options.event_log.then(Vec::new),
        occupancy: options.occupancy.then(Vec::new),
    };
    let wanted = options.event_log || options.occupancy;
    let run_options = RunOptions {
        audit: options.audit,
        log: wanted.then_some(&mut recorder as &mut dyn EventSink),
    };
    let outcome = simulate(net, scenario, index, requests, run_options).map_err(wrap)?;
    Ok(ReplicationRun {
        record: outcome.record,
        log: recorder.log,
        occupancy: recorder.occupancy,
    })
}

/// Runs every replication of `scenario` on a worker pool. With
/// `fixed_requests` every replication serves that request list; otherwise
/// each draws its own demand.
pub fn run_replications(
    net: &SimNetwork,
    scenario: &Scenario,
    fixed_requests: Option<&[TripRequest]>,
    options: RunnerOptions,
) -> Result<Vec<ReplicationRun>, Error> {
    scenario.validate(net)?;
    pool(options.jobs)?.install(|| {
        (0..scenario.replications)
            .into_par_iter()
            .map(|i| replicate(net, scenario, i, fixed_requests, options))
            .collect()
    })
}

pub fn run_scenario(
    net: &SimNetwork,
    scenario: &Scenario,
    jobs: Option<usize>,
) -> Result<ScenarioResult, Error> {
    let runs = run_replications(
        net,
        scenario,
        None,
        RunnerOptions {
            jobs,
            ..RunnerOptions::default()
        },
    )?;
    Ok(
        ScenarioResult::from_records(runs.into_iter().map(|r| r.record).collect())
            .expect("replications >= 1"),
    )
}

/// Fleet size by behavior grid; every (cell, replication) pair is one task.
pub fn run_sweep(
    net: &SimNetwork,
    base: &Scenario,
    fleet_sizes: &[u32],
    profiles: &[Behavior],
    jobs: Option<usize>,
) -> Result<SweepResult, Error> {
    check_sweep_lists(fleet_sizes, profiles)?;
    let cells: Vec<Scenario> = fleet_sizes
        .iter()
        .flat_map(|&f| {
            profiles
                .iter()
                .map(move |&p| sweep_cell_scenario(base, f, p))
        })
        .collect();
    for cell in &cells {
        cell.validate(net)?;
    }
    let tasks: Vec<(usize, u32)> = (0..cells.len())
        .flat_map(|c| (0..base.replications).map(move |i| (c, i)))
        .collect();
    let records: Vec<MetricsRecord> = pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(c, i)| {
                replicate(net, &cells[c], i, None, RunnerOptions::default()).map(|r| r.record)
            })
            .collect::<Result<_, _>>()
    })?;
    let mut chunks = records.chunks(base.replications as usize);
    let cells = cells
        .iter()
        .map(|s| SweepCell {
            fleet_size: s.fleet_size,
            profile: s.profile,
            result: ScenarioResult::from_records(
                chunks.next().expect("one chunk per cell").to_vec(),
            )
            .expect("replications >= 1"),
        })
        .collect();
    Ok(SweepResult { cells })
}
