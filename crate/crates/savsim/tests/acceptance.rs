//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p savsim --test acceptance`.

mod common;

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use savsim::oracle;
use savsim::runner;
use savsim_core::dispatch::{select_next_request, try_insert_shared, DispatchPolicy};
use savsim_core::engine::{
    replication_requests, simulate, RunOptions, Scenario, SimNetwork, SweepResult,
};
use savsim_core::metrics::records_csv;
use savsim_core::netgraph::StopDistanceTable;
use savsim_core::scenario_gen::{generate_network, SyntheticSpec};
use savsim_core::traffic::Behavior;

const FLEETS: [u32; 5] = [2, 4, 6, 8, 10];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn default_setup() -> (SimNetwork, Scenario) {
    let synthetic = generate_network(&SyntheticSpec::default()).expect("default network");
    let scenario = synthetic.scenario(1);
    (
        SimNetwork::new(synthetic.graph).expect("default network validates"),
        scenario,
    )
}

/// The default scenario swept over fleet sizes and all three profiles;
/// shared by criteria 6–8.
fn default_sweep() -> &'static (SweepResult, Duration) {
    static SWEEP: OnceLock<(SweepResult, Duration)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let (net, scenario) = default_setup();
        let start = Instant::now();
        let sweep = runner::run_sweep(&net, &scenario, &FLEETS, &Behavior::ALL, None)
            .expect("default sweep runs");
        (sweep, start.elapsed())
    })
}

fn mean_of(sweep: &SweepResult, fleet: u32, profile: Behavior, metric: &str) -> f64 {
    sweep
        .cell(fleet, profile)
        .expect("cell")
        .result
        .aggregate
        .metric(metric)
        .expect("metric")
        .mean
}

fn routing_oracle() -> Outcome {
    let start = Instant::now();
    let mut pairs = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let graph = common::random_graph(seed);
        if !graph.validate().is_empty() {
            return Err(format!("seed {seed}: generated graph is invalid"));
        }
        let table = StopDistanceTable::build(&graph).map_err(|e| format!("seed {seed}: {e}"))?;
        let report = oracle::check_table(&graph, &table);
        if let Some(m) = report.mismatches.first() {
            return Err(format!(
                "seed {seed}: stop {} -> {}: table {:?} vs oracle {}",
                m.from, m.to, m.table, m.oracle
            ));
        }
        pairs += report.pairs_checked;
        worst = worst.max(report.max_abs_difference);
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(10) {
        return Err(format!("took {elapsed:.1?} (> 10 s)"));
    }
    Ok(format!(
        "100 graphs, {pairs} stop pairs, max |diff| {worst:.2e} m, {elapsed:.2?}"
    ))
}

fn table_cardinality() -> Outcome {
    let mut total = 0;
    for seed in 0..100 {
        let graph = common::random_graph(seed);
        let m = graph.stops().len();
        let table = StopDistanceTable::build(&graph).map_err(|e| e.to_string())?;
        if table.len() != m * (m - 1) {
            return Err(format!("seed {seed}: {} entries for m = {m}", table.len()));
        }
        total += table.len();
    }
    Ok(format!("100 tables, {total} entries, all exactly m(m-1)"))
}

fn dispatcher_rule() -> Outcome {
    let mut overdue_cases = 0;
    for seed in 0..1000 {
        let s = common::random_dispatch_state(10_000 + seed);
        let dist = |stop: u32| s.distances[stop as usize];
        let got = select_next_request(&s.policy, &s.pending, dist, s.now);
        let want = common::brute_select(&s.policy, &s.pending, &dist, s.now);
        if got != want {
            return Err(format!(
                "state {seed}: selected {got:?}, rule gives {want:?}"
            ));
        }
        let has_overdue = s.pending.iter().any(|p| {
            p.state == savsim_core::dispatch::RequestState::Unassigned
                && s.now - p.wait_start > s.policy.overdue_threshold
                && dist(p.request.origin) <= s.policy.priority_radius
        });
        overdue_cases += usize::from(has_overdue);
    }
    Ok(format!(
        "1000 states agree ({overdue_cases} with overdue-in-radius candidates)"
    ))
}

fn sharing_optimality() -> Outcome {
    let (mut accepted, mut rejected) = (0, 0);
    for seed in 0..500 {
        let case = common::random_insertion_case(20_000 + seed);
        let metric = |a: u32, b: u32| case.distance(a, b);
        let (before_shared, best) = common::brute_best_insertion(&case);
        match try_insert_shared(&case.policy, &case.sav, &case.candidate, &metric) {
            Ok(ins) => {
                accepted += 1;
                let best = best.ok_or(format!(
                    "case {seed}: accepted but no feasible insertion exists"
                ))?;
                if (ins.after.shared - best).abs() > 1e-9 {
                    return Err(format!(
                        "case {seed}: shared {} but optimum is {best}",
                        ins.after.shared
                    ));
                }
                if ins.after.distance > case.policy.detour_budget_factor * ins.before.distance {
                    return Err(format!(
                        "case {seed}: accepted insertion breaks the detour budget"
                    ));
                }
            }
            Err(why) => {
                rejected += 1;
                if let Some(best) = best {
                    if best > before_shared + 1e-9 {
                        return Err(format!("case {seed}: rejected ({why:?}) but an insertion reaches {best} > {before_shared}"));
                    }
                }
            }
        }
    }
    Ok(format!(
        "500 instances match exhaustive enumeration ({accepted} accepted, {rejected} rejected)"
    ))
}

fn capacity_and_conservation() -> Outcome {
    let (net, base) = default_setup();
    let mut runs: Vec<(SimNetwork, Scenario, u32)> = Vec::new();
    for fleet in FLEETS {
        for profile in Behavior::ALL {
            for index in 0..2 {
                runs.push((
                    net.clone(),
                    Scenario {
                        fleet_size: fleet,
                        profile,
                        ..base.clone()
                    },
                    index,
                ));
            }
        }
    }
    // smaller, denser networks with tight vehicles
    for seed in 0..40u64 {
        let spec = SyntheticSpec {
            width: 5000.0,
            height: 4000.0,
            grid_spacing: 800.0,
            peripheral_stop_count: 6,
            central_stop_count: 2,
            seed,
        };
        let synthetic = generate_network(&spec).map_err(|e| e.to_string())?;
        let mut scenario = synthetic.scenario(seed);
        scenario.fleet_size = 1 + (seed % 5) as u32;
        scenario.policy = DispatchPolicy {
            capacity: 1 + (seed % 4) as u32,
            ..DispatchPolicy::default()
        };
        scenario.demand.outbound_rate = 40.0;
        scenario.demand.inbound_rate = 25.0;
        scenario.horizon = 3.0 * 3600.0;
        runs.push((
            SimNetwork::new(synthetic.graph).map_err(|e| e.to_string())?,
            scenario,
            0,
        ));
    }
    let events: Result<Vec<u64>, String> = runs
        .par_iter()
        .map(|(net, scenario, index)| {
            let requests =
                replication_requests(net, scenario, *index).map_err(|e| e.to_string())?;
            let outcome = simulate(
                net,
                scenario,
                *index,
                requests,
                RunOptions {
                    audit: true,
                    log: None,
                },
            )
            .map_err(|e| {
                format!(
                    "{} x{} {}: {e}",
                    scenario.label, scenario.fleet_size, scenario.profile
                )
            })?;
            let c = outcome.conservation;
            if c.generated != c.completed + c.onboard + c.assigned + c.unassigned {
                return Err(format!("conservation broken at horizon: {c:?}"));
            }
            Ok(c.events_processed)
        })
        .collect();
    let events = events?;
    Ok(format!(
        "{} audited replications, {} events, 0 capacity or conservation violations",
        events.len(),
        events.iter().sum::<u64>()
    ))
}

fn fleet_saturation() -> Outcome {
    let (sweep, elapsed) = default_sweep();
    let trips: Vec<f64> = FLEETS
        .iter()
        .map(|&f| mean_of(sweep, f, Behavior::Normal, "trips_completed"))
        .collect();
    let summary = FLEETS
        .iter()
        .zip(&trips)
        .map(|(f, t)| format!("{f}:{t:.2}"))
        .collect::<Vec<_>>()
        .join(" ");
    if trips.windows(2).any(|w| w[1] < w[0]) {
        return Err(format!("mean trips not non-decreasing: {summary}"));
    }
    let tail = trips[4] - trips[3];
    let step = (trips[3] - trips[0]) / 3.0;
    if tail >= step {
        return Err(format!(
            "gain 8->10 {tail:.2} >= average step 2->8 {step:.2} ({summary})"
        ));
    }
    if *elapsed > Duration::from_secs(300) {
        return Err(format!("sweep took {elapsed:.1?} (> 5 min)"));
    }
    Ok(format!(
        "mean trips {summary}; gain 8->10 {tail:.2} < step {step:.2}; sweep {elapsed:.1?}"
    ))
}

fn wait_band() -> Outcome {
    let (sweep, _) = default_sweep();
    let waits: Vec<f64> = sweep
        .cells
        .iter()
        .map(|c| c.result.aggregate.metric("avg_wait_min").unwrap().mean)
        .collect();
    let mean = waits.iter().sum::<f64>() / waits.len() as f64;
    let (lo, hi) = waits
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &w| (l.min(w), h.max(w)));
    let detail = format!(
        "mean avg_wait over {} cells {mean:.2} min (cells {lo:.1}..{hi:.1})",
        waits.len()
    );
    if (20.0..=120.0).contains(&mean) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn behavior_ordering() -> Outcome {
    let (sweep, _) = default_sweep();
    let t = |p| mean_of(sweep, 8, p, "trips_completed");
    let (c, n, a) = (
        t(Behavior::Cautious),
        t(Behavior::Normal),
        t(Behavior::Aggressive),
    );
    let detail =
        format!("fleet 8 mean trips: cautious {c:.2} <= normal {n:.2} <= aggressive {a:.2}");
    if c <= n && n <= a {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn savsim(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_savsim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SAVSIM_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "savsim {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    savsim(&["generate", "--out", "gen", "--seed", "5"], root)?;
    let mut compared = 0;
    for (label, jobs) in [("a", "1"), ("b", "4")] {
        savsim(
            &[
                "run",
                "--scenario",
                "gen/scenario.json",
                "--replications",
                "6",
                "--jobs",
                jobs,
                "--out",
                &format!("run_{label}"),
            ],
            root,
        )?;
        savsim(
            &[
                "sweep",
                "--scenario",
                "gen/scenario.json",
                "--replications",
                "3",
                "--fleet-sizes",
                "2,8",
                "--jobs",
                jobs,
                "--out",
                &format!("sweep_{label}"),
            ],
            root,
        )?;
    }
    for file in [
        "run_{}/replications.csv",
        "run_{}/aggregate.csv",
        "sweep_{}/sweep.csv",
        "sweep_{}/sweep_aggregate.csv",
    ] {
        let read =
            |l: &str| std::fs::read(root.join(file.replace("{}", l))).map_err(|e| e.to_string());
        let (a, b) = (read("a")?, read("b")?);
        if a != b {
            return Err(format!("{} differs between runs", file.replace("{}", "*")));
        }
        compared += a.len();
    }
    // library path: sequential and parallel replications render identically
    let (net, scenario) = default_setup();
    let scenario = Scenario {
        replications: 4,
        ..scenario
    };
    let seq = savsim_core::engine::run_scenario(&net, &scenario).map_err(|e| e.to_string())?;
    let par = runner::run_scenario(&net, &scenario, Some(3)).map_err(|e| e.to_string())?;
    if records_csv(&seq.records) != records_csv(&par.records) {
        return Err("sequential and parallel records differ".into());
    }
    Ok(format!("4 CSV files byte-identical across repeated CLI runs ({compared} bytes), sequential == parallel"))
}

fn protocol_defaults() -> Outcome {
    let scenario = Scenario::default();
    let policy = DispatchPolicy::default();
    let graph = generate_network(&SyntheticSpec::default())
        .map_err(|e| e.to_string())?
        .graph;
    let xs: Vec<f64> = graph.vertices().iter().map(|v| v.x).collect();
    let ys: Vec<f64> = graph.vertices().iter().map(|v| v.y).collect();
    let span = |v: &[f64]| {
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let (w, h) = (span(&xs), span(&ys));
    let detail = format!(
        "replications {}, overdue_threshold {} s, bounding box {w} x {h} m",
        scenario.replications, policy.overdue_threshold
    );
    if scenario.replications == 20
        && policy.overdue_threshold == 1200.0
        && w == 14484.0
        && h == 12875.0
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("routing oracle equivalence", routing_oracle),
        ("table cardinality m(m-1)", table_cardinality),
        ("dispatcher rule equivalence", dispatcher_rule),
        ("sharing optimality at small scale", sharing_optimality),
        (
            "capacity and passenger conservation",
            capacity_and_conservation,
        ),
        ("fleet saturation", fleet_saturation),
        ("wait-time band", wait_band),
        ("behavior ordering", behavior_ordering),
        ("determinism", determinism),
        ("protocol defaults", protocol_defaults),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!(
                "PASS  criterion {:>2}: {name} — {detail} [{:.1?}]",
                i + 1,
                start.elapsed()
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "FAIL  criterion {:>2}: {name} — {detail} [{:.1?}]",
                    i + 1,
                    start.elapsed()
                );
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
