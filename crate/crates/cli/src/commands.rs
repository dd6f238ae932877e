use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::{Context, Result};
use edp_core::central::{solve_dual_bisection, verify_kkt};
use edp_core::distsim::{
    detect_divergence, detect_divergence_between, numerical_instability, run, DivergenceOptions, DivergenceReport,
    Instability, Trace,
};
use edp_core::model::{feasibility_margin, validate_assumptions, DEFAULT_SAMPLES};
use edp_core::scenario::{parse_instance, parse_scenario, Scenario};
use edp_core::Error;
use log::info;

pub const EXIT_INVALID: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;

pub fn exit_code_for(e: &anyhow::Error) -> ExitCode {
    match e.downcast_ref::<Error>() {
        Some(Error::Infeasible { .. }) => ExitCode::from(EXIT_INFEASIBLE),
        _ => ExitCode::from(EXIT_INVALID),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = read(path)?;
    parse_scenario(&text).map_err(|e| anyhow::Error::new(e).context(path.display().to_string()))
}

pub fn check(path: &Path) -> Result<ExitCode> {
    let text = read(path)?;
    let fleet = parse_instance(&text).map_err(|e| anyhow::Error::new(e).context(path.display().to_string()))?;
    let report = validate_assumptions(fleet.nodes(), DEFAULT_SAMPLES)?;
    println!("nodes: {}", fleet.len());
    println!("assumptions: {}", if report.passed() { "pass" } else { "FAIL" });
    let margin = feasibility_margin(&fleet);
    println!("total demand: {}", fleet.total_demand());
    println!("lower slack: {}", margin.lower_slack);
    println!("upper slack: {}", margin.upper_slack);
    if margin.is_feasible() {
        println!("feasible");
        Ok(ExitCode::SUCCESS)
    } else {
        let side = if margin.upper_slack < 0.0 {
            "demand exceeds the largest deliverable supply"
        } else {
            "smallest possible supply exceeds demand"
        };
        println!("infeasible: {side}");
        Ok(ExitCode::from(EXIT_INFEASIBLE))
    }
}

pub fn solve(path: &Path, tol: f64, kkt_tol: f64) -> Result<ExitCode> {
    let text = read(path)?;
    let fleet = parse_instance(&text).map_err(|e| anyhow::Error::new(e).context(path.display().to_string()))?;
    let sol = solve_dual_bisection(&fleet, tol)?;
    println!("lambda*: {}", sol.lambda_star);
    println!("node,x");
    for (n, x) in fleet.nodes().iter().zip(&sol.x_star) {
        println!("{},{}", n.id, x);
    }
    println!("total cost: {}", sol.cost);
    println!("mismatch: {}", sol.mismatch);
    let kkt = verify_kkt(&fleet, &sol.x_star, sol.lambda_star, kkt_tol);
    let flag = |ok: bool| if ok { "pass" } else { "FAIL" };
    println!("kkt (tol {kkt_tol}):");
    println!("  box feasibility: {}", flag(kkt.box_feasible));
    println!("  dual feasibility: {}", flag(kkt.dual_feasible));
    println!(
        "  relaxed constraint: {} ({})",
        flag(kkt.relaxed_constraint),
        kkt.constraint_value
    );
    println!("  complementary slackness: {}", flag(kkt.complementary_slackness));
    println!(
        "  lagrangian minimizer: {} (gap {})",
        flag(kkt.lagrangian_minimizer),
        kkt.max_minimizer_gap
    );
    Ok(ExitCode::SUCCESS)
}

fn describe(report: &Result<DivergenceReport, Error>) -> String {
    match report {
        Ok(r) => match r.analytic_rate {
            Some(d0) => format!("{} (slope {}, analytic rate {d0})", r.classification, r.slope),
            None => format!("{} (slope {}, feasible)", r.classification, r.slope),
        },
        Err(e) => format!("n/a ({e})"),
    }
}

fn print_summary(scenario: &Scenario, trace: &Trace) {
    let last = trace.last().expect("a run records its first instant");
    println!("final time: {}", last.t);
    println!("final mismatch: {}", last.mismatch);
    println!("final disagreement: {}", last.disagreement);
    match numerical_instability(trace) {
        Some(Instability::NonFinite { t }) => println!("numerical divergence: non-finite values at t={t}"),
        Some(Instability::DisagreementGrowth { from, to }) => {
            println!("numerical divergence: disagreement grew from {from} to {to} over the second half")
        }
        None => println!("numerical divergence: none detected"),
    }
    let segments = trace.segments();
    if segments.len() > 1 {
        for (i, seg) in segments.iter().enumerate() {
            let end = if i + 1 == segments.len() {
                f64::INFINITY
            } else {
                seg.end
            };
            let r = detect_divergence_between(trace, seg.start, end, DivergenceOptions::default());
            println!("segment {} [{}, {}]: {}", i + 1, seg.start, seg.end, describe(&r));
        }
    }
    println!(
        "classification: {}",
        describe(&detect_divergence(trace, DivergenceOptions::default()))
    );
    let fleet = trace.final_fleet();
    if feasibility_margin(fleet).is_feasible() {
        match solve_dual_bisection(fleet, 1e-12) {
            Ok(sol) => println!(
                "|mean lambda - lambda*|: {} (lambda* {})",
                (last.mean_lambda() - sol.lambda_star).abs(),
                sol.lambda_star
            ),
            Err(e) => println!("lambda*: n/a ({e})"),
        }
    } else {
        println!("lambda*: n/a (final instance infeasible)");
    }
    if scenario.config.is_asynchronous() {
        println!(
            "engine: asynchronous ({} per-node sampling overrides)",
            scenario.config.per_node_sampling.len()
        );
    }
}

pub fn simulate(
    path: &Path,
    out: Option<&Path>,
    summary: bool,
    gain: Option<f64>,
    sampling: Option<f64>,
) -> Result<ExitCode> {
    let mut scenario = load_scenario(path)?;
    if let Some(k) = gain {
        scenario.config.gain = k;
    }
    if let Some(t) = sampling {
        scenario.config.sampling = t;
    }
    info!("simulating {} for {} s", path.display(), scenario.config.horizon);
    let trace = run(&scenario.fleet, &scenario.topology, &scenario.config, &scenario.events)?;
    if let Some(out) = out {
        let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
        trace.write_csv(BufWriter::new(file))?;
        info!("wrote {} rows to {}", trace.row_count(), out.display());
    }
    if summary {
        print_summary(&scenario, &trace);
    }
    Ok(ExitCode::SUCCESS)
}

struct SweepRow {
    gain: f64,
    sampling: f64,
    outcome: Result<String, Error>,
}

fn sweep_one(scenario: &Scenario, gain: f64, sampling: f64) -> Result<String, Error> {
    let mut config = scenario.config.clone();
    config.gain = gain;
    config.sampling = sampling;
    // only the final state and the divergence window are reported
    config.max_rows = 200_000;
    let trace = run(&scenario.fleet, &scenario.topology, &config, &scenario.events)?;
    let last = trace.last().expect("a run records its first instant");
    let class = match detect_divergence(&trace, DivergenceOptions::default()) {
        Ok(r) => r.classification.to_string(),
        Err(_) => "n/a".into(),
    };
    let unstable = match numerical_instability(&trace) {
        Some(Instability::NonFinite { .. }) => "non_finite",
        Some(Instability::DisagreementGrowth { .. }) => "growth",
        None => "none",
    };
    Ok(format!(
        "{},{},{},{class},{unstable}",
        last.t, last.mismatch, last.disagreement
    ))
}

pub fn sweep(path: &Path, gains: &[f64], samplings: &[f64], jobs: Option<usize>) -> Result<ExitCode> {
    let scenario = load_scenario(path)?;
    let samplings = if samplings.is_empty() {
        vec![scenario.config.sampling]
    } else {
        samplings.to_vec()
    };
    let grid: Vec<(f64, f64)> = gains
        .iter()
        .flat_map(|&k| samplings.iter().map(move |&t| (k, t)))
        .collect();
    let workers = jobs
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, grid.len().max(1));

    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new((0..grid.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(gain, sampling)) = grid.get(i) else { break };
                let outcome = sweep_one(&scenario, gain, sampling);
                rows.lock().expect("no worker panics while holding the lock")[i] = Some(SweepRow {
                    gain,
                    sampling,
                    outcome,
                });
            });
        }
    });

    println!("k,T,final_t,mismatch,disagreement,classification,instability");
    let mut failed = false;
    for row in rows.into_inner().expect("workers joined").into_iter().flatten() {
        match row.outcome {
            Ok(line) => println!("{},{},{line}", row.gain, row.sampling),
            Err(e) => {
                failed = true;
                eprintln!("k={} T={}: {e}", row.gain, row.sampling);
            }
        }
    }
    Ok(if failed {
        ExitCode::from(EXIT_INVALID)
    } else {
        ExitCode::SUCCESS
    })
}
