use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use cosafe::field_io::{read_field, write_field, FieldMeta};
use cosafe::level_set::zero_level_polylines;
use cosafe::oracle::{dp_control_constrained, dp_safety, dp_state_constrained, INFEASIBLE_THRESHOLD};
use cosafe::performance::PerformanceSolution;
use cosafe::rollout::{compare, MethodRun, RolloutMetrics, Trajectory};
use cosafe::{Benchmark, BenchmarkReport, ExperimentConfig, Fields, Method, ValueField};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "cosafe", about = "Safety/performance value functions and closed-loop benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the rollout seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the grid to N x N nodes.
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the safety value function.
    SolveSafety {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the performance value function under the safe-control constraint.
    SolvePerf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        vs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll one method out from the seeded initial states.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        vs: PathBuf,
        /// Performance field; required for `ours`.
        #[arg(long)]
        v: Option<PathBuf>,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate rollout artifacts; the first one is the reference.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Brute-force dynamic programming on a coarse grid.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Trajectory CSVs and the zero level set of V_s(., 0).
    ExportPlots {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        vs: PathBuf,
        #[arg(long)]
        v: PathBuf,
        /// Methods to roll out; `ours` when omitted.
        #[arg(long = "method")]
        methods: Vec<Method>,
        /// Number of initial states to export.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

/// A rollout artifact as written by `rollout` and read by `compare`.
#[derive(Serialize, Deserialize)]
struct RunArtifact {
    config_hash: String,
    kappa: f64,
    margin: f64,
    grid_nodes: [usize; 2],
    fallback_fraction: f64,
    run: MethodRun,
    metrics: RolloutMetrics,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.rollout.seed = seed;
    }
    if let Some(n) = common.grid {
        cfg.grid.nodes = [n, n];
    }
    Ok(cfg)
}

fn benchmark(common: &Common) -> Result<Benchmark> {
    Ok(Benchmark::new(load_config(common)?)?)
}

fn read_checked(path: &Path, kind: &str, bench: &Benchmark) -> Result<(ValueField, FieldMeta)> {
    let (field, meta) = read_field(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(meta.kind == kind, "{} holds a {} field, expected {kind}", path.display(), meta.kind);
    ensure!(
        meta.config_hash == bench.hash,
        "{} was produced with config {}, current config is {}",
        path.display(),
        meta.config_hash,
        bench.hash
    );
    Ok((field, meta))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_fields(bench: &Benchmark, vs: &Path, v: Option<&Path>) -> Result<Fields> {
    let (vs, vs_meta) = read_checked(vs, "safety", bench)?;
    let performance = match v {
        Some(path) => {
            let (field, meta) = read_checked(path, "performance", bench)?;
            PerformanceSolution {
                field,
                unreliable_nodes: meta.unreliable_nodes.clone(),
                fallback_fraction: 0.0,
            }
        }
        // placeholder for methods that never read the performance field
        None => PerformanceSolution {
            field: vs.clone(),
            unreliable_nodes: Vec::new(),
            fallback_fraction: 0.0,
        },
    };
    let performance_seconds = match v {
        Some(path) => read_field(path)?.1.solve_seconds,
        None => 0.0,
    };
    Ok(Fields {
        vs,
        performance,
        safety_seconds: vs_meta.solve_seconds,
        performance_seconds,
    })
}

fn table(metrics: &RolloutMetrics) -> String {
    let pairwise = !metrics.pairwise.is_empty();
    let mut out = String::new();
    let _ = write!(out, "{:<14} {:>8} {:>10} {:>11} {:>12}", "method", "success", "mean cost", "offline s", "online ms");
    if pairwise {
        let _ = write!(out, " {:>13} {:>13}", "% higher cost", "mean % higher");
    }
    out.push('\n');
    for (m, t) in metrics.methods.iter().zip(&metrics.timing) {
        let mean = if m.per_seed_costs.is_empty() {
            0.0
        } else {
            m.per_seed_costs.iter().sum::<f64>() / m.per_seed_costs.len() as f64
        };
        let _ = write!(
            out,
            "{:<14} {:>7.0}% {:>10.4} {:>11.3} {:>12.4}",
            m.method,
            100.0 * m.success_rate,
            mean,
            t.offline_seconds,
            1e3 * t.online_median_seconds
        );
        if pairwise {
            match metrics.pairwise.iter().find(|p| p.baseline == m.method) {
                Some(p) => {
                    let _ = write!(
                        out,
                        " {:>12.0}% {:>12.2}%",
                        100.0 * p.higher_cost_fraction,
                        p.mean_percent_higher_cost
                    );
                }
                None => {
                    let _ = write!(out, " {:>13} {:>13}", "reference", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn write_trajectory_csv(path: &Path, tr: &Trajectory, bench: &Benchmark, fields: &Fields) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["t", "x1", "x2", "u1", "u2", "l", "V_s", "V"])?;
    for (k, (x, &t)) in tr.states.iter().zip(&tr.times).enumerate() {
        let (u1, u2) = match tr.controls.get(k) {
            Some(u) => (u[0].to_string(), u[1].to_string()),
            None => (String::new(), String::new()),
        };
        let vs = fields.vs.value_at(x, t)?.value;
        let v = fields.performance.field.value_at(x, t)?.value;
        w.write_record([
            t.to_string(),
            x[0].to_string(),
            x[1].to_string(),
            u1,
            u2,
            (bench.spec.constraint)(x).to_string(),
            vs.to_string(),
            v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SolveSafety { common, out } => {
            let bench = benchmark(&common)?;
            let (vs, seconds) = bench.solve_safety()?;
            let mut meta = FieldMeta::describe(&vs, "safety", &bench.hash);
            meta.solve_seconds = seconds;
            write_field(&out, &vs, &meta)?;
            println!("safety field {} ({seconds:.2} s, config {})", out.display(), bench.hash);
        }
        Command::SolvePerf { common, vs, out } => {
            let bench = benchmark(&common)?;
            let (vs, _) = read_checked(&vs, "safety", &bench)?;
            let (sol, seconds) = bench.solve_performance(&vs)?;
            let mut meta = FieldMeta::describe(&sol.field, "performance", &bench.hash);
            meta.unreliable_nodes = sol.unreliable_nodes.clone();
            meta.solve_seconds = seconds;
            write_field(&out, &sol.field, &meta)?;
            println!(
                "performance field {} ({seconds:.2} s, {} unreliable nodes, fallback share {:.3})",
                out.display(),
                sol.unreliable_nodes.len(),
                sol.fallback_fraction
            );
        }
        Command::Rollout {
            common,
            vs,
            v,
            method,
            out,
        } => {
            let bench = benchmark(&common)?;
            if method == Method::Ours && v.is_none() {
                bail!("method ours needs the performance field (--v)");
            }
            let fields = load_fields(&bench, &vs, v.as_deref())?;
            let states = bench.initial_states(&fields.vs)?;
            let outcome = bench.run_method(method, &fields, &states)?;
            let metrics = compare(std::slice::from_ref(&outcome.run))?;
            let artifact = RunArtifact {
                config_hash: bench.hash.clone(),
                kappa: bench.kappa(),
                margin: bench.config.rollout.margin,
                grid_nodes: bench.config.grid.nodes,
                fallback_fraction: outcome.fallback_fraction,
                run: outcome.run,
                metrics,
            };
            write_json(&out, &artifact)?;
            print!("{}", table(&artifact.metrics));
        }
        Command::Compare { runs, out } => {
            let mut artifacts = Vec::with_capacity(runs.len());
            for path in &runs {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let a: RunArtifact =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                artifacts.push(a);
            }
            let first = &artifacts[0];
            for (a, path) in artifacts.iter().zip(&runs) {
                ensure!(
                    a.config_hash == first.config_hash,
                    "{} has config hash {}, {} has {}",
                    path.display(),
                    a.config_hash,
                    runs[0].display(),
                    first.config_hash
                );
            }
            let method_runs: Vec<MethodRun> = artifacts.iter().map(|a| a.run.clone()).collect();
            let report = BenchmarkReport {
                config_hash: first.config_hash.clone(),
                kappa: first.kappa,
                margin: first.margin,
                grid_nodes: first.grid_nodes,
                metrics: compare(&method_runs)?,
                fallback_fractions: artifacts
                    .iter()
                    .map(|a| (a.run.method.clone(), a.fallback_fraction))
                    .collect(),
            };
            write_json(&out, &report)?;
            print!("{}", table(&report.metrics));
        }
        Command::Oracle { common, out } => {
            let mut cfg = load_config(&common)?;
            if common.grid.is_none() {
                let n = *cfg.oracle.coarse_nodes.last().context("oracle.coarse_nodes is empty")?;
                cfg.grid.nodes = [n, n];
            }
            cfg.grid.pad = cfg.oracle.coarse_pad;
            let bench = Benchmark::new(cfg)?;
            fs::create_dir_all(&out)?;
            let start = Instant::now();
            let fields = bench.solve()?;
            let oc = &bench.config.oracle;
            let samples = bench.system.control_set.samples(2, oc.directions);
            let (sys, spec, grid, horizon) = (&bench.system, &bench.spec, &bench.grid, bench.spec.horizon);
            let vs_dp = dp_safety(sys, |x| (spec.constraint)(x), grid, horizon, oc.dt, &samples)?;
            let v1 = dp_state_constrained(sys, spec, grid, horizon, oc.dt, &samples)?;
            let v = dp_control_constrained(sys, spec, &fields.vs, grid, horizon, oc.dt, &samples)?;
            for (name, field) in [("dp_safety", &vs_dp), ("dp_state_constrained", &v1), ("dp_control_constrained", &v)] {
                write_field(&out.join(format!("{name}.bin")), field, &FieldMeta::describe(field, name, &bench.hash))?;
            }
            let h = grid.max_spacing();
            let mask: Vec<bool> = (0..grid.len())
                .map(|k| vs_dp.first()[k] >= 2.0 * h && v1.first()[k] < INFEASIBLE_THRESHOLD)
                .collect();
            let gap = |a: &[f64], b: &[f64]| {
                a.iter()
                    .zip(b)
                    .zip(&mask)
                    .filter(|(_, &k)| k)
                    .map(|((x, y), _)| (x - y).abs())
                    .fold(0.0, f64::max)
            };
            let summary = serde_json::json!({
                "config_hash": bench.hash,
                "grid_nodes": bench.config.grid.nodes,
                "h": h,
                "masked_nodes": mask.iter().filter(|&&k| k).count(),
                "state_vs_control_constrained": gap(v1.first(), v.first()),
                "safety_solver_vs_dp": gap(fields.vs.first(), vs_dp.first()),
                "performance_solver_vs_dp": gap(fields.performance.field.first(), v.first()),
                "seconds": start.elapsed().as_secs_f64(),
            });
            write_json(&out.join("oracle_summary.json"), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::ExportPlots {
            common,
            vs,
            v,
            methods,
            count,
            out,
        } => {
            let bench = benchmark(&common)?;
            let fields = load_fields(&bench, &vs, Some(&v))?;
            fs::create_dir_all(&out)?;
            let mut states = bench.initial_states(&fields.vs)?;
            states.truncate(count);
            let methods = if methods.is_empty() { vec![Method::Ours] } else { methods };
            for m in methods {
                let outcome = bench.run_method(m, &fields, &states)?;
                for (i, tr) in outcome.trajectories.iter().enumerate() {
                    write_trajectory_csv(&out.join(format!("{m}_{i:03}.csv")), tr, &bench, &fields)?;
                }
            }
            let mut w = csv::Writer::from_path(out.join("zero_level.csv"))?;
            w.write_record(["polyline", "x1", "x2"])?;
            for (i, line) in zero_level_polylines(fields.vs.grid(), fields.vs.first())?.iter().enumerate() {
                for p in line {
                    w.write_record([i.to_string(), p[0].to_string(), p[1].to_string()])?;
                }
            }
            w.flush()?;
            println!("exported {} initial states to {}", states.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
