use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amod_cli::config::RunConfig;
use amod_cli::gen::{write_grid_city, GridSpec};
use amod_cli::load::load_instance;
use amod_cli::run::{run_solve, write_geojson, write_outputs};
use amod_cli::solution::SolutionFile;
use amod_cli::sweep::{run_left_turn_sweep, run_regime_sweep, to_csv};
use amod_cli::validate::validate_solution;
use amod_core::colgen::run_column_generation;
use amod_core::oracle::{exhaustive_milp, max_reduced_cost, solve_full_lp};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "amod", version, about = "AMoD network design by column generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and write solution, GeoJSON and iteration log.
    Solve {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check a solution file against its instance.
    Validate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Compare column generation with brute-force references on a small instance.
    OracleCheck {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = amod_core::oracle::DEFAULT_GUARD)]
        guard: usize,
    },
    /// Sweep fleet-time/budget levels or left-turn budgets.
    Sensitivity {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = SweepMode::Regime)]
        mode: SweepMode,
    },
    /// Write GeoJSON for an existing solution file.
    ExportGeojson {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Generate a seeded grid-city instance.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 24)]
        demands: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepMode {
    Regime,
    LeftTurn,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    demand: Option<PathBuf>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    fleet_time: Option<f64>,
    #[arg(long)]
    detour_factor: Option<f64>,
    #[arg(long)]
    time_limits: Option<PathBuf>,
    /// `inf` disables the left-turn row.
    #[arg(long)]
    left_turn_budget: Option<f64>,
    #[arg(long)]
    robust_time_fraction: Option<f64>,
    #[arg(long)]
    robust_demand_fraction: Option<f64>,
    #[arg(long)]
    columns_per_od: Option<usize>,
    #[arg(long)]
    serial_pricing: bool,
    #[arg(long)]
    mip_gap: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let cwd = Path::new(".");
        let path = |p: &PathBuf| if p.is_relative() { cwd.join(p) } else { p.clone() };
        if let Some(p) = &self.nodes {
            cfg.nodes = path(p);
        }
        if let Some(p) = &self.edges {
            cfg.edges = path(p);
        }
        if let Some(p) = &self.demand {
            cfg.demand = path(p);
        }
        if let Some(p) = &self.time_limits {
            cfg.time_limits = Some(path(p));
        }
        if let Some(p) = &self.out {
            cfg.output_dir = path(p);
        }
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.fleet_time {
            cfg.fleet_time = v;
        }
        if let Some(v) = self.detour_factor {
            cfg.detour_factor = v;
        }
        if let Some(v) = self.left_turn_budget {
            cfg.left_turn_budget = Some(v);
        }
        if let Some(v) = self.robust_time_fraction {
            cfg.robust.time_fraction = v;
        }
        if let Some(v) = self.robust_demand_fraction {
            cfg.robust.demand_fraction = v;
        }
        if let Some(v) = self.columns_per_od {
            cfg.colgen.columns_per_od = v;
        }
        if self.serial_pricing {
            cfg.colgen.parallel_pricing = false;
        }
        if let Some(v) = self.mip_gap {
            cfg.mip.rel_gap_target = v;
        }
        cfg.check()?;
        Ok(cfg)
    }
}

fn print_json(v: &serde_json::Value) {
    // a closed pipe is not an error worth panicking over
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("json"));
}

fn read_solution(path: &Path) -> Result<SolutionFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve { run } => {
            let cfg = run.config()?;
            let out = run_solve(&cfg)?;
            write_outputs(&out, &cfg.output_dir)?;
            let s = &out.solution;
            print_json(&json!({
                "status": s.status,
                "j_lp": s.j_lp,
                "j_ip": s.j_ip,
                "gap": s.gap,
                "iterations": s.iterations,
                "instrumented_edges": s.instrumented_edges.len(),
                "output_dir": cfg.output_dir,
                "warnings": out.loaded.warnings,
            }));
            Ok(if out.succeeded() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Validate { run, solution } => {
            let cfg = run.config()?;
            let loaded = load_instance(&cfg)?;
            let inst = loaded.effective()?;
            let report = validate_solution(&loaded, &inst, &read_solution(&solution)?);
            print_json(&serde_json::to_value(&report)?);
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::OracleCheck { run, guard } => {
            let cfg = run.config()?;
            let loaded = load_instance(&cfg)?;
            let inst = loaded.effective()?;
            let res = run_column_generation(&inst, &cfg.cg_params())?;
            let full = solve_full_lp(&inst, guard)?;
            let rel = (res.j_lp - full.objective).abs() / full.objective.abs().max(1.0);
            let mut max_rc = f64::NEG_INFINITY;
            for k in (0..inst.demands.len()).filter(|k| !res.dropped.contains(k)) {
                max_rc = max_rc.max(max_reduced_cost(&inst, &res.duals, k, guard)?);
            }
            let exhaustive = if inst.network.edge_count() <= 10 {
                Some(exhaustive_milp(&inst, &res.columns, 10)?)
            } else {
                None
            };
            let milp_ok = exhaustive.is_none_or(|v| (v - res.j_ip).abs() <= 1e-6 * v.abs().max(1.0));
            let passed = rel <= 1e-6 && max_rc <= cfg.colgen.epsilon && res.j_ip <= res.j_lp + 1e-9 && milp_ok;
            print_json(&json!({
                "j_lp": res.j_lp,
                "j_lp_full_enumeration": full.objective,
                "relative_difference": rel,
                "max_reduced_cost": max_rc,
                "j_ip": res.j_ip,
                "j_ip_exhaustive": exhaustive,
                "gap": res.gap,
                "passed": passed,
            }));
            Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Sensitivity { run, mode } => {
            let cfg = run.config()?;
            let loaded = load_instance(&cfg)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let (name, csv, failed) = match mode {
                SweepMode::Regime => {
                    let s = run_regime_sweep(&cfg, &loaded)?;
                    let failed = s.rows.iter().filter(|r| r.profit.is_none()).count();
                    ("sensitivity.csv", to_csv(&s.rows)?, failed)
                }
                SweepMode::LeftTurn => {
                    let s = run_left_turn_sweep(&cfg, &loaded)?;
                    let failed = s.rows.iter().filter(|r| r.profit.is_none()).count();
                    ("left_turns.csv", to_csv(&s.rows)?, failed)
                }
            };
            let path = cfg.output_dir.join(name);
            std::fs::write(&path, csv)?;
            print_json(&json!({ "output": path, "failed_cells": failed }));
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportGeojson { run, solution } => {
            let cfg = run.config()?;
            let loaded = load_instance(&cfg)?;
            write_geojson(&loaded, &read_solution(&solution)?, &cfg.output_dir)?;
            print_json(&json!({ "output_dir": cfg.output_dir }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen { out, size, demands, seed } => {
            if size < 3 {
                bail!("grid size must be at least 3");
            }
            let spec = GridSpec {
                size,
                demands,
                seed,
                ..GridSpec::default()
            };
            write_grid_city(&spec, &out)?;
            print_json(&json!({ "output_dir": out, "config": out.join("config.toml") }));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            print_json(&json!({
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            }));
            ExitCode::FAILURE
        }
    }
}
