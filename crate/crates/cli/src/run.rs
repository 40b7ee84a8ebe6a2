//! End-to-end solve and output writing.

use std::path::Path;
use std::time::Instant;

use amod_core::colgen::{run_column_generation, CgResult};
use amod_core::master::Instance;
use amod_core::mip::MipStatus;
use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::geojson;
use crate::load::{load_instance, LoadedInstance};
use crate::solution::SolutionFile;

pub struct SolveOutput {
    pub loaded: LoadedInstance,
    /// Instance handed to the solver.
    pub instance: Instance,
    pub result: CgResult,
    pub solution: SolutionFile,
    pub timings: Timings,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub load_s: f64,
    pub solve_s: f64,
}

impl SolveOutput {
    pub fn succeeded(&self) -> bool {
        matches!(self.solution.status, MipStatus::Optimal | MipStatus::GapLimit)
    }
}

pub fn solve_loaded(cfg: &RunConfig, loaded: LoadedInstance, load_s: f64) -> Result<SolveOutput> {
    let instance = loaded.effective()?;
    let start = Instant::now();
    let result = run_column_generation(&instance, &cfg.cg_params())?;
    let solve_s = start.elapsed().as_secs_f64();
    let solution = SolutionFile::build(cfg, &loaded, &instance, &result);
    Ok(SolveOutput {
        loaded,
        instance,
        result,
        solution,
        timings: Timings { load_s, solve_s },
    })
}

pub fn run_solve(cfg: &RunConfig) -> Result<SolveOutput> {
    cfg.check()?;
    let start = Instant::now();
    let loaded = load_instance(cfg)?;
    solve_loaded(cfg, loaded, start.elapsed().as_secs_f64())
}

pub fn write_outputs(out: &SolveOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };
    write("solution.json", out.solution.to_json())?;
    write("iterations.csv", out.solution.iterations_csv())?;
    write_geojson(&out.loaded, &out.solution, dir)?;
    write("timings.json", serde_json::to_string_pretty(&out.timings)? + "\n")?;
    Ok(())
}

pub fn write_geojson(loaded: &LoadedInstance, sol: &SolutionFile, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("subnetwork.geojson"), geojson::to_string(&geojson::subnetwork(loaded, sol)))?;
    std::fs::write(dir.join("flows.geojson"), geojson::to_string(&geojson::flows(loaded, sol)))?;
    Ok(())
}
