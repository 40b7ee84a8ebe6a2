//! Run configuration: TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use amod_core::colgen::CgParams;
use amod_core::mip::MipParams;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub demand: PathBuf,
    /// Instrumentation budget B.
    pub budget: f64,
    /// Fleet-time budget R, vehicle-seconds.
    pub fleet_time: f64,
    pub detour_factor: f64,
    /// CSV `origin,dest,max_time_s`; overrides the detour factor.
    pub time_limits: Option<PathBuf>,
    /// `inf` or absent means no left-turn row.
    pub left_turn_budget: Option<f64>,
    /// Left turns are headings changes in `(lo, hi]` degrees.
    pub left_turn_band: [f64; 2],
    /// Used for edges without an explicit `beta`.
    pub fare_per_meter: f64,
    pub cost_per_meter: f64,
    pub robust: RobustSpec,
    pub colgen: ColgenConfig,
    pub mip: MipConfig,
    pub sensitivity: SweepConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nodes: "nodes.csv".into(),
            edges: "edges.csv".into(),
            demand: "demand.csv".into(),
            budget: 0.0,
            fleet_time: 0.0,
            detour_factor: amod_core::master::DEFAULT_DETOUR,
            time_limits: None,
            left_turn_budget: None,
            left_turn_band: [30.0, 150.0],
            fare_per_meter: 0.0,
            cost_per_meter: 0.0,
            robust: RobustSpec::default(),
            colgen: ColgenConfig::default(),
            mip: MipConfig::default(),
            sensitivity: SweepConfig::default(),
            output_dir: "out".into(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustSpec {
    /// Time radius as a fraction of each nominal edge time.
    pub time_fraction: f64,
    /// Demand radius as a fraction of each nominal demand.
    pub demand_fraction: f64,
    /// CSV `edge,radius_s` (edge = row index in edges.csv); replaces `time_fraction`.
    pub time_radius_file: Option<PathBuf>,
    /// CSV `origin,dest,radius`; replaces `demand_fraction`.
    pub demand_radius_file: Option<PathBuf>,
}

impl RobustSpec {
    pub fn is_nominal(&self) -> bool {
        self.time_fraction == 0.0
            && self.demand_fraction == 0.0
            && self.time_radius_file.is_none()
            && self.demand_radius_file.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColgenConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub columns_per_od: usize,
    pub parallel_pricing: bool,
}

impl Default for ColgenConfig {
    fn default() -> Self {
        let p = CgParams::default();
        Self {
            epsilon: p.epsilon,
            max_iterations: p.max_iterations,
            columns_per_od: p.columns_per_od,
            parallel_pricing: p.parallel_pricing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MipConfig {
    pub rel_gap_target: f64,
    pub node_limit: Option<usize>,
    pub time_limit_s: Option<f64>,
    pub integrality_tol: f64,
}

impl Default for MipConfig {
    fn default() -> Self {
        let p = MipParams::default();
        Self {
            rel_gap_target: p.rel_gap_target,
            node_limit: Some(20_000),
            time_limit_s: None,
            integrality_tol: p.integrality_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Multiples of the unconstrained fleet-time usage.
    pub fleet_fractions: Vec<f64>,
    /// Multiples of the unconstrained budget usage.
    pub budget_fractions: Vec<f64>,
    /// Multiples of the left-turn scale; infinity is always appended.
    pub left_turn_multipliers: Vec<f64>,
    pub rel_gap_target: f64,
    /// Branch-and-bound nodes per cell.
    pub node_limit: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fleet_fractions: vec![0.1, 0.3, 0.6, 1.0, 1.5],
            budget_fractions: vec![0.1, 0.3, 0.6, 1.0, 1.5],
            left_turn_multipliers: vec![0.0, 1.0, 2.0, 5.0, 10.0],
            rel_gap_target: MipParams::default().rel_gap_target,
            node_limit: Some(2000),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.nodes);
        fix(&mut self.edges);
        fix(&mut self.demand);
        fix(&mut self.output_dir);
        for p in [
            &mut self.time_limits,
            &mut self.robust.time_radius_file,
            &mut self.robust.demand_radius_file,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [("budget", self.budget), ("fleet_time", self.fleet_time)] {
            if !(v.is_finite() && v >= 0.0) {
                bail!("{name} must be finite and nonnegative, got {v}");
            }
        }
        if !(self.detour_factor >= 1.0 && self.detour_factor.is_finite()) {
            bail!("detour_factor must be >= 1, got {}", self.detour_factor);
        }
        if let Some(lt) = self.left_turn_budget {
            if lt.is_nan() || lt < 0.0 {
                bail!("left_turn_budget must be nonnegative, got {lt}");
            }
        }
        let [lo, hi] = self.left_turn_band;
        if !(0.0 <= lo && lo < hi && hi <= 180.0) {
            bail!("left_turn_band must satisfy 0 <= lo < hi <= 180, got [{lo}, {hi}]");
        }
        if self.robust.time_fraction < 0.0 || self.robust.demand_fraction < 0.0 {
            bail!("robust fractions must be nonnegative");
        }
        if !(self.colgen.epsilon > 0.0) || self.colgen.columns_per_od == 0 {
            bail!("colgen epsilon must be positive and columns_per_od at least 1");
        }
        if !(self.mip.integrality_tol > 0.0 && self.mip.integrality_tol < 0.5) || self.mip.rel_gap_target < 0.0 {
            bail!("invalid mip tolerances");
        }
        for p in [&self.nodes, &self.edges, &self.demand] {
            if !p.exists() {
                bail!("input file {} does not exist", p.display());
            }
        }
        Ok(())
    }

    /// Left-turn budget with `inf` meaning none.
    pub fn effective_left_turn_budget(&self) -> Option<f64> {
        self.left_turn_budget.filter(|lt| lt.is_finite())
    }

    pub fn cg_params(&self) -> CgParams {
        CgParams {
            epsilon: self.colgen.epsilon,
            max_iterations: self.colgen.max_iterations,
            columns_per_od: self.colgen.columns_per_od,
            parallel_pricing: self.colgen.parallel_pricing,
            mip: self.mip_params(),
        }
    }

    pub fn mip_params(&self) -> MipParams {
        MipParams {
            rel_gap_target: self.mip.rel_gap_target,
            node_limit: self.mip.node_limit,
            time_limit: self.mip.time_limit_s.map(std::time::Duration::from_secs_f64),
            integrality_tol: self.mip.integrality_tol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_toml_with_defaults() {
        let cfg: RunConfig = toml::from_str(
            "budget = 10.0\nfleet_time = 500.0\nleft_turn_budget = inf\n[colgen]\ncolumns_per_od = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.budget, 10.0);
        assert_eq!(cfg.colgen.columns_per_od, 2);
        assert_eq!(cfg.colgen.epsilon, 1e-6);
        assert_eq!(cfg.effective_left_turn_budget(), None);
        assert_eq!(cfg.left_turn_band, [30.0, 150.0]);
        assert!(toml::from_str::<RunConfig>("budgett = 1.0").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig {
            budget: 3.5,
            left_turn_budget: Some(4.0),
            ..RunConfig::default()
        };
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
