//! Run configuration: one JSON document per run.
//!
//! Only `model`, `n`, `seed` and `horizon` are required; every other section
//! falls back to the defaults below. Unknown keys are rejected so that typos
//! surface as configuration errors instead of silently using defaults.

use std::f64::consts::LN_2;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stochrank_core::{InitialProfile, JumpRateLaw, LimitField, Stratum};

use crate::error::{AppError, AppResult};
use crate::verify::TestFunction;

/// Largest system the O(N)-per-event reference simulator accepts.
pub const NAIVE_MAX_N: usize = 2000;

/// A jump-rate law as written in the config file.
///
/// `{"atoms": [[w, p], ...]}`, `{"gamma": {"alpha": a, "beta": b}}` or
/// `{"mixture": [[weight, law], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Atoms(Vec<(f64, f64)>),
    Gamma { alpha: f64, beta: f64 },
    Mixture(Vec<(f64, LawSpec)>),
}

impl LawSpec {
    pub fn build(&self) -> stochrank_core::Result<JumpRateLaw> {
        match self {
            Self::Atoms(pairs) => JumpRateLaw::atoms(pairs),
            Self::Gamma { alpha, beta } => JumpRateLaw::gamma(*alpha, *beta),
            Self::Mixture(parts) => {
                let built = parts
                    .iter()
                    .map(|(w, law)| Ok((*w, law.build()?)))
                    .collect::<stochrank_core::Result<Vec<_>>>()?;
                JumpRateLaw::mixture(&built)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumSpec {
    pub start: f64,
    pub end: f64,
    pub law: LawSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub strata: Vec<StratumSpec>,
    /// Declared marginal; checked against the y-average of the strata.
    #[serde(default)]
    pub marginal: Option<LawSpec>,
}

impl ModelSpec {
    pub fn profile(&self) -> stochrank_core::Result<InitialProfile> {
        let strata = self
            .strata
            .iter()
            .map(|s| Ok(Stratum::new(s.start, s.end, s.law.build()?)))
            .collect::<stochrank_core::Result<Vec<_>>>()?;
        match &self.marginal {
            Some(declared) => InitialProfile::with_marginal(strata, &declared.build()?),
            None => InitialProfile::new(strata),
        }
    }
}

/// Observation grid shared by `limit`, `verify` and `convergence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub times: Vec<f64>,
    pub ys: Vec<f64>,
    /// Grid points closer than this to `y_C(t)` are left out of statistic sups.
    pub exclusion: f64,
    pub flow_ys: Vec<f64>,
    pub flow_times: Vec<f64>,
    /// Add a row at `y = y_C(t)` for each grid time in the field table.
    pub include_boundary: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            times: vec![0.25, LN_2, 1.0, 2.0],
            ys: (1..=9).map(|k| f64::from(k) / 10.0).collect(),
            exclusion: 0.05,
            flow_ys: vec![0.3, 0.7],
            flow_times: vec![0.5, 1.0],
            include_boundary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSpec {
    /// Number of equally spaced times on `[0, horizon]` in the curve table.
    pub curve_points: usize,
    pub root_tolerance: f64,
    pub quadrature_nodes: usize,
}

impl Default for LimitSpec {
    fn default() -> Self {
        Self { curve_points: 101, root_tolerance: 1e-12, quadrature_nodes: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub oracle_n: usize,
    pub oracle_horizon: f64,
    pub oracle_seeds: u64,
    pub oracle_checkpoints: usize,

    pub conditional_n: usize,
    pub conditional_replicas: u64,
    /// Tracked particles, given by initial scaled position.
    pub conditional_positions: Vec<f64>,
    pub conditional_times: Vec<f64>,
    pub z_threshold: f64,
    pub max_excursions: usize,

    pub renewal_particles: usize,
    pub renewal_gaps: usize,
    /// Significance level of the pooled KS test; per-particle tests use a
    /// Bonferroni split of it.
    pub ks_level: f64,

    pub round_trip_tolerance: f64,
    pub mass_tolerance: f64,
    pub marginal_tolerance: f64,
    pub marginal_panels: usize,
    pub derivative_tolerance: f64,

    pub pde_step: f64,
    pub pde_tolerance: f64,
    pub pde_ratio: (f64, f64),
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            oracle_n: 200,
            oracle_horizon: 5.0,
            oracle_seeds: 10,
            oracle_checkpoints: 50,
            conditional_n: 100,
            conditional_replicas: 10_000,
            conditional_positions: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            conditional_times: vec![0.25, 0.5, 1.0, 1.5],
            z_threshold: 3.0,
            max_excursions: 2,
            renewal_particles: 10,
            renewal_gaps: 10_000,
            ks_level: 0.01,
            round_trip_tolerance: 1e-10,
            mass_tolerance: 1e-12,
            marginal_tolerance: 1e-4,
            marginal_panels: 10_000,
            derivative_tolerance: 1e-6,
            pde_step: 1e-3,
            pde_tolerance: 1e-4,
            pde_ratio: (3.0, 5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub ns: Vec<usize>,
    pub replicas: u64,
    pub boundary_coefficient: f64,
    pub statistic_coefficient: f64,
    pub flow_coefficient: f64,
    pub slope_band: (f64, f64),
    /// Test functions for the statistic observable: "1", "w", "exp(-w)".
    pub statistics: Vec<TestFunction>,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            ns: vec![1_000, 10_000, 100_000],
            replicas: 20,
            boundary_coefficient: 1.5,
            statistic_coefficient: 5.0,
            flow_coefficient: 5.0,
            slope_band: (-0.65, -0.35),
            statistics: TestFunction::ALL.to_vec(),
        }
    }
}

/// Forced initial arrangement and jump list for tiny deterministic runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Particle ids (1-based) listed from rank 1 down.
    pub initial_arrangement: Vec<usize>,
    /// `[time, particle id]` pairs.
    pub events: Vec<(f64, usize)>,
    /// Per-particle rates; all 1 when absent.
    #[serde(default)]
    pub rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub seed: u64,
    pub horizon: f64,
    /// Snapshot times; just the horizon when empty.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub limit: LimitSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A validated configuration together with the profile it describes.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub profile: InitialProfile,
}

impl Run {
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> AppResult<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        Self::new(config)
    }

    pub fn new(config: RunConfig) -> AppResult<Self> {
        let profile = config.model.profile().map_err(|e| AppError::Config(format!("model: {e}")))?;
        config.validate()?;
        Ok(Self { config, profile })
    }

    pub fn field(&self) -> LimitField {
        LimitField::new(self.profile.clone())
            .with_root_tolerance(self.config.limit.root_tolerance)
            .with_quadrature_nodes(self.config.limit.quadrature_nodes)
    }

    pub fn checkpoints(&self) -> Vec<f64> {
        if self.config.checkpoints.is_empty() {
            vec![self.config.horizon]
        } else {
            self.config.checkpoints.clone()
        }
    }
}

fn invalid(msg: impl Into<String>) -> AppError {
    AppError::Config(msg.into())
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> AppResult<()> {
    if cond {
        Ok(())
    } else {
        Err(invalid(msg()))
    }
}

fn nonnegative_times(name: &str, values: &[f64]) -> AppResult<()> {
    check(values.iter().all(|t| t.is_finite() && *t >= 0.0), || format!("{name}: times must be finite and >= 0"))
}

fn unit_positions(name: &str, values: &[f64], closed_left: bool) -> AppResult<()> {
    let ok = values.iter().all(|&y| if closed_left { (0.0..1.0).contains(&y) } else { y > 0.0 && y < 1.0 });
    check(ok, || format!("{name}: positions must lie in {}0, 1)", if closed_left { "[" } else { "(" }))
}

fn positive(name: &str, value: f64) -> AppResult<()> {
    check(value.is_finite() && value > 0.0, || format!("{name} must be positive, got {value}"))
}

fn nonnegative(name: &str, value: f64) -> AppResult<()> {
    check(value.is_finite() && value >= 0.0, || format!("{name} must be >= 0, got {value}"))
}

fn band(name: &str, (lo, hi): (f64, f64)) -> AppResult<()> {
    check(lo.is_finite() && hi.is_finite() && lo <= hi, || format!("{name}: empty band [{lo}, {hi}]"))
}

impl RunConfig {
    pub fn validate(&self) -> AppResult<()> {
        check(self.n >= 1, || "n must be at least 1".into())?;
        check(self.n <= u32::MAX as usize / 8, || format!("n = {} is too large", self.n))?;
        nonnegative("horizon", self.horizon)?;
        nonnegative_times("checkpoints", &self.checkpoints)?;
        check(self.checkpoints.windows(2).all(|w| w[0] <= w[1]), || "checkpoints must be sorted".into())?;
        check(self.checkpoints.iter().all(|&t| t <= self.horizon), || "checkpoints must not exceed the horizon".into())?;

        let g = &self.grid;
        nonnegative_times("grid.times", &g.times)?;
        unit_positions("grid.ys", &g.ys, false)?;
        nonnegative("grid.exclusion", g.exclusion)?;
        unit_positions("grid.flow_ys", &g.flow_ys, true)?;
        nonnegative_times("grid.flow_times", &g.flow_times)?;

        let l = &self.limit;
        check(l.curve_points >= 2, || "limit.curve_points must be at least 2".into())?;
        positive("limit.root_tolerance", l.root_tolerance)?;
        check(l.quadrature_nodes >= 1, || "limit.quadrature_nodes must be at least 1".into())?;

        let v = &self.verify;
        check((1..=NAIVE_MAX_N).contains(&v.oracle_n), || format!("verify.oracle_n must be in 1..={NAIVE_MAX_N}"))?;
        nonnegative("verify.oracle_horizon", v.oracle_horizon)?;
        check(v.oracle_seeds > 0 && v.oracle_checkpoints > 0, || "verify oracle battery is empty".into())?;
        check(v.conditional_n >= 1 && v.conditional_replicas > 0, || "verify conditional battery is empty".into())?;
        unit_positions("verify.conditional_positions", &v.conditional_positions, true)?;
        nonnegative_times("verify.conditional_times", &v.conditional_times)?;
        check(v.renewal_particles >= 1 && v.renewal_gaps >= 1, || "verify renewal battery is empty".into())?;
        for (name, value) in [
            ("verify.z_threshold", v.z_threshold),
            ("verify.round_trip_tolerance", v.round_trip_tolerance),
            ("verify.mass_tolerance", v.mass_tolerance),
            ("verify.marginal_tolerance", v.marginal_tolerance),
            ("verify.derivative_tolerance", v.derivative_tolerance),
            ("verify.pde_tolerance", v.pde_tolerance),
        ] {
            nonnegative(name, value)?;
        }
        check(v.ks_level > 0.0 && v.ks_level < 1.0, || "verify.ks_level must lie in (0, 1)".into())?;
        check(v.marginal_panels >= 1, || "verify.marginal_panels must be at least 1".into())?;
        positive("verify.pde_step", v.pde_step)?;
        band("verify.pde_ratio", v.pde_ratio)?;

        let c = &self.convergence;
        check(c.ns.len() >= 3, || "convergence.ns needs at least 3 sizes".into())?;
        check(c.ns[0] >= 1 && c.ns.windows(2).all(|w| w[0] < w[1]), || "convergence.ns must be increasing".into())?;
        check(c.replicas > 0, || "convergence.replicas must be positive".into())?;
        nonnegative("convergence.boundary_coefficient", c.boundary_coefficient)?;
        nonnegative("convergence.statistic_coefficient", c.statistic_coefficient)?;
        nonnegative("convergence.flow_coefficient", c.flow_coefficient)?;
        band("convergence.slope_band", c.slope_band)?;

        if let Some(s) = &self.scenario {
            s.validate(self.n)?;
        }
        Ok(())
    }
}

impl ScenarioSpec {
    fn validate(&self, n: usize) -> AppResult<()> {
        check(self.initial_arrangement.len() == n, || {
            format!("scenario arrangement lists {} particles, n = {n}", self.initial_arrangement.len())
        })?;
        let mut seen = vec![false; n];
        for &id in &self.initial_arrangement {
            check((1..=n).contains(&id) && !seen[id - 1], || "scenario arrangement is not a permutation of 1..=n".into())?;
            seen[id - 1] = true;
        }
        for &(t, id) in &self.events {
            check(t.is_finite() && t >= 0.0 && (1..=n).contains(&id), || format!("scenario event ({t}, {id}) is invalid"))?;
        }
        if let Some(rates) = &self.rates {
            check(rates.len() == n, || "scenario rates must list one rate per particle".into())?;
            for &r in rates {
                positive("scenario rate", r)?;
            }
        }
        Ok(())
    }
}
