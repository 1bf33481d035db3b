//! Oracle comparisons and the convergence study.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stochrank_core::events::EventSource;
use stochrank_core::measures::Population;
use stochrank_core::simulator::seeded_setup;
use stochrank_core::{
    rng_from_seed, EmpiricalSnapshot, Error, InitialProfile, JumpEvent, LimitField, Result, ScriptedEvents,
    SimOptions, SystemState,
};

use crate::config::{ConvergenceSpec, GridSpec, VerifySpec, NAIVE_MAX_N};
use crate::error::{AppError, AppResult};

/// Residuals below this are treated as exact cancellation when checking the
/// second-order decay of the PDE residual.
const ROUNDOFF_FLOOR: f64 = 1e-9;

/// One named pass/fail measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }

    /// Passes when `value >= tolerance`.
    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value >= tolerance }
    }
}

// ---------------------------------------------------------------------------
// Reference simulators

/// Population and event list of the N = 4 worked example: initial order
/// 3124 and jumps of particles 1, 2, 4, 1 at times 1, 2, 3, 4.
pub fn worked_example_parts() -> Result<(Population, ScriptedEvents)> {
    let population = Population::from_arrangement(&[2, 0, 1, 3], vec![1.0; 4])?;
    let events = [(1.0, 0), (2.0, 1), (3.0, 3), (4.0, 0)]
        .into_iter()
        .map(|(time, particle)| JumpEvent { time, particle })
        .collect();
    Ok((population, ScriptedEvents::new(events, 4)?))
}

/// Arrangements (1-based ids, head first) before and after each event.
pub fn worked_example_sequence() -> Result<Vec<Vec<usize>>> {
    let (population, script) = worked_example_parts()?;
    let times: Vec<f64> = script.events().iter().map(|e| e.time).collect();
    let mut state = SystemState::from_parts(population, EventSource::Scripted(script), SimOptions::default())?;
    let mut out = vec![one_based(&state.arrangement())];
    for t in times {
        state.advance_to(t)?;
        out.push(one_based(&state.arrangement()));
    }
    Ok(out)
}

fn one_based(arrangement: &[usize]) -> Vec<usize> {
    arrangement.iter().map(|p| p + 1).collect()
}

pub const WORKED_EXAMPLE: [[usize; 4]; 5] = [[3, 1, 2, 4], [1, 3, 2, 4], [2, 1, 3, 4], [4, 2, 1, 3], [1, 4, 2, 3]];

/// Positions at `checkpoints` from the literal update rule: on each jump,
/// every particle ranked ahead of the jumper moves back by one.
pub fn naive_reference(profile: &InitialProfile, n: usize, seed: u64, checkpoints: &[f64]) -> Result<Vec<Vec<u32>>> {
    if n > NAIVE_MAX_N {
        return Err(Error::OutOfDomain { what: "reference simulator size", value: n as f64 });
    }
    let (population, events) = seeded_setup(profile, n, seed)?;
    naive_from_parts(&population, events, checkpoints)
}

pub fn naive_from_parts(population: &Population, mut events: EventSource, checkpoints: &[f64]) -> Result<Vec<Vec<u32>>> {
    let mut x = population.initial_positions.clone();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        if !(t >= now) {
            return Err(Error::TimeRegression { current: now, requested: t });
        }
        while let Some(e) = events.pop_until(t) {
            let old = x[e.particle];
            for xi in x.iter_mut() {
                if *xi < old {
                    *xi += 1;
                }
            }
            x[e.particle] = 1;
        }
        now = t;
        out.push(x.clone());
    }
    Ok(out)
}

/// Positions at `checkpoints` from the counting formulas: before its first
/// jump a particle sits at `x_{i,0}` plus the number of initially-behind
/// particles that have jumped; afterwards at one plus the number of particles
/// that jumped since its own latest jump.
pub fn counting_positions(population: &Population, mut events: EventSource, checkpoints: &[f64]) -> Result<Vec<Vec<u32>>> {
    let n = population.len();
    let x0 = &population.initial_positions;
    let mut first = vec![f64::INFINITY; n];
    let mut last = vec![f64::NEG_INFINITY; n];
    let mut now = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        if !(t >= now) {
            return Err(Error::TimeRegression { current: now, requested: t });
        }
        while let Some(e) = events.pop_until(t) {
            if first[e.particle].is_infinite() {
                first[e.particle] = e.time;
            }
            last[e.particle] = e.time;
        }
        now = t;
        let positions = (0..n)
            .map(|i| {
                if first[i] > t {
                    x0[i] + (0..n).filter(|&k| x0[k] > x0[i] && first[k] <= t).count() as u32
                } else {
                    // Equal jump times only arise from floating-point
                    // coincidence; the later index counts as the later jump.
                    let after = |k: usize| last[k] > last[i] || (last[k] == last[i] && k > i);
                    1 + (0..n).filter(|&k| k != i && after(k)).count() as u32
                }
            })
            .collect();
        out.push(positions);
    }
    Ok(out)
}

fn fast_positions(profile: &InitialProfile, n: usize, seed: u64, checkpoints: &[f64]) -> Result<Vec<Vec<u32>>> {
    let mut state = SystemState::init(profile, n, seed)?;
    checkpoints
        .iter()
        .map(|&t| {
            state.advance_to(t)?;
            Ok(state.positions())
        })
        .collect()
}

/// `count` equally spaced times ending at `horizon`.
pub fn even_checkpoints(horizon: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| horizon * k as f64 / count as f64).collect()
}

/// Number of `(seed, checkpoint)` pairs where the fast simulator, the
/// update-rule reference and the counting formulas disagree.
pub fn oracle_mismatches(profile: &InitialProfile, n: usize, seeds: &[u64], checkpoints: &[f64]) -> Result<usize> {
    let mut mismatches = 0;
    for &seed in seeds {
        let fast = fast_positions(profile, n, seed, checkpoints)?;
        let naive = naive_reference(profile, n, seed, checkpoints)?;
        let (population, events) = seeded_setup(profile, n, seed)?;
        let counted = counting_positions(&population, events, checkpoints)?;
        mismatches += (0..checkpoints.len()).filter(|&k| fast[k] != naive[k] || fast[k] != counted[k]).count();
    }
    Ok(mismatches)
}

// ---------------------------------------------------------------------------
// Conditional means

/// `E[X_i(t) | τ_i > t]` and its variance for a fixed population: every
/// particle initially behind `i` has passed it iff it jumped by `t`.
pub fn conditional_position_oracle(population: &Population, particle: usize, t: f64) -> (f64, f64) {
    let x = population.initial_positions[particle];
    let (mut mean, mut var) = (f64::from(x), 0.0);
    for (k, &xk) in population.initial_positions.iter().enumerate() {
        if xk > x {
            let p = -(-population.rates[k] * t).exp_m1();
            mean += p;
            var += p * (1.0 - p);
        }
    }
    (mean, var)
}

/// [`conditional_position_oracle`] for the population drawn from `seed`.
pub fn conditional_position(profile: &InitialProfile, n: usize, seed: u64, particle: usize, t: f64) -> Result<(f64, f64)> {
    let (population, _) = seeded_setup(profile, n, seed)?;
    if particle >= n {
        return Err(Error::OutOfDomain { what: "particle", value: particle as f64 });
    }
    Ok(conditional_position_oracle(&population, particle, t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPair {
    pub particle: usize,
    pub x0: u32,
    pub t: f64,
    /// Replicas in which the particle had not jumped by `t`.
    pub count: u64,
    pub mean: f64,
    pub oracle: f64,
    pub variance: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalReport {
    pub pairs: Vec<ConditionalPair>,
    pub excursions: usize,
}

/// Compares conditional mean positions over replicas that share one
/// population and differ only in their clocks (replica `r` uses `seed ^ r`).
pub fn conditional_mean_test(profile: &InitialProfile, spec: &VerifySpec, seed: u64) -> AppResult<ConditionalReport> {
    let n = spec.conditional_n;
    let (population, _) = seeded_setup(profile, n, seed)?;
    let tracked: Vec<usize> = spec
        .conditional_positions
        .iter()
        .map(|&y| {
            let rank = ((y * n as f64).floor() as u32 + 1).min(n as u32);
            population.initial_positions.iter().position(|&x| x == rank).expect("ranks form a permutation")
        })
        .collect();
    let mut times = spec.conditional_times.clone();
    times.sort_by(f64::total_cmp);
    times.dedup();

    // Per replica: sum of positions for each (time, particle), when unjumped.
    let per_replica: Vec<Vec<Option<u32>>> = (1..=spec.conditional_replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<Option<u32>>> {
            let events = EventSource::exponential(&population.rates, rng_from_seed(seed ^ r));
            let mut state = SystemState::from_parts(population.clone(), events, SimOptions::default())?;
            let mut row = Vec::with_capacity(times.len() * tracked.len());
            for &t in &times {
                state.advance_to(t)?;
                row.extend(tracked.iter().map(|&i| state.first_jump_time(i).is_none().then(|| state.position(i))));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        for (pi, &i) in tracked.iter().enumerate() {
            let k = ti * tracked.len() + pi;
            let (mut count, mut sum) = (0u64, 0.0);
            for row in &per_replica {
                if let Some(x) = row[k] {
                    count += 1;
                    sum += f64::from(x);
                }
            }
            let (oracle, variance) = conditional_position_oracle(&population, i, t);
            let mean = sum / count as f64;
            let z = if variance == 0.0 {
                if mean == oracle { 0.0 } else { f64::INFINITY }
            } else {
                (mean - oracle) / (variance / count as f64).sqrt()
            };
            pairs.push(ConditionalPair {
                particle: i,
                x0: population.initial_positions[i],
                t,
                count,
                mean,
                oracle,
                variance,
                z,
            });
        }
    }
    // An empty conditioning set (NaN) counts against the test.
    let excursions = pairs.iter().filter(|p| !(p.z.abs() <= spec.z_threshold)).count();
    Ok(ConditionalReport { pairs, excursions })
}

// ---------------------------------------------------------------------------
// Renewal property

/// Asymptotic critical value of `√n D` for the one-sample KS test at `level`.
pub fn ks_critical(level: f64) -> f64 {
    ((2.0 / level).ln() / 2.0).sqrt()
}

/// `sup |F_n - F|` of `samples` against Exp(1).
pub fn ks_exp1(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in samples.iter().enumerate() {
        let f = -(-x).exp_m1();
        d = d.max(f - k as f64 / n).max((k + 1) as f64 / n - f);
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenewalReport {
    /// `√n D` for all gaps pooled after scaling by their particle's rate.
    pub pooled: f64,
    /// Largest per-particle `√n D`.
    pub worst_particle: f64,
    pub min_gaps: usize,
    pub particles: usize,
}

/// Runs a small system long enough that every particle jumps about
/// `1.1 * gaps` times and tests rate-scaled inter-jump gaps against Exp(1).
pub fn renewal_test(profile: &InitialProfile, particles: usize, gaps: usize, seed: u64) -> Result<RenewalReport> {
    let mut state = SystemState::init(profile, particles, seed)?;
    let rates = state.rates().to_vec();
    let slowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let horizon = 1.1 * gaps as f64 / slowest + 10.0 / slowest;
    let mut last = vec![0.0; particles];
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); particles];
    state.advance_observed(horizon, |_, e| {
        samples[e.particle].push((e.time - last[e.particle]) * rates[e.particle]);
        last[e.particle] = e.time;
    })?;
    let mut pooled: Vec<f64> = samples.iter().flatten().copied().collect();
    let pooled_stat = ks_exp1(&mut pooled) * (pooled.len() as f64).sqrt();
    let worst = samples
        .iter_mut()
        .map(|s| ks_exp1(s) * (s.len() as f64).sqrt())
        .fold(0.0, f64::max);
    let min_gaps = samples.iter().map(Vec::len).min().unwrap_or(0);
    Ok(RenewalReport { pooled: pooled_stat, worst_particle: worst, min_gaps, particles })
}

// ---------------------------------------------------------------------------
// Analytic identities and the PDE residual

fn grid_points(field: &LimitField, ys: &[f64], times: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    for &t in times {
        for &y in ys {
            if field.regime(y, t)?.is_some() {
                points.push((y, t));
            }
        }
    }
    Ok(points)
}

/// Round trips, density normalization, marginal reconstruction and the two
/// derivative identities on the configured grid.
pub fn analytic_checks(field: &LimitField, grid: &GridSpec, spec: &VerifySpec) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let mut times: Vec<f64> = [0.1, 1.0, 5.0].into_iter().chain(grid.times.iter().copied()).filter(|&t| t > 0.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut t0_err: f64 = 0.0;
    for &t in &times {
        let y = field.y_c(t)?;
        if y < 1.0 {
            t0_err = t0_err.max((field.t_0(y)? - t).abs());
        }
    }
    checks.push(Check::at_most("round_trip_t0", t0_err, spec.round_trip_tolerance));

    let mut hat_err: f64 = 0.0;
    let starts: Vec<f64> = [0.0, 0.3, 0.9].into_iter().chain(grid.ys.iter().copied()).collect();
    for &t in &times {
        for &z in &starts {
            let y = field.flow(z, t)?;
            if y < 1.0 {
                hat_err = hat_err.max((field.hat_y(y, t)? - z).abs());
            }
        }
    }
    checks.push(Check::at_most("round_trip_hat_y", hat_err, spec.round_trip_tolerance));

    let mut mass_err: f64 = 0.0;
    for (y, t) in grid_points(field, &grid.ys, &grid.times)? {
        let d = field.density(y, t)?;
        mass_err = mass_err.max((d.weights.iter().sum::<f64>() - 1.0).abs());
        mass_err = mass_err.max((d.law.parts().iter().map(|p| p.0).sum::<f64>() - 1.0).abs());
    }
    checks.push(Check::at_most("density_mass", mass_err, spec.mass_tolerance));

    if let Some(atoms) = field.marginal().atom_weights() {
        let mut err: f64 = 0.0;
        for &t in &times {
            let recon = field.reconstruct_marginal(t, spec.marginal_panels)?;
            for ((_, expected), (_, got)) in atoms.iter().zip(&recon) {
                err = err.max((expected - got).abs());
            }
        }
        checks.push(Check::at_most("marginal_reconstruction", err, spec.marginal_tolerance));
    }

    // d y_C / dt = ∫ w e^{-wt} λ(dw).
    let h = 1e-5;
    let mut dyc: f64 = 0.0;
    for &t in times.iter().filter(|&&t| t > h) {
        let fd = (field.y_c(t + h)? - field.y_c(t - h)?) / (2.0 * h);
        let exact = field.marginal().weighted_laplace(t)?;
        dyc = dyc.max(((fd - exact) / exact).abs());
    }
    checks.push(Check::at_most("derivative_y_c", dyc, spec.derivative_tolerance));

    // ∂ŷ/∂y = 1 / ∫ e^{-wt} μ_{ŷ,0}(dw), away from stratum edges.
    let h = 1e-6;
    let mut dhat: f64 = 0.0;
    for (y, t) in grid_points(field, &grid.ys, &grid.times)? {
        if t == 0.0 || y - 2.0 * h <= field.y_c(t)? || y + h >= 1.0 {
            continue;
        }
        let (lo, mid, hi) = (field.hat_y(y - h, t)?, field.hat_y(y, t)?, field.hat_y(y + h, t)?);
        let profile = field.profile();
        if profile.stratum_index(lo) != profile.stratum_index(hi) {
            continue;
        }
        let fd = (hi - lo) / (2.0 * h);
        let exact = 1.0 / profile.law_at(mid).laplace(t)?;
        dhat = dhat.max(((fd - exact) / exact).abs());
    }
    checks.push(Check::at_most("derivative_hat_y", dhat, spec.derivative_tolerance));
    Ok(checks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeReport {
    pub points: usize,
    pub max_residual: f64,
    /// `residual(h) / residual(h/2)` at points above the round-off floor.
    pub ratios: Vec<f64>,
}

/// PDE residual at step `h` and `h/2` over the grid, skipping points whose
/// stencil would cross the boundary curve or a stratum edge image.
pub fn pde_study(field: &LimitField, ys: &[f64], times: &[f64], h: f64) -> Result<PdeReport> {
    let mut report = PdeReport { points: 0, max_residual: 0.0, ratios: Vec::new() };
    for (y, t) in grid_points(field, ys, times)? {
        let coarse = match field.pde_residual(y, t, h) {
            Ok(r) => r,
            Err(Error::TooCloseToBoundary { .. }) => continue,
            Err(e) => return Err(e),
        };
        let fine = field.pde_residual(y, t, h / 2.0)?;
        report.points += 1;
        report.max_residual = report.max_residual.max(coarse);
        if coarse > ROUNDOFF_FLOOR {
            report.ratios.push(coarse / fine);
        }
    }
    Ok(report)
}

pub fn pde_checks(report: &PdeReport, spec: &VerifySpec) -> Vec<Check> {
    let mut checks = vec![
        Check::at_least("pde_points", report.points as f64, 1.0),
        Check::at_most("pde_residual", report.max_residual, spec.pde_tolerance),
    ];
    if !report.ratios.is_empty() {
        let lo = report.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = report.ratios.iter().copied().fold(0.0, f64::max);
        checks.push(Check::at_least("pde_halving_ratio_min", lo, spec.pde_ratio.0));
        checks.push(Check::at_most("pde_halving_ratio_max", hi, spec.pde_ratio.1));
    }
    checks
}

// ---------------------------------------------------------------------------
// Convergence study

/// Test functions `g` for the statistic observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestFunction {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "w")]
    Rate,
    #[serde(rename = "exp(-w)")]
    ExpNegRate,
}

impl TestFunction {
    pub const ALL: [Self; 3] = [Self::One, Self::Rate, Self::ExpNegRate];

    pub fn eval(self, w: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Rate => w,
            Self::ExpNegRate => (-w).exp(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::One => "1",
            Self::Rate => "w",
            Self::ExpNegRate => "exp(-w)",
        }
    }
}

/// `max_y |F_N(y) - y|` over `ys`, the sup-distance between the empirical
/// position distribution and its (uniform) limit.
pub fn ks_distance(snapshot: &EmpiricalSnapshot, field: &LimitField, t: f64, ys: &[f64]) -> Result<f64> {
    let mut d: f64 = 0.0;
    for &y in ys {
        let limit = field.limit_statistic(|_| 1.0, y, t)?;
        d = d.max((snapshot.empirical_statistic(|_| 1.0, y) - limit).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub observable: String,
    pub n: usize,
    pub replicas: u64,
    pub rms: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub observable: String,
    pub slope: f64,
    pub band: (f64, f64),
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub model_id: String,
    pub rows: Vec<ConvergenceRow>,
    pub slopes: Vec<SlopeFit>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.slopes.iter().all(|s| s.pass)
    }

    /// One line per failed bound, naming the observable.
    pub fn failures(&self) -> Vec<String> {
        let rows = self.rows.iter().filter(|r| !r.pass).map(|r| {
            format!("{}: rms {:.3e} exceeds {:.3e} at N={}", r.observable, r.rms, r.tolerance, r.n)
        });
        let slopes = self.slopes.iter().filter(|s| !s.pass).map(|s| {
            format!("{}: slope {:.4} outside [{}, {}]", s.observable, s.slope, s.band.0, s.band.1)
        });
        rows.chain(slopes).collect()
    }

    pub fn summary(&self) -> String {
        let mut text = format!("model: {}\n", self.model_id);
        for s in &self.slopes {
            let verdict = if s.pass { "pass" } else { "FAIL" };
            text.push_str(&format!(
                "{}: slope {:.4} (band [{}, {}]) {verdict}\n",
                s.observable, s.slope, s.band.0, s.band.1
            ));
        }
        text.push_str(&format!("overall: {}\n", if self.passed() { "pass" } else { "FAIL" }));
        text
    }
}

/// Ordinary least squares slope of `ln rms` against `ln N`.
pub fn log_log_slope(points: &[(usize, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// What a replica measures and against which limit values.
#[derive(Debug, Clone)]
struct Targets {
    times: Vec<f64>,
    boundary: Vec<(usize, f64)>,
    // (time index, y, g, limit value)
    statistic: Vec<(usize, f64, TestFunction, f64)>,
    flow: Vec<(usize, f64, f64)>,
    functions: Vec<TestFunction>,
}

impl Targets {
    fn new(field: &LimitField, grid: &GridSpec, functions: &[TestFunction]) -> AppResult<Self> {
        let mut times: Vec<f64> = grid.times.iter().chain(&grid.flow_times).copied().collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let index = |t: f64| times.iter().position(|&s| s == t).expect("time is on the grid");

        let boundary = grid.times.iter().map(|&t| Ok((index(t), field.y_c(t)?))).collect::<Result<Vec<_>>>()?;
        let mut statistic = Vec::new();
        for &t in &grid.times {
            let yc = field.y_c(t)?;
            for &y in grid.ys.iter().filter(|&&y| (y - yc).abs() > grid.exclusion) {
                for &g in functions {
                    statistic.push((index(t), y, g, field.limit_statistic(|w| g.eval(w), y, t)?));
                }
            }
        }
        let mut flow = Vec::new();
        for &t in &grid.flow_times {
            for &y in &grid.flow_ys {
                flow.push((index(t), y, field.flow(y, t)?));
            }
        }
        if boundary.is_empty() || (!functions.is_empty() && statistic.is_empty()) || flow.is_empty() {
            return Err(AppError::Config("degenerate observation grid: no points survive the exclusion".into()));
        }
        Ok(Self { times, boundary, statistic, flow, functions: functions.to_vec() })
    }

    /// Per-replica sups: boundary, one per test function, flow.
    fn measure(&self, profile: &InitialProfile, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut state = SystemState::init(profile, n, seed)?;
        let mut sups = vec![0.0f64; self.functions.len() + 2];
        for (ti, &t) in self.times.iter().enumerate() {
            state.advance_to(t)?;
            for &(_, limit) in self.boundary.iter().filter(|b| b.0 == ti) {
                sups[0] = sups[0].max((state.boundary() - limit).abs());
            }
            let mut snapshot = None;
            for &(_, y, g, limit) in self.statistic.iter().filter(|s| s.0 == ti) {
                let snap = snapshot.get_or_insert_with(|| state.snapshot());
                let k = 1 + self.functions.iter().position(|&f| f == g).expect("listed function");
                sups[k] = sups[k].max((snap.empirical_statistic(|w| g.eval(w), y) - limit).abs());
            }
            let last = sups.len() - 1;
            for &(_, y, limit) in self.flow.iter().filter(|f| f.0 == ti) {
                sups[last] = sups[last].max((state.flow_position(y)? - limit).abs());
            }
        }
        Ok(sups)
    }
}

/// Simulates `replicas` independent systems at each size (replica `r` uses
/// `seed ^ r`), records per-replica sup errors over the grid, and reports
/// their RMS against `coefficient / √N` together with the fitted log-log slope.
pub fn convergence_study(
    field: &LimitField,
    model_id: &str,
    seed: u64,
    grid: &GridSpec,
    spec: &ConvergenceSpec,
    functions: &[TestFunction],
) -> AppResult<ConvergenceReport> {
    if spec.ns.len() < 3 || spec.ns.windows(2).any(|w| w[0] >= w[1]) || spec.replicas == 0 {
        return Err(AppError::Config("convergence needs at least 3 increasing sizes and replicas > 0".into()));
    }
    let targets = Targets::new(field, grid, functions)?;
    let mut names = vec![("boundary".to_string(), spec.boundary_coefficient)];
    names.extend(functions.iter().map(|g| (format!("statistic[g={}]", g.label()), spec.statistic_coefficient)));
    names.push(("flow".to_string(), spec.flow_coefficient));

    let mut rows = Vec::new();
    let mut series: Vec<Vec<(usize, f64)>> = vec![Vec::new(); names.len()];
    for &n in &spec.ns {
        let sups: Vec<Vec<f64>> = (0..spec.replicas)
            .into_par_iter()
            .map(|r| targets.measure(field.profile(), n, seed ^ r))
            .collect::<Result<_>>()?;
        for (k, (name, coefficient)) in names.iter().enumerate() {
            let ms = sups.iter().map(|s| s[k] * s[k]).sum::<f64>() / spec.replicas as f64;
            let rms = ms.sqrt();
            let tolerance = coefficient / (n as f64).sqrt();
            series[k].push((n, rms));
            rows.push(ConvergenceRow {
                observable: name.clone(),
                n,
                replicas: spec.replicas,
                rms,
                tolerance,
                pass: rms <= tolerance,
            });
        }
    }
    let slopes = names
        .iter()
        .zip(&series)
        .map(|((name, _), points)| {
            let slope = log_log_slope(points);
            let band = spec.slope_band;
            SlopeFit { observable: name.clone(), slope, band, pass: slope >= band.0 && slope <= band.1 }
        })
        .collect();
    Ok(ConvergenceReport { model_id: model_id.to_string(), rows, slopes })
}

// ---------------------------------------------------------------------------
// Performance

#[derive(Debug, Clone, PartialEq)]
pub struct EventCost {
    pub n: usize,
    pub events: u64,
    pub setup_seconds: f64,
    pub run_seconds: f64,
}

impl EventCost {
    pub fn nanos_per_event(&self) -> f64 {
        self.run_seconds * 1e9 / self.events as f64
    }

    pub fn total_seconds(&self) -> f64 {
        self.setup_seconds + self.run_seconds
    }
}

/// Times a run whose horizon is chosen to produce about `target_events` jumps.
pub fn measure_event_cost(profile: &InitialProfile, n: usize, target_events: u64, seed: u64) -> Result<EventCost> {
    let horizon = target_events as f64 / (n as f64 * profile.marginal().mean());
    let start = Instant::now();
    let mut state = SystemState::init(profile, n, seed)?;
    let setup_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    state.advance_to(horizon)?;
    let run_seconds = start.elapsed().as_secs_f64();
    Ok(EventCost { n, events: state.total_jumps(), setup_seconds, run_seconds })
}
