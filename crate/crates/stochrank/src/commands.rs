//! Subcommand drivers. Each writes its artifacts into `out` and returns the
//! list of failed checks (empty on success).

use std::fs;
use std::path::Path;

use stochrank_core::events::EventSource;
use stochrank_core::measures::Population;
use stochrank_core::{JumpEvent, LimitField, RateComponent, Regime, ScriptedEvents, SimOptions, SystemState};

use crate::config::Run;
use crate::error::{AppError, AppResult};
use crate::output::{self, FieldRow};
use crate::verify::{self, Check};

fn prepare(out: &Path) -> AppResult<()> {
    fs::create_dir_all(out).map_err(|e| AppError::io(out, e))
}

fn initial_state(run: &Run) -> AppResult<SystemState> {
    let cfg = &run.config;
    let Some(scenario) = &cfg.scenario else {
        return Ok(SystemState::init(&run.profile, cfg.n, cfg.seed)?);
    };
    let arrangement: Vec<usize> = scenario.initial_arrangement.iter().map(|id| id - 1).collect();
    let rates = scenario.rates.clone().unwrap_or_else(|| vec![1.0; cfg.n]);
    let population = Population::from_arrangement(&arrangement, rates)?;
    let events = scenario.events.iter().map(|&(time, id)| JumpEvent { time, particle: id - 1 }).collect();
    let script = ScriptedEvents::new(events, cfg.n).map_err(|e| AppError::Config(e.to_string()))?;
    Ok(SystemState::from_parts(population, EventSource::Scripted(script), SimOptions::default())?)
}

/// One replica: a snapshot per checkpoint plus the boundary trajectory.
pub fn simulate(run: &Run, out: &Path) -> AppResult<Vec<String>> {
    prepare(out)?;
    let field = run.field();
    let mut state = initial_state(run)?;
    let mut trajectory = Vec::new();
    let mut arrangements = Vec::new();
    for (k, t) in run.checkpoints().into_iter().enumerate() {
        state.advance_to(t)?;
        output::write_snapshot(&out.join(format!("snapshot_{k:03}.csv")), &state.snapshot())?;
        trajectory.push((t, state.boundary(), field.y_c(t)?));
        arrangements.push((t, state.arrangement().iter().map(|p| p + 1).collect()));
    }
    output::write_trajectory(&out.join("trajectory.csv"), &trajectory)?;
    output::write_arrangements(&out.join("arrangements.csv"), &arrangements)?;
    Ok(Vec::new())
}

fn component_label(c: &RateComponent) -> String {
    match *c {
        RateComponent::Atom { rate } => format!("p[w={rate}]"),
        RateComponent::Gamma { shape, rate } => format!("p[gamma(shape={shape} rate={rate})]"),
    }
}

fn field_row(field: &LimitField, y: f64, t: f64, side: Regime, label: &'static str) -> AppResult<FieldRow> {
    let density = field.density_side(y, t, side)?;
    let hat_y = match side {
        Regime::Tail => Some(field.hat_y(y, t)?),
        Regime::Head => None,
    };
    Ok(FieldRow {
        y,
        t,
        y_c: field.y_c(t)?,
        regime: label,
        t0: field.t_0(y)?,
        flow: field.flow(y, t)?,
        hat_y,
        velocity: field.velocity_side(y, t, side)?,
        weights: density.weights,
    })
}

/// Boundary curve on `[0, horizon]` and the limit field on the grid.
pub fn limit(run: &Run, out: &Path) -> AppResult<Vec<String>> {
    prepare(out)?;
    let field = run.field();
    let cfg = &run.config;
    let points = cfg.limit.curve_points;
    let mut times: Vec<f64> = (0..points).map(|k| cfg.horizon * k as f64 / (points - 1) as f64).collect();
    times.extend(&cfg.grid.times);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let curve = times.into_iter().map(|t| Ok((t, field.y_c(t)?))).collect::<AppResult<Vec<_>>>()?;
    output::write_curve(&out.join("curve.csv"), &curve)?;

    let mut rows = Vec::new();
    for &t in &cfg.grid.times {
        let yc = field.y_c(t)?;
        let mut ys = cfg.grid.ys.clone();
        if cfg.grid.include_boundary && yc < 1.0 {
            ys.push(yc);
        }
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        for y in ys {
            match field.regime(y, t)? {
                Some(Regime::Head) => rows.push(field_row(&field, y, t, Regime::Head, "head")?),
                Some(Regime::Tail) => rows.push(field_row(&field, y, t, Regime::Tail, "tail")?),
                None => {
                    rows.push(field_row(&field, y, t, Regime::Head, "boundary:head")?);
                    rows.push(field_row(&field, y, t, Regime::Tail, "boundary:tail")?);
                }
            }
        }
    }
    let components: Vec<String> = field.marginal().parts().iter().map(|(_, c)| component_label(c)).collect();
    output::write_field(&out.join("field.csv"), &components, &rows)?;
    Ok(Vec::new())
}

fn failures(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}: value {} against tolerance {}", c.name, c.value, c.tolerance))
        .collect()
}

/// Oracle equivalence, conditional means, renewal, analytic identities and
/// (for atomic laws) the PDE residual.
pub fn verify(run: &Run, out: &Path) -> AppResult<Vec<String>> {
    prepare(out)?;
    let cfg = &run.config;
    let spec = &cfg.verify;
    let field = run.field();
    let mut checks = Vec::new();

    let seq = verify::worked_example_sequence()?;
    let wrong = seq.iter().zip(verify::WORKED_EXAMPLE).filter(|(got, want)| got.as_slice() != want).count();
    checks.push(Check::at_most("worked_example", wrong as f64, 0.0));

    let seeds: Vec<u64> = (0..spec.oracle_seeds).map(|k| cfg.seed ^ k).collect();
    let checkpoints = verify::even_checkpoints(spec.oracle_horizon, spec.oracle_checkpoints);
    let mismatches = verify::oracle_mismatches(&run.profile, spec.oracle_n, &seeds, &checkpoints)?;
    checks.push(Check::at_most("oracle_equivalence", mismatches as f64, 0.0));

    let conditional = verify::conditional_mean_test(&run.profile, spec, cfg.seed)?;
    output::write_conditional(&out.join("conditional.csv"), &conditional)?;
    checks.push(Check::at_most("conditional_mean_excursions", conditional.excursions as f64, spec.max_excursions as f64));

    let renewal = verify::renewal_test(&run.profile, spec.renewal_particles, spec.renewal_gaps, cfg.seed)?;
    checks.push(Check::at_least("renewal_gaps", renewal.min_gaps as f64, spec.renewal_gaps as f64));
    checks.push(Check::at_most("renewal_ks_pooled", renewal.pooled, verify::ks_critical(spec.ks_level)));
    let per_particle = verify::ks_critical(spec.ks_level / renewal.particles as f64);
    checks.push(Check::at_most("renewal_ks_per_particle", renewal.worst_particle, per_particle));

    checks.extend(verify::analytic_checks(&field, &cfg.grid, spec)?);
    if field.marginal().is_atomic() {
        let report = verify::pde_study(&field, &cfg.grid.ys, &cfg.grid.times, spec.pde_step)?;
        checks.extend(verify::pde_checks(&report, spec));
    }

    output::write_checks(&out.join("verify.csv"), &checks)?;
    Ok(failures(&checks))
}

pub fn convergence(run: &Run, out: &Path) -> AppResult<Vec<String>> {
    prepare(out)?;
    let cfg = &run.config;
    let report = verify::convergence_study(
        &run.field(),
        &cfg.model.id,
        cfg.seed,
        &cfg.grid,
        &cfg.convergence,
        &cfg.convergence.statistics,
    )?;
    output::write_convergence(out, &report)?;
    Ok(report.failures())
}
