//! CSV artifacts. Floats are written in shortest round-trip form, so equal
//! runs produce byte-identical files.

use std::fs::{self, File};
use std::path::Path;

use stochrank_core::EmpiricalSnapshot;

use crate::error::{AppError, AppResult};
use crate::verify::{Check, ConditionalReport, ConvergenceReport};

/// Shortest round-trip form, in exponent notation for very small or large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn writer(path: &Path, header: &[&str]) -> AppResult<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    Ok(w)
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> AppResult<()> {
    w.flush().map_err(|e| AppError::io(path, e))
}

/// One row per particle: `particle,rate,y0,y,jumped` with 1-based ids.
pub fn write_snapshot(path: &Path, snapshot: &EmpiricalSnapshot) -> AppResult<()> {
    let mut w = writer(path, &["particle", "rate", "y0", "y", "jumped"])?;
    for (i, r) in snapshot.records.iter().enumerate() {
        w.write_record(&[
            (i + 1).to_string(),
            num(r.rate),
            num(r.y0),
            num(r.y),
            u8::from(r.jumped).to_string(),
        ])?;
    }
    finish(w, path)
}

/// `t,yC_emp,yC_limit`.
pub fn write_trajectory(path: &Path, rows: &[(f64, f64, f64)]) -> AppResult<()> {
    let mut w = writer(path, &["t", "yC_emp", "yC_limit"])?;
    for (t, emp, limit) in rows {
        w.write_record(&[num(*t), num(*emp), num(*limit)])?;
    }
    finish(w, path)
}

/// `t,arrangement`, the arrangement as space-separated 1-based ids, head first.
pub fn write_arrangements(path: &Path, rows: &[(f64, Vec<usize>)]) -> AppResult<()> {
    let mut w = writer(path, &["t", "arrangement"])?;
    for (t, ids) in rows {
        let joined = ids.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        w.write_record(&[num(*t), joined])?;
    }
    finish(w, path)
}

/// `t,yC`.
pub fn write_curve(path: &Path, rows: &[(f64, f64)]) -> AppResult<()> {
    let mut w = writer(path, &["t", "yC"])?;
    for (t, y) in rows {
        w.write_record(&[num(*t), num(*y)])?;
    }
    finish(w, path)
}

/// One evaluated point of the limit field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRow {
    pub y: f64,
    pub t: f64,
    pub y_c: f64,
    pub regime: &'static str,
    pub t0: f64,
    pub flow: f64,
    pub hat_y: Option<f64>,
    pub velocity: f64,
    pub weights: Vec<f64>,
}

/// `y,t,yC,regime,t0,flow,hat_y,velocity` followed by one weight column per
/// component of the marginal law.
pub fn write_field(path: &Path, components: &[String], rows: &[FieldRow]) -> AppResult<()> {
    let mut header: Vec<&str> = vec!["y", "t", "yC", "regime", "t0", "flow", "hat_y", "velocity"];
    header.extend(components.iter().map(String::as_str));
    let mut w = writer(path, &header)?;
    for r in rows {
        let mut record = vec![
            num(r.y),
            num(r.t),
            num(r.y_c),
            r.regime.to_string(),
            num(r.t0),
            num(r.flow),
            r.hat_y.map(num).unwrap_or_default(),
            num(r.velocity),
        ];
        record.extend(r.weights.iter().copied().map(num));
        w.write_record(&record)?;
    }
    finish(w, path)
}

/// `check,value,tolerance,pass`.
pub fn write_checks(path: &Path, checks: &[Check]) -> AppResult<()> {
    let mut w = writer(path, &["check", "value", "tolerance", "pass"])?;
    for c in checks {
        w.write_record(&[c.name.clone(), num(c.value), num(c.tolerance), c.pass.to_string()])?;
    }
    finish(w, path)
}

pub fn write_conditional(path: &Path, report: &ConditionalReport) -> AppResult<()> {
    let mut w = writer(path, &["particle", "x0", "t", "count", "mean", "oracle", "variance", "z"])?;
    for p in &report.pairs {
        w.write_record(&[
            (p.particle + 1).to_string(),
            p.x0.to_string(),
            num(p.t),
            p.count.to_string(),
            num(p.mean),
            num(p.oracle),
            num(p.variance),
            num(p.z),
        ])?;
    }
    finish(w, path)
}

/// `observable,N,rms,tolerance,pass` plus a text summary with the slopes.
pub fn write_convergence(dir: &Path, report: &ConvergenceReport) -> AppResult<()> {
    let path = dir.join("convergence.csv");
    let mut w = writer(&path, &["observable", "N", "rms", "tolerance", "pass"])?;
    for r in &report.rows {
        w.write_record(&[r.observable.clone(), r.n.to_string(), num(r.rms), num(r.tolerance), r.pass.to_string()])?;
    }
    finish(w, &path)?;
    let summary = dir.join("convergence_summary.txt");
    fs::write(&summary, report.summary()).map_err(|e| AppError::io(&summary, e))
}
