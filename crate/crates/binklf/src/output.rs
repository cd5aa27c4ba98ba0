//! CSV and JSON writers. Floats are written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use binklf_core::Trajectory;
use serde::Serialize;

use crate::error::Result;
use crate::filters::FilterRun;
use crate::montecarlo::McReport;

pub const SCHEMA_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(
        path,
    )?)))
}

/// `k, x_true_1..n, x_hat_1..n, m_k, tr_phi`.
pub fn write_trace(path: &Path, traj: &Trajectory, run: &FilterRun) -> Result<()> {
    let n = traj.initial_state.len();
    let mut w = csv_writer(path)?;
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x_true_{i}")));
    header.extend((1..=n).map(|i| format!("x_hat_{i}")));
    header.push("m_k".into());
    header.push("tr_phi".into());
    w.write_record(&header)?;
    for (j, (x, est)) in traj.states.iter().zip(&run.estimates).enumerate() {
        let mut row = vec![(j + 1).to_string()];
        row.extend(x.iter().map(|&v| fmt_f64(v)));
        row.extend(est.x_hat.iter().map(|&v| fmt_f64(v)));
        row.push(run.sensors_used[j].to_string());
        row.push(fmt_f64(est.phi_hat.trace()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_per_step(
    path: &Path,
    report: &McReport,
    prefix: &str,
    column: impl Fn(usize, usize) -> f64,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["k".to_string()];
    header.extend(
        report
            .filters
            .iter()
            .map(|f| format!("{prefix}_{}", f.kind)),
    );
    w.write_record(&header)?;
    for k in 0..report.steps {
        let mut row = vec![(k + 1).to_string()];
        row.extend((0..report.filters.len()).map(|f| fmt_f64(column(f, k))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `k, rmse_<filter>…`.
pub fn write_rmse(path: &Path, report: &McReport) -> Result<()> {
    write_per_step(path, report, "rmse", |f, k| report.filters[f].rmse[k])
}

/// `k, mean_mk_<filter>…`.
pub fn write_mk(path: &Path, report: &McReport) -> Result<()> {
    write_per_step(path, report, "mean_mk", |f, k| {
        report.filters[f].mean_sensors_used[k]
    })
}

/// `filter, mean_step_seconds`. Wall-clock, so not reproducible byte for byte.
pub fn write_timing(path: &Path, report: &McReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["filter", "mean_step_seconds"])?;
    for f in &report.filters {
        w.write_record([f.kind.name().to_string(), fmt_f64(f.mean_step_seconds)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub runs: usize,
    pub steps: usize,
    pub base_seed: u64,
    pub successful_runs: usize,
    pub failures: Vec<FailureSummary>,
    /// FNV-1a over the per-run trajectory checksums, hex.
    pub trajectory_digest: String,
    pub filters: Vec<FilterSummaryJson>,
}

#[derive(Debug, Serialize)]
pub struct FailureSummary {
    pub run: usize,
    pub seed: u64,
    pub filter: Option<String>,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct FilterSummaryJson {
    pub name: String,
    pub mean_rmse: f64,
    pub final_rmse: f64,
    pub mean_mk: f64,
    pub max_trace_phi: f64,
    pub mean_step_seconds: f64,
}

pub fn digest(checksums: &[Option<u64>]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in checksums {
        for byte in c.unwrap_or(0).to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn summary(report: &McReport) -> Summary {
    Summary {
        schema_version: SCHEMA_VERSION,
        scenario: report.scenario.clone(),
        runs: report.runs,
        steps: report.steps,
        base_seed: report.base_seed,
        successful_runs: report.successful_runs(),
        failures: report
            .failures
            .iter()
            .map(|f| FailureSummary {
                run: f.run,
                seed: f.seed,
                filter: f.filter.map(|k| k.name().to_string()),
                message: f.message.clone(),
            })
            .collect(),
        trajectory_digest: format!("{:016x}", digest(&report.checksums)),
        filters: report
            .filters
            .iter()
            .map(|f| FilterSummaryJson {
                name: f.kind.name().to_string(),
                mean_rmse: f.mean_rmse(1, report.steps),
                final_rmse: *f.rmse.last().unwrap_or(&f64::NAN),
                mean_mk: f.overall_mean_sensors_used(),
                max_trace_phi: f.max_trace,
                mean_step_seconds: f.mean_step_seconds,
            })
            .collect(),
    }
}

pub fn write_summary(path: &Path, report: &McReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &summary(report))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `rmse.csv`, `mk.csv`, `timing.csv` and `summary.json` into `dir`.
pub fn write_mc(dir: &Path, report: &McReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_rmse(&dir.join("rmse.csv"), report)?;
    write_mk(&dir.join("mk.csv"), report)?;
    write_timing(&dir.join("timing.csv"), report)?;
    write_summary(&dir.join("summary.json"), report)?;
    Ok(())
}
