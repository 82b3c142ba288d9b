//! Per-run result rows and the aggregated metric table
//! (`min_count`, `rel_err_av`, `t_av`).

use serde::{Deserialize, Serialize};
use std::path::Path;

/// One row of the per-run CSV:
/// `instance,algorithm,objective,time_s,feasible,flags`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRow {
    pub instance: String,
    pub algorithm: String,
    pub objective: f64,
    pub time_s: f64,
    pub feasible: bool,
    pub flags: String,
}

impl RunRow {
    pub fn failed(&self) -> bool {
        !self.feasible || self.objective.is_nan()
    }
}

/// Aggregated quality/time metrics for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub algorithm: String,
    pub t_av_s: f64,
    /// Number of runs in which the algorithm attained the smallest
    /// objective; several algorithms can score in the same run.
    pub min_count: usize,
    /// Average of the nonzero relative errors against the per-run best.
    pub rel_err_av: f64,
    pub failures: usize,
}

/// Scoring tolerance: ties at the per-run minimum within a relative wiggle
/// of 1e-9 (or 1e-12 absolute near zero) share the score.
fn scores(objective: f64, best: f64) -> bool {
    objective <= best + (1e-9 * best.abs()).max(1e-12)
}

/// Aggregates per-run rows into the metric table. Failed runs are excluded
/// from scoring and timing but counted as failures. Algorithms appear in
/// first-occurrence order.
pub fn compute_metrics(rows: &[RunRow]) -> Vec<MetricsRow> {
    let mut algorithms: Vec<String> = Vec::new();
    for r in rows {
        if !algorithms.contains(&r.algorithm) {
            algorithms.push(r.algorithm.clone());
        }
    }
    let mut instances: Vec<String> = Vec::new();
    for r in rows {
        if !instances.contains(&r.instance) {
            instances.push(r.instance.clone());
        }
    }
    let mut table = Vec::new();
    for alg in &algorithms {
        let mut min_count = 0usize;
        let mut rel_errs = Vec::new();
        let mut times = Vec::new();
        let mut failures = 0usize;
        for inst in &instances {
            let group: Vec<&RunRow> = rows
                .iter()
                .filter(|r| &r.instance == inst && !r.failed())
                .collect();
            let best = group
                .iter()
                .map(|r| r.objective)
                .fold(f64::INFINITY, f64::min);
            for row in rows
                .iter()
                .filter(|r| &r.instance == inst && &r.algorithm == alg)
            {
                if row.failed() {
                    failures += 1;
                    continue;
                }
                times.push(row.time_s);
                if scores(row.objective, best) {
                    min_count += 1;
                } else {
                    rel_errs.push((row.objective - best) / best.abs().max(1e-300));
                }
            }
        }
        let t_av_s = if times.is_empty() {
            0.0
        } else {
            times.iter().sum::<f64>() / times.len() as f64
        };
        let rel_err_av = if rel_errs.is_empty() {
            0.0
        } else {
            rel_errs.iter().sum::<f64>() / rel_errs.len() as f64
        };
        table.push(MetricsRow {
            algorithm: alg.clone(),
            t_av_s,
            min_count,
            rel_err_av,
            failures,
        });
    }
    table
}

pub fn write_runs_csv(path: &Path, rows: &[RunRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv(path: &Path) -> anyhow::Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_metrics_csv(path: &Path, table: &[MetricsRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in table {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
