//! Library half of the experiment front-end: instance files, run
//! configuration, the comparison harness, metric tables and trace export.

pub mod instance;
pub mod metrics;
pub mod runconfig;
pub mod trace;

pub use instance::{generate_test_set, DesiredStateRecipe, GenSpec, InstanceSpec, PdeKindSpec};
pub use metrics::{compute_metrics, read_runs_csv, write_metrics_csv, write_runs_csv, MetricsRow, RunRow};
pub use runconfig::RunConfig;
pub use trace::{emit_trace, read_trace};

use anyhow::{bail, Context};
use mipdeco::{
    enumerate_global_min, exp_algorithm, ipa, simple_penalty, EnumerationBudget, ExpSubsolver,
    MipdecoProblem, SolveReport,
};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

/// Independent per-instance seed stream derived from the master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ (0x9E3779B97F4A7C15u64.wrapping_mul(index.wrapping_add(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Penalty,
    Ipa,
    Exp,
    Oracle,
}

impl AlgorithmKind {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        match s {
            "penalty" => Ok(Self::Penalty),
            "ipa" => Ok(Self::Ipa),
            "exp" => Ok(Self::Exp),
            "oracle" => Ok(Self::Oracle),
            other => bail!("unknown algorithm '{other}' (expected penalty|ipa|exp|oracle)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlgorithmSpec {
    pub label: String,
    pub kind: AlgorithmKind,
}

/// Parses a comma-separated algorithm list; repeated names get numbered
/// labels so their rows stay distinguishable.
pub fn parse_algorithms(list: &str) -> anyhow::Result<Vec<AlgorithmSpec>> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind = AlgorithmKind::parse(name)?;
        let n = seen.entry(name.to_string()).or_insert(0);
        *n += 1;
        let label = if *n == 1 {
            name.to_string()
        } else {
            format!("{name}#{n}")
        };
        out.push(AlgorithmSpec { label, kind });
    }
    if out.is_empty() {
        bail!("algorithm list is empty");
    }
    Ok(out)
}

/// One solver execution on one instance.
pub fn run_algorithm(
    problem: &MipdecoProblem,
    kind: AlgorithmKind,
    config: &RunConfig,
    seed: u64,
) -> anyhow::Result<(RunRow, Option<SolveReport>)> {
    let mut outer = config.outer.clone();
    outer.seed = seed;
    let started = Instant::now();
    let outcome: anyhow::Result<(f64, bool, String, Option<SolveReport>)> = match kind {
        AlgorithmKind::Penalty => simple_penalty(problem, None, &outer)
            .map(|r| (r.objective_raw, true, r.flags.join("|"), Some(r)))
            .map_err(Into::into),
        AlgorithmKind::Ipa => ipa(problem, None, &outer)
            .map(|r| (r.objective_raw, true, r.flags.join("|"), Some(r)))
            .map_err(Into::into),
        AlgorithmKind::Exp => {
            exp_algorithm(problem, &outer, &config.exp, ExpSubsolver::PerturbationSearch)
                .map(|r| (r.objective_raw, true, r.flags.join("|"), Some(r)))
                .map_err(Into::into)
        }
        AlgorithmKind::Oracle => enumerate_global_min(
            problem,
            EnumerationBudget {
                max_candidates: config.oracle_budget,
            },
        )
        .map(|sol| (sol.objective, true, String::new(), None))
        .map_err(Into::into),
    };
    // Wall time covers the solve only, rounded to milliseconds so the
    // emitted CSV is the authoritative value.
    let time_s = (started.elapsed().as_secs_f64() * 1e3).round() / 1e3;
    let (row, report) = match outcome {
        Ok((objective, feasible, flags, report)) => (
            RunRow {
                instance: String::new(),
                algorithm: String::new(),
                objective,
                time_s,
                feasible,
                flags,
            },
            report,
        ),
        Err(e) => (
            RunRow {
                instance: String::new(),
                algorithm: String::new(),
                objective: f64::NAN,
                time_s,
                feasible: false,
                flags: format!("error:{e}"),
            },
            None,
        ),
    };
    Ok((row, report))
}

pub struct ComparisonOutput {
    pub rows: Vec<RunRow>,
    pub metrics: Vec<MetricsRow>,
    /// Reports keyed by (instance label, algorithm label); oracle runs
    /// produce no report.
    pub reports: Vec<(String, String, SolveReport)>,
}

/// Runs every algorithm on every instance and aggregates the metric table.
/// Solves are independent and run in parallel; per-instance seeds derive
/// from the master seed by instance index, shared across algorithms.
pub fn run_comparison(
    instances: &[(String, InstanceSpec)],
    algorithms: &[AlgorithmSpec],
    config: &RunConfig,
    master_seed: u64,
    parallel: bool,
) -> anyhow::Result<ComparisonOutput> {
    // Assemble each distinct discretization once, shared across solves.
    let mut systems = HashMap::new();
    for (_, spec) in instances {
        let key = spec.system_key();
        if !systems.contains_key(&key) {
            systems.insert(key, spec.build_system()?);
        }
    }
    let problems: Vec<(String, MipdecoProblem, u64)> = instances
        .iter()
        .enumerate()
        .map(|(idx, (label, spec))| {
            let sys = Arc::clone(&systems[&spec.system_key()]);
            let problem = spec
                .build_problem(sys)
                .with_context(|| format!("building instance {label}"))?;
            Ok((label.clone(), problem, derive_seed(master_seed, idx as u64)))
        })
        .collect::<anyhow::Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..problems.len())
        .flat_map(|i| (0..algorithms.len()).map(move |a| (i, a)))
        .collect();
    let solve_one = |&(i, a): &(usize, usize)| -> anyhow::Result<(RunRow, Option<SolveReport>)> {
        let (label, problem, seed) = &problems[i];
        let alg = &algorithms[a];
        let (mut row, report) = run_algorithm(problem, alg.kind, config, *seed)?;
        row.instance = label.clone();
        row.algorithm = alg.label.clone();
        Ok((row, report))
    };
    let results: Vec<(RunRow, Option<SolveReport>)> = if parallel {
        tasks
            .par_iter()
            .map(solve_one)
            .collect::<anyhow::Result<_>>()?
    } else {
        tasks.iter().map(solve_one).collect::<anyhow::Result<_>>()?
    };

    let mut rows = Vec::with_capacity(results.len());
    let mut reports = Vec::new();
    for (row, report) in results {
        if let Some(r) = report {
            reports.push((row.instance.clone(), row.algorithm.clone(), r));
        }
        rows.push(row);
    }
    let metrics = compute_metrics(&rows);
    Ok(ComparisonOutput {
        rows,
        metrics,
        reports,
    })
}
