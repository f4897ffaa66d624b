//! Files written by `run`: iterate log, summary JSON, solution CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use auglag::auglag::{weighted_norm, KktResidual};
use auglag::catalog::Comparison;
use auglag::optimal_control::ControllabilityReport;
use auglag::{Benchmark, ProblemId, ProblemParams, PropagatorMode, SolveResult, SolveStatus, SolverConfig};
use serde::{Deserialize, Serialize};

pub const ITERATES: &str = "iterates.csv";
pub const SUMMARY: &str = "summary.json";
pub const SOLUTION: &str = "solution.csv";
pub const STATE: &str = "state.csv";

/// Everything needed to rebuild the problem and the final point: with
/// `solution.csv` (the density or control) this reproduces 𝓛 and the KKT
/// residuals offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: ProblemId,
    pub params: ProblemParams,
    pub solver: SolverConfig,
    pub status: SolveStatus,
    pub converged: bool,
    pub iterations: usize,
    pub rounds: usize,
    pub wall_time: f64,
    /// Penalty parameter at the final point.
    pub c: f64,
    pub objective: f64,
    pub auglag: f64,
    pub kkt: KktResidual,
    pub kkt_max: f64,
    pub sigma_max: f64,
    pub primal_norm: f64,
    pub lambda_norm: f64,
    /// Leading finite-dimensional part of the primal variable (`y` for
    /// boundary problems, empty otherwise).
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub reference: Option<ReferenceSummary>,
    pub reference_error: Option<String>,
    pub controllability: Option<ControllabilityReport>,
    pub propagator: Option<PropagatorMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub value: f64,
    pub errors: Comparison,
}

impl Summary {
    pub fn new(b: &Benchmark, solver: &SolverConfig, r: &SolveResult) -> Self {
        let p = b.problem();
        let (reference, reference_error) = match b.reference() {
            Ok(rf) => (Some(ReferenceSummary { value: rf.value, errors: b.compare(&r.x, &r.dual.lambda, &rf) }), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let oc = b.control_problem();
        Self {
            problem: b.id,
            params: b.params.clone(),
            solver: solver.clone(),
            status: r.status,
            converged: r.converged(),
            iterations: r.iterations,
            rounds: r.rounds,
            wall_time: r.wall_time,
            c: r.dual.c,
            objective: r.objective,
            auglag: r.auglag,
            kkt: r.kkt,
            kkt_max: r.kkt.max(),
            sigma_max: r.sigma_max,
            primal_norm: weighted_norm(p.primal_weights(), &r.x),
            lambda_norm: weighted_norm(p.multiplier_weights(), &r.dual.lambda),
            y: b.primal_head(&r.x),
            lambda: r.dual.lambda.iter().cloned().collect(),
            mu: r.dual.mu.iter().cloned().collect(),
            reference,
            reference_error,
            controllability: oc.map(|p| p.controllability()),
            propagator: oc.map(|p| p.system().mode()),
        }
    }
}

/// Writes the run artifacts into `dir` and returns their paths.
pub fn write_run(dir: &Path, b: &Benchmark, summary: &Summary, r: &SolveResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = [
        (ITERATES, r.log_csv()),
        (SUMMARY, serde_json::to_string_pretty(summary)? + "\n"),
        (SOLUTION, b.primal_csv(&r.x)),
        (STATE, b.state(&r.x).to_csv()),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
