//! Run configuration: a JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use auglag::{GradientMode, ProblemId, ProblemParams, SolverConfig};
use serde::{Deserialize, Serialize};

/// Default penalty list of the `sweep` subcommand.
pub const DEFAULT_C_LIST: [f64; 8] = [0.01, 0.1, 1.0, 10.0, 100.0, 1e3, 1e4, 1e5];

/// Schema of `--config` files. Every field is optional.
///
/// ```json
/// {
///   "problem": "iso-dirichlet",
///   "params": { "cells": 200, "zeta": 1.0 },
///   "solver": { "c0": 1.0, "tol": 1e-8 },
///   "out": "out/iso",
///   "seed": 7,
///   "c_list": [0.01, 0.1, 1, 10]
/// }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemId>,
    pub params: ProblemParams,
    pub solver: SolverConfig,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub c_list: Option<Vec<f64>>,
}

/// Flags shared by the subcommands; `None` keeps the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub problem: Option<String>,
    pub out: Option<PathBuf>,
    pub c0: Option<f64>,
    pub tol: Option<f64>,
    pub mode: Option<GradientMode>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub c_list: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed config {}", path.display()))
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(p) = &o.problem {
            self.problem = Some(p.parse()?);
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(c0) = o.c0 {
            self.solver.c0 = c0;
        }
        if let Some(tol) = o.tol {
            self.solver.tol = tol;
        }
        if let Some(mode) = o.mode {
            self.solver.gradient_mode = mode;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(n) = o.max_iter {
            self.solver.max_inner_iterations = n;
        }
        if let Some(c) = &o.c_list {
            self.c_list = Some(c.clone());
        }
        self.solver.validate()?;
        Ok(self)
    }

    pub fn problem(&self) -> Result<ProblemId> {
        match self.problem {
            Some(id) => Ok(id),
            None => bail!("no problem given (use --problem or the config's \"problem\" field)"),
        }
    }

    pub fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out").join(default))
    }

    pub fn c_list(&self) -> Vec<f64> {
        self.c_list.clone().unwrap_or_else(|| DEFAULT_C_LIST.to_vec())
    }
}
