//! Joint minimisation of 𝓛 over `(x, λ, μ)` with a penalty safeguard loop.
//!
//! The inner solver is limited-memory BFGS (or plain gradient descent) with
//! Armijo backtracking in the weighted product space `X × H × ℝ^m`. After each
//! inner solve the constraint violation `θ` is compared with the previous
//! round; insufficient progress multiplies `c` by `τ`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auglag::{
    analytic_gradient, constraint_violation, eval_q_form, estimate_sigma_max, evaluate, fd_gradient, kkt_from_evaluation,
    weighted_dot, AugLagGradient, ConstrainedProblem, DualState, Evaluation, GradientMode, KktResidual, Vector,
};
use crate::error::{Error, Result};

const MAX_BACKTRACKS: usize = 60;
const STALL_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    GradientDescent,
    #[default]
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: InnerMethod,
    pub memory: usize,
    pub max_inner_iterations: usize,
    /// KKT tolerance, scaled by `1 + |f(x)|`.
    pub tol: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub c0: f64,
    /// Penalty growth factor `τ`.
    pub growth: f64,
    /// Required violation shrink factor `ρ`.
    pub shrink: f64,
    pub max_outer_rounds: usize,
    pub gradient_mode: GradientMode,
    /// Audit analytic against finite-difference gradients at the start and
    /// final points.
    pub audit: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: InnerMethod::Lbfgs,
            memory: 10,
            max_inner_iterations: 5000,
            tol: 1e-8,
            armijo: 1e-4,
            backtrack: 0.5,
            c0: 1.0,
            growth: 10.0,
            shrink: 0.25,
            max_outer_rounds: 8,
            gradient_mode: GradientMode::Analytic,
            audit: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid solver config: {what}")));
        if self.method == InnerMethod::Lbfgs && self.memory == 0 {
            return bad("memory must be positive");
        }
        if self.max_inner_iterations == 0 || self.max_outer_rounds == 0 {
            return bad("iteration budgets must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo must lie in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.c0 > 0.0) || !self.c0.is_finite() {
            return bad("c0 must be positive");
        }
        if !(self.growth > 1.0) {
            return bad("growth must exceed 1");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        Ok(())
    }

    /// `tol · (1 + |f|)`.
    pub fn kkt_tolerance(&self, objective: f64) -> f64 {
        self.tol * (1.0 + objective.abs())
    }
}

/// Starting triple `(x₀, λ₀, μ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    pub x: Vector,
    pub lambda: Vector,
    pub mu: Vector,
}

impl InitialPoint {
    pub fn zeros<P: ConstrainedProblem + ?Sized>(problem: &P) -> Self {
        Self {
            x: Vector::zeros(problem.primal_weights().len()),
            lambda: Vector::zeros(problem.multiplier_weights().len()),
            mu: Vector::zeros(problem.ineq_count()),
        }
    }

    pub fn primal<P: ConstrainedProblem + ?Sized>(problem: &P, x: Vector) -> Self {
        Self { x, ..Self::zeros(problem) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LineSearchFailure,
}

/// One row of the iterate log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub round: usize,
    pub auglag: f64,
    pub objective: f64,
    pub eq_norm: f64,
    pub ineq_violation: f64,
    pub eta: f64,
    pub kkt: KktResidual,
    pub c: f64,
    /// Accepted step length; 0 for the first row of a round.
    pub step: f64,
}

impl LogRow {
    pub const HEADER: &'static str = "iteration,round,auglag,objective,eq_norm,ineq_violation,eta,stationarity,feasibility_eq,feasibility_ineq,complementarity,sign,c,step";

    pub fn to_csv(&self) -> String {
        let floats = [
            self.auglag,
            self.objective,
            self.eq_norm,
            self.ineq_violation,
            self.eta,
            self.kkt.stationarity,
            self.kkt.feasibility_eq,
            self.kkt.feasibility_ineq,
            self.kkt.complementarity,
            self.kkt.sign,
            self.c,
            self.step,
        ];
        let mut s = format!("{},{}", self.iteration, self.round);
        for v in floats {
            s.push_str(&format!(",{v:.16e}"));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub x: Vector,
    pub dual: DualState,
    pub status: SolveStatus,
    pub log: Vec<LogRow>,
    pub kkt: KktResidual,
    pub auglag: f64,
    pub objective: f64,
    pub sigma_max: f64,
    pub iterations: usize,
    pub rounds: usize,
    pub wall_time: f64,
    pub audit: Option<Vec<AuditReport>>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from(LogRow::HEADER);
        s.push('\n');
        for row in &self.log {
            s.push_str(&row.to_csv());
            s.push('\n');
        }
        s
    }
}

/// Layout of the joint variable `z = (x, λ, μ)`.
struct Space {
    weights: Vec<f64>,
    nx: usize,
    nl: usize,
}

impl Space {
    fn new<P: ConstrainedProblem + ?Sized>(p: &P) -> Self {
        let mut weights = p.primal_weights().to_vec();
        weights.extend_from_slice(p.multiplier_weights());
        weights.extend(std::iter::repeat_n(1.0, p.ineq_count()));
        Self { weights, nx: p.primal_weights().len(), nl: p.multiplier_weights().len() }
    }

    fn join(&self, x: &Vector, l: &Vector, m: &Vector) -> Vector {
        Vector::from_iterator(self.weights.len(), x.iter().chain(l.iter()).chain(m.iter()).cloned())
    }

    fn split(&self, z: &Vector, c: f64) -> (Vector, DualState) {
        let n = self.weights.len();
        let x = z.rows(0, self.nx).into_owned();
        let lambda = z.rows(self.nx, self.nl).into_owned();
        let mu = z.rows(self.nx + self.nl, n - self.nx - self.nl).into_owned();
        (x, DualState { lambda, mu, c })
    }

    fn dot(&self, a: &Vector, b: &Vector) -> f64 {
        weighted_dot(&self.weights, a, b)
    }
}

struct Point {
    z: Vector,
    value: f64,
    grad: Vector,
    eval: Evaluation,
    kkt: KktResidual,
}

fn eval_point<P: ConstrainedProblem + ?Sized>(p: &P, s: &Space, z: Vector, c: f64, mode: GradientMode) -> Result<Point> {
    let (x, dual) = s.split(&z, c);
    let eval = evaluate(p, &x, &dual)?;
    let g = match mode {
        GradientMode::Analytic => analytic_gradient(p, &x, &dual, &eval)?,
        GradientMode::FiniteDifference => fd_gradient(p, &x, &dual)?,
    };
    let grad = s.join(&g.x, &g.lambda, &g.mu);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient of the augmented Lagrangian"));
    }
    let kkt = kkt_from_evaluation(p, &dual, &eval);
    Ok(Point { value: eval.value, z, grad, eval, kkt })
}

fn log_row(pt: &Point, iteration: usize, round: usize, c: f64, step: f64) -> LogRow {
    LogRow {
        iteration,
        round,
        auglag: pt.value,
        objective: pt.eval.objective,
        eq_norm: pt.kkt.feasibility_eq,
        ineq_violation: pt.eval.ineq.iter().map(|g| g.max(0.0).powi(2)).sum::<f64>().sqrt(),
        eta: pt.eval.eta,
        kkt: pt.kkt,
        c,
        step,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InnerExit {
    Kkt,
    Stationary,
    Budget,
    LineSearch,
}

struct Inner<'a, P: ConstrainedProblem + ?Sized> {
    p: &'a P,
    s: &'a Space,
    cfg: &'a SolverConfig,
    c: f64,
    round: usize,
}

impl<P: ConstrainedProblem + ?Sized> Inner<'_, P> {
    fn project(&self, z: &mut Vector) {
        let mut x = z.rows(0, self.s.nx).into_owned();
        self.p.project_primal(&mut x);
        z.rows_mut(0, self.s.nx).copy_from(&x);
    }

    fn done(&self, pt: &Point) -> bool {
        pt.kkt.max() <= self.cfg.kkt_tolerance(pt.eval.objective)
    }

    fn direction(&self, g: &Vector, memory: &[(Vector, Vector, f64)]) -> Vector {
        if self.cfg.method == InnerMethod::GradientDescent || memory.is_empty() {
            return -g;
        }
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (sv, yv, rho) in memory.iter().rev() {
            let a = rho * self.s.dot(sv, &q);
            q.axpy(-a, yv, 1.0);
            alphas.push(a);
        }
        let (sv, yv, _) = memory.last().expect("nonempty");
        q *= self.s.dot(sv, yv) / self.s.dot(yv, yv);
        for ((sv, yv, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
            let b = rho * self.s.dot(yv, &q);
            q.axpy(a - b, sv, 1.0);
        }
        -q
    }

    /// Backtracking along `d`. A trial is accepted on the Armijo test; when
    /// the value difference is lost in rounding, on a non-increasing value
    /// together with the Armijo test for the trapezoidal estimate of the
    /// decrease. The flag reports acceptance through the second test.
    fn line_search(&self, pt: &Point, d: &Vector, mut alpha: f64) -> Result<Option<(Point, f64, bool)>> {
        let slope = self.s.dot(&pt.grad, d);
        for _ in 0..MAX_BACKTRACKS {
            let mut z = &pt.z + d * alpha;
            self.project(&mut z);
            match eval_point(self.p, self.s, z, self.c, self.cfg.gradient_mode) {
                Ok(trial) => {
                    let bound = self.cfg.armijo * alpha * slope;
                    let estimate = 0.5 * alpha * (slope + self.s.dot(&trial.grad, d));
                    if trial.value - pt.value <= bound {
                        return Ok(Some((trial, alpha, false)));
                    }
                    if trial.value <= pt.value && estimate <= bound {
                        return Ok(Some((trial, alpha, true)));
                    }
                }
                Err(Error::NonFinite(_)) => {}
                Err(e) => return Err(e),
            }
            alpha *= self.cfg.backtrack;
        }
        Ok(None)
    }

    fn run(&self, mut pt: Point, iteration: &mut usize, log: &mut Vec<LogRow>) -> Result<(Point, InnerExit)> {
        let mut memory: Vec<(Vector, Vector, f64)> = Vec::new();
        let mut gd_step = 1.0;
        let mut stalls = 0;
        for _ in 0..self.cfg.max_inner_iterations {
            if self.done(&pt) {
                return Ok((pt, InnerExit::Kkt));
            }
            let gnorm = self.s.dot(&pt.grad, &pt.grad).sqrt();
            if gnorm == 0.0 {
                return Ok((pt, InnerExit::Stationary));
            }
            let mut d = self.direction(&pt.grad, &memory);
            if self.s.dot(&pt.grad, &d) >= 0.0 {
                memory.clear();
                d = -&pt.grad;
            }
            let first = match self.cfg.method {
                InnerMethod::Lbfgs if !memory.is_empty() => 1.0,
                InnerMethod::Lbfgs => 1.0 / gnorm.max(1.0),
                InnerMethod::GradientDescent => gd_step,
            };
            let accepted = match self.line_search(&pt, &d, first)? {
                Some(found) => Some(found),
                None if !memory.is_empty() => {
                    memory.clear();
                    d = -&pt.grad;
                    self.line_search(&pt, &d, 1.0 / gnorm.max(1.0))?
                }
                None => None,
            };
            let Some((next, alpha, rounding)) = accepted else {
                return Ok((pt, InnerExit::LineSearch));
            };
            // A run of steps whose decrease is invisible in 𝓛 means the
            // iterate sits at a stationary point up to rounding.
            stalls = if rounding { stalls + 1 } else { 0 };
            gd_step = (2.0 * alpha).min(1e8);
            let sv = &next.z - &pt.z;
            let yv = &next.grad - &pt.grad;
            let sy = self.s.dot(&sv, &yv);
            if sy > 1e-14 * self.s.dot(&sv, &sv).sqrt() * self.s.dot(&yv, &yv).sqrt() && sy > 0.0 {
                if memory.len() == self.cfg.memory {
                    memory.remove(0);
                }
                memory.push((sv, yv, 1.0 / sy));
            }
            *iteration += 1;
            log.push(log_row(&next, *iteration, self.round, self.c, alpha));
            pt = next;
            if stalls >= STALL_LIMIT && !self.done(&pt) {
                return Ok((pt, InnerExit::Stationary));
            }
        }
        if self.done(&pt) {
            Ok((pt, InnerExit::Kkt))
        } else {
            Ok((pt, InnerExit::Budget))
        }
    }
}

fn sigma_at<P: ConstrainedProblem + ?Sized>(p: &P, x: &Vector) -> Result<f64> {
    match estimate_sigma_max(&eval_q_form(p, x), 1e-10) {
        Ok(s) => Ok(s),
        Err(Error::IterationBudget { best, .. }) => Ok(best),
        Err(e) => Err(e),
    }
}

/// Minimises `𝓛(·, ·, ·, c)` jointly, raising `c` when the violation does not
/// shrink by the factor `ρ` between rounds.
pub fn minimize_auglag<P: ConstrainedProblem + ?Sized>(p: &P, init: &InitialPoint, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let start = Instant::now();
    let s = Space::new(p);
    if init.x.len() != s.nx || init.lambda.len() != s.nl || init.mu.len() != p.ineq_count() {
        return Err(Error::Shape("initial point does not match the problem".into()));
    }
    let mut x0 = init.x.clone();
    p.project_primal(&mut x0);

    let mut audit = None;
    if cfg.audit {
        let dual = DualState::new(init.lambda.clone(), init.mu.clone(), cfg.c0);
        audit = Some(vec![audit_gradients(p, &[(x0.clone(), dual)], 1e-6)?]);
    }

    let mut c = cfg.c0;
    let mut pt = eval_point(p, &s, s.join(&x0, &init.lambda, &init.mu), c, cfg.gradient_mode)?;
    let mut iteration = 0;
    let mut log = vec![log_row(&pt, 0, 0, c, 0.0)];
    let mut status = SolveStatus::MaxIter;
    let mut theta_prev = f64::INFINITY;
    let mut rounds = 0;
    for round in 0..cfg.max_outer_rounds {
        rounds = round + 1;
        if round > 0 {
            pt = eval_point(p, &s, pt.z, c, cfg.gradient_mode)?;
            log.push(log_row(&pt, iteration, round, c, 0.0));
        }
        let inner = Inner { p, s: &s, cfg, c, round };
        let (next, exit) = inner.run(pt, &mut iteration, &mut log)?;
        pt = next;
        if exit == InnerExit::Kkt {
            status = SolveStatus::Converged;
            break;
        }
        status = if exit == InnerExit::LineSearch { SolveStatus::LineSearchFailure } else { SolveStatus::MaxIter };
        let (x, _) = s.split(&pt.z, c);
        let theta = constraint_violation(p, &x);
        if exit != InnerExit::Budget || theta > cfg.shrink * theta_prev {
            c *= cfg.growth;
        }
        theta_prev = theta;
    }

    // `c` may already have been raised for a round that never ran.
    let (x, dual) = s.split(&pt.z, log.last().map_or(c, |r| r.c));
    if let Some(reports) = audit.as_mut() {
        reports.push(audit_gradients(p, &[(x.clone(), dual.clone())], 1e-6)?);
    }
    Ok(SolveResult {
        sigma_max: sigma_at(p, &x)?,
        kkt: pt.kkt,
        auglag: pt.value,
        objective: pt.eval.objective,
        x,
        dual,
        status,
        log,
        iterations: iteration,
        rounds,
        wall_time: start.elapsed().as_secs_f64(),
        audit,
    })
}

/// One row of an exactness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    /// Minimum of 𝓛 found at this `c`.
    pub auglag: f64,
    pub objective: f64,
    /// `auglag − oracle value`.
    pub gap: f64,
    pub kkt: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub oracle_value: f64,
    pub tol: f64,
    pub rows: Vec<SweepRow>,
    /// First `c` with `|gap| ≤ tol`.
    pub threshold: Option<f64>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("c,auglag,objective,gap,kkt,status,iterations\n");
        for r in &self.rows {
            let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}\n",
                r.c, r.auglag, r.objective, r.gap, r.kkt, status, r.iterations
            ));
        }
        s
    }
}

/// One fixed-`c` solve per entry of `c_list`, compared with a known optimal
/// value.
pub fn exactness_sweep<P: ConstrainedProblem + ?Sized>(
    p: &P,
    init: &InitialPoint,
    c_list: &[f64],
    cfg: &SolverConfig,
    oracle_value: f64,
    tol: f64,
) -> Result<SweepTable> {
    if c_list.is_empty() {
        return Err(Error::Config("c_list is empty".into()));
    }
    if c_list.iter().any(|c| !(*c > 0.0) || !c.is_finite()) || c_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("c_list must be positive and strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(c_list.len());
    for &c in c_list {
        let fixed = SolverConfig { c0: c, max_outer_rounds: 1, ..cfg.clone() };
        let r = minimize_auglag(p, init, &fixed)?;
        rows.push(SweepRow {
            c,
            auglag: r.auglag,
            objective: r.objective,
            gap: r.auglag - oracle_value,
            kkt: r.kkt.max(),
            status: r.status,
            iterations: r.iterations,
        });
    }
    let threshold = rows.iter().find(|r| r.gap.abs() <= tol).map(|r| r.c);
    Ok(SweepTable { oracle_value, tol, rows, threshold })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    X,
    Lambda,
    Mu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub point: usize,
    pub block: Block,
    pub analytic_norm: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tol: f64,
    pub rows: Vec<AuditRow>,
    pub pass: bool,
}

impl AuditReport {
    pub fn worst(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditRow> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

/// Relative error between analytic and central-difference gradients, per
/// point and block, in the weighted norms.
pub fn audit_gradients<P: ConstrainedProblem + ?Sized>(p: &P, points: &[(Vector, DualState)], tol: f64) -> Result<AuditReport> {
    if !(tol > 0.0) {
        return Err(Error::Config("audit tolerance must be positive".into()));
    }
    let pw = p.primal_weights();
    let hw = p.multiplier_weights();
    let ones = vec![1.0; p.ineq_count()];
    let mut rows = Vec::new();
    for (k, (x, dual)) in points.iter().enumerate() {
        let eval = evaluate(p, x, dual)?;
        let a: AugLagGradient = analytic_gradient(p, x, dual, &eval)?;
        let f = fd_gradient(p, x, dual)?;
        for (block, w, ga, gf) in [(Block::X, pw, &a.x, &f.x), (Block::Lambda, hw, &a.lambda, &f.lambda), (Block::Mu, &ones[..], &a.mu, &f.mu)] {
            let diff = ga - gf;
            let abs_error = weighted_dot(w, &diff, &diff).sqrt();
            let na = weighted_dot(w, ga, ga).sqrt();
            let nf = weighted_dot(w, gf, gf).sqrt();
            let scale = na.max(nf);
            let rel_error = if abs_error == 0.0 { 0.0 } else { abs_error / scale.max(f64::MIN_POSITIVE) };
            rows.push(AuditRow { point: k, block, analytic_norm: na, abs_error, rel_error, pass: rel_error <= tol });
        }
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(AuditReport { tol, rows, pass })
}

/// Reproducible random audit points: `x`, `λ` and `μ` with standard normal-ish
/// uniform entries of size `scale`, `c ∈ [0.5, 50]`.
pub fn random_audit_points<P: ConstrainedProblem + ?Sized>(p: &P, count: usize, seed: u64, scale: f64) -> Vec<(Vector, DualState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = p.primal_weights().len();
    let nl = p.multiplier_weights().len();
    let m = p.ineq_count();
    (0..count)
        .map(|_| {
            let mut x = Vector::from_fn(nx, |_, _| scale * rng.gen_range(-1.0..1.0));
            p.project_primal(&mut x);
            let lambda = Vector::from_fn(nl, |_, _| scale * rng.gen_range(-1.0..1.0));
            let mu = Vector::from_fn(m, |_, _| scale * rng.gen_range(-1.0..1.0));
            let c = 0.5 * 100f64.powf(rng.gen_range(0.0..1.0));
            (x, DualState { lambda, mu, c })
        })
        .collect()
}
