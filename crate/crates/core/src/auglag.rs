//! The exact augmented Lagrangian over an abstract problem interface.
//!
//! For `min f(x)` s.t. `F(x) = 0`, `g(x) ≤ 0` with `f: X → ℝ`, `F: X → H`,
//! `g: X → ℝ^m` the function is
//!
//! ```text
//! 𝓛(x, λ, μ, c) = f + ⟨λ, F⟩ + (c/2)(1 + ‖λ‖²)‖F‖²
//!               + ⟨μ, M⟩ + (c / 2p)|M|² + η(x, λ, μ)
//! M = max{g, −(p/c) μ},   p = 1 / (1 + |μ|²)
//! η = ½‖DF[∇ₓL]‖² + ½ Σᵢ (⟨∇gᵢ, ∇ₓL⟩ + gᵢ² μᵢ)²
//! ```
//!
//! `X` and `H` are weighted Euclidean spaces: every coordinate carries a
//! quadrature weight and all gradients are Riesz representers under the
//! weighted inner product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Oracle bundle for a constrained problem over a weighted Hilbert space.
///
/// `eq_apply` and `eq_adjoint` must be mutually adjoint under the weighted
/// inner products. Problems whose primal variable lives in a closed subspace
/// override [`ConstrainedProblem::project_primal`]; every gradient-like
/// output must already lie in that subspace.
pub trait ConstrainedProblem {
    /// Quadrature weights of the primal space `X`.
    fn primal_weights(&self) -> &[f64];
    /// Quadrature weights of the equality-multiplier space `H`.
    fn multiplier_weights(&self) -> &[f64];
    fn ineq_count(&self) -> usize {
        0
    }
    /// True when `H` is a space of grid functions rather than `ℝ^ℓ`.
    fn multiplier_is_grid(&self) -> bool {
        false
    }
    /// Orthogonal projection onto the admissible primal subspace.
    fn project_primal(&self, _x: &mut Vector) {}

    fn objective(&self, x: &Vector) -> f64;
    fn objective_grad(&self, x: &Vector) -> Vector;
    fn eq_map(&self, x: &Vector) -> Vector;
    /// `DF(x)[w]`.
    fn eq_apply(&self, x: &Vector, w: &Vector) -> Vector;
    /// `DF(x)*[λ]`.
    fn eq_adjoint(&self, x: &Vector, lambda: &Vector) -> Vector;
    fn ineq_map(&self, _x: &Vector) -> Vector {
        Vector::zeros(0)
    }
    fn ineq_grad(&self, _x: &Vector, i: usize) -> Vector {
        panic!("problem has no inequality constraint {i}")
    }

    /// `∇²f(x) w`.
    fn objective_hvp(&self, _x: &Vector, _w: &Vector) -> Option<Vector> {
        None
    }
    /// Directional derivative of `x ↦ DF(x)*[λ]` along `w`.
    fn eq_adjoint_derivative(&self, _x: &Vector, _lambda: &Vector, _w: &Vector) -> Option<Vector> {
        None
    }
    /// `Σᵢ μᵢ ∇²gᵢ(x) w`.
    fn ineq_hvp(&self, x: &Vector, _mu: &Vector, _w: &Vector) -> Option<Vector> {
        if self.ineq_count() == 0 {
            Some(Vector::zeros(x.len()))
        } else {
            None
        }
    }

    /// Directional derivative of `∇ₓL(·, λ, μ)` along `w`.
    fn lagrangian_hvp(&self, x: &Vector, lambda: &Vector, mu: &Vector, w: &Vector) -> Option<Vector> {
        let mut out = self.objective_hvp(x, w)?;
        out += self.eq_adjoint_derivative(x, lambda, w)?;
        out += self.ineq_hvp(x, mu, w)?;
        Some(out)
    }

    fn has_second_order(&self) -> bool {
        let x = Vector::zeros(self.primal_weights().len());
        let lambda = Vector::zeros(self.multiplier_weights().len());
        let mu = Vector::zeros(self.ineq_count());
        self.lagrangian_hvp(&x, &lambda, &mu, &x).is_some()
    }
}

pub fn weighted_dot(weights: &[f64], a: &Vector, b: &Vector) -> f64 {
    weights.iter().zip(a.iter().zip(b.iter())).map(|(w, (x, y))| w * x * y).sum()
}

pub fn weighted_norm(weights: &[f64], a: &Vector) -> f64 {
    weighted_dot(weights, a, a).sqrt()
}

/// Multipliers and penalty parameter `(λ, μ, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vector,
    pub mu: Vector,
    pub c: f64,
}

impl DualState {
    pub fn new(lambda: Vector, mu: Vector, c: f64) -> Self {
        Self { lambda, mu, c }
    }

    pub fn zeros<P: ConstrainedProblem + ?Sized>(problem: &P, c: f64) -> Self {
        Self {
            lambda: Vector::zeros(problem.multiplier_weights().len()),
            mu: Vector::zeros(problem.ineq_count()),
            c,
        }
    }
}

/// Every quantity needed for 𝓛 and its gradient at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub eq: Vector,
    pub ineq: Vector,
    pub ineq_grads: Vec<Vector>,
    /// `∇ₓL(x, λ, μ)`.
    pub lagrangian_grad: Vector,
    /// `DF(x)[∇ₓL]`.
    pub eq_of_grad: Vector,
    /// `⟨∇gᵢ, ∇ₓL⟩ + gᵢ² μᵢ`.
    pub ineq_residual: Vector,
    pub eta: f64,
    /// Coordinates where `max{gᵢ, −(p/c) μᵢ}` takes the `gᵢ` branch.
    pub ineq_branch: Vec<bool>,
    pub value: f64,
}

fn check_shapes<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector, dual: &DualState) -> Result<()> {
    let nx = problem.primal_weights().len();
    if x.len() != nx {
        return Err(Error::Shape(format!("primal point has {} entries, expected {nx}", x.len())));
    }
    let nl = problem.multiplier_weights().len();
    if dual.lambda.len() != nl {
        return Err(Error::Shape(format!("λ has {} entries, expected {nl}", dual.lambda.len())));
    }
    let m = problem.ineq_count();
    if dual.mu.len() != m {
        return Err(Error::Shape(format!("μ has {} entries, expected {m}", dual.mu.len())));
    }
    Ok(())
}

fn finite(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `p(μ) = 1 / (1 + |μ|²)`.
pub fn p_factor(mu: &Vector) -> f64 {
    1.0 / (1.0 + mu.norm_squared())
}

/// Evaluates every term of 𝓛 at `(x, λ, μ, c)`.
pub fn evaluate<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector, dual: &DualState) -> Result<Evaluation> {
    check_shapes(problem, x, dual)?;
    let c = dual.c;
    if !(c > 0.0) {
        return Err(Error::NonPositivePenalty(c));
    }
    let pw = problem.primal_weights();
    let hw = problem.multiplier_weights();
    let (lambda, mu) = (&dual.lambda, &dual.mu);

    let objective = problem.objective(x);
    if !objective.is_finite() {
        return Err(Error::NonFinite("objective"));
    }
    let eq = problem.eq_map(x);
    finite(&eq, "equality constraints")?;
    let ineq = problem.ineq_map(x);
    finite(&ineq, "inequality constraints")?;
    let ineq_grads: Vec<Vector> = (0..ineq.len()).map(|i| problem.ineq_grad(x, i)).collect();

    let mut grad = problem.objective_grad(x);
    grad += problem.eq_adjoint(x, lambda);
    for (gi, mi) in ineq_grads.iter().zip(mu.iter()) {
        grad.axpy(*mi, gi, 1.0);
    }
    finite(&grad, "Lagrangian gradient")?;

    let eq_of_grad = problem.eq_apply(x, &grad);
    let ineq_residual = Vector::from_iterator(
        ineq.len(),
        (0..ineq.len()).map(|i| weighted_dot(pw, &ineq_grads[i], &grad) + ineq[i] * ineq[i] * mu[i]),
    );
    let eta = 0.5 * weighted_dot(hw, &eq_of_grad, &eq_of_grad) + 0.5 * ineq_residual.norm_squared();

    let p = p_factor(mu);
    let eq_sq = weighted_dot(hw, &eq, &eq);
    let mut value = objective + weighted_dot(hw, lambda, &eq) + 0.5 * c * (1.0 + weighted_dot(hw, lambda, lambda)) * eq_sq;
    let mut ineq_branch = Vec::with_capacity(ineq.len());
    for i in 0..ineq.len() {
        let alt = -p * mu[i] / c;
        // Ties go to the g-branch.
        let on_g = ineq[i] >= alt;
        let m_i = if on_g { ineq[i] } else { alt };
        value += mu[i] * m_i + c / (2.0 * p) * m_i * m_i;
        ineq_branch.push(on_g);
    }
    value += eta;

    Ok(Evaluation {
        objective,
        eq,
        ineq,
        ineq_grads,
        lagrangian_grad: grad,
        eq_of_grad,
        ineq_residual,
        eta,
        ineq_branch,
        value,
    })
}

/// `L(x, λ, μ) = f + ⟨λ, F⟩ + ⟨μ, g⟩`.
pub fn eval_classical_lagrangian<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector, dual: &DualState) -> Result<f64> {
    check_shapes(problem, x, dual)?;
    let f = problem.objective(x);
    let eq = problem.eq_map(x);
    let ineq = problem.ineq_map(x);
    let value = f + weighted_dot(problem.multiplier_weights(), &dual.lambda, &eq) + dual.mu.dot(&ineq);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite("classical Lagrangian"))
    }
}

pub fn eval_eta<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector, dual: &DualState) -> Result<f64> {
    Ok(evaluate(problem, x, dual)?.eta)
}

pub fn eval_augmented_lagrangian<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector, dual: &DualState) -> Result<f64> {
    Ok(evaluate(problem, x, dual)?.value)
}

/// How gradients of 𝓛 are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// Gradient of 𝓛 in `(x, λ, μ)` at fixed `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugLagGradient {
    pub x: Vector,
    pub lambda: Vector,
    pub mu: Vector,
}

pub fn grad_augmented_lagrangian<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    x: &Vector,
    dual: &DualState,
    mode: GradientMode,
) -> Result<AugLagGradient> {
    match mode {
        GradientMode::Analytic => {
            let eval = evaluate(problem, x, dual)?;
            analytic_gradient(problem, x, dual, &eval)
        }
        GradientMode::FiniteDifference => fd_gradient(problem, x, dual),
    }
}

/// Chain rule through every term of 𝓛. Needs the second-order oracles for η.
pub fn analytic_gradient<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    x: &Vector,
    dual: &DualState,
    eval: &Evaluation,
) -> Result<AugLagGradient> {
    let pw = problem.primal_weights();
    let hw = problem.multiplier_weights();
    let (lambda, mu, c) = (&dual.lambda, &dual.mu, dual.c);
    let m = eval.ineq.len();
    let p = p_factor(mu);
    let lambda_sq = weighted_dot(hw, lambda, lambda);
    let eq_sq = weighted_dot(hw, &eval.eq, &eval.eq);

    // f + ⟨λ, F⟩ + (c/2)(1 + ‖λ‖²)‖F‖²
    let mut gx = problem.objective_grad(x);
    let eq_weight = lambda + &eval.eq * (c * (1.0 + lambda_sq));
    gx += problem.eq_adjoint(x, &eq_weight);
    let mut gl = &eval.eq + lambda * (c * eq_sq);
    let mut gm = Vector::zeros(m);

    // Inequality block.
    let g_sq_on: f64 = (0..m).filter(|&i| eval.ineq_branch[i]).map(|i| eval.ineq[i].powi(2)).sum();
    let mu_sq_off: f64 = (0..m).filter(|&i| !eval.ineq_branch[i]).map(|i| mu[i].powi(2)).sum();
    for i in 0..m {
        if eval.ineq_branch[i] {
            gx.axpy(mu[i] + c / p * eval.ineq[i], &eval.ineq_grads[i], 1.0);
            gm[i] += eval.ineq[i];
        } else {
            gm[i] -= p * mu[i] / c;
        }
        gm[i] += c * mu[i] * g_sq_on + mu[i] * p * p / c * mu_sq_off;
    }

    // η = ½‖s‖² + ½|r|², s = DF[G], r_i = ⟨∇g_i, G⟩ + g_i² μ_i.
    let s = &eval.eq_of_grad;
    let r = &eval.ineq_residual;
    let g = &eval.lagrangian_grad;
    let mut z = problem.eq_adjoint(x, s);
    for i in 0..m {
        z.axpy(r[i], &eval.ineq_grads[i], 1.0);
    }
    let hz = problem.lagrangian_hvp(x, lambda, mu, &z).ok_or(Error::MissingSecondOrder)?;
    gx += hz;
    gx += problem.eq_adjoint_derivative(x, s, g).ok_or(Error::MissingSecondOrder)?;
    gx += problem.ineq_hvp(x, r, g).ok_or(Error::MissingSecondOrder)?;
    for i in 0..m {
        gx.axpy(2.0 * r[i] * eval.ineq[i] * mu[i], &eval.ineq_grads[i], 1.0);
        gm[i] += weighted_dot(pw, &eval.ineq_grads[i], &z) + r[i] * eval.ineq[i].powi(2);
    }
    gl += problem.eq_apply(x, &z);

    problem.project_primal(&mut gx);
    finite(&gx, "gradient")?;
    Ok(AugLagGradient { x: gx, lambda: gl, mu: gm })
}

/// Central differences along the weighted-orthonormal coordinate directions
/// `e_k / √w_k`, with step `1e−6 (1 + ‖block‖)`.
pub fn fd_gradient<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector, dual: &DualState) -> Result<AugLagGradient> {
    check_shapes(problem, x, dual)?;
    let value = |x: &Vector, d: &DualState| eval_augmented_lagrangian(problem, x, d);

    let block = |base: &Vector, weights: &[f64], eval: &dyn Fn(&Vector) -> Result<f64>| -> Result<Vector> {
        let step = 1e-6 * (1.0 + weighted_norm(weights, base));
        let mut out = Vector::zeros(base.len());
        let mut probe = base.clone();
        for k in 0..base.len() {
            let scale = 1.0 / weights[k].sqrt();
            probe[k] = base[k] + step * scale;
            let plus = eval(&probe)?;
            probe[k] = base[k] - step * scale;
            let minus = eval(&probe)?;
            probe[k] = base[k];
            out[k] = (plus - minus) / (2.0 * step) * scale;
        }
        Ok(out)
    };

    let mut gx = block(x, problem.primal_weights(), &|xp| value(xp, dual))?;
    problem.project_primal(&mut gx);
    let gl = block(&dual.lambda, problem.multiplier_weights(), &|lp| {
        value(x, &DualState { lambda: lp.clone(), ..dual.clone() })
    })?;
    let ones = vec![1.0; dual.mu.len()];
    let gm = block(&dual.mu, &ones, &|mp| value(x, &DualState { mu: mp.clone(), ..dual.clone() }))?;
    Ok(AugLagGradient { x: gx, lambda: gl, mu: gm })
}

/// KKT residual components of `(x, λ, μ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility_eq: f64,
    pub feasibility_ineq: f64,
    pub complementarity: f64,
    pub sign: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility_eq)
            .max(self.feasibility_ineq)
            .max(self.complementarity)
            .max(self.sign)
    }

    pub fn is_kkt(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

pub fn kkt_from_evaluation<P: ConstrainedProblem + ?Sized>(problem: &P, dual: &DualState, eval: &Evaluation) -> KktResidual {
    let m = eval.ineq.len();
    KktResidual {
        stationarity: weighted_norm(problem.primal_weights(), &eval.lagrangian_grad),
        feasibility_eq: weighted_norm(problem.multiplier_weights(), &eval.eq),
        feasibility_ineq: (0..m).fold(0.0, |a, i| a.max(eval.ineq[i].max(0.0))),
        complementarity: (0..m).fold(0.0, |a, i| a.max((dual.mu[i] * eval.ineq[i]).abs())),
        sign: (0..m).fold(0.0, |a, i| a.max((-dual.mu[i]).max(0.0))),
    }
}

pub fn kkt_residual<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector, dual: &DualState) -> Result<KktResidual> {
    // c does not enter the residual; evaluate with a valid placeholder.
    let probe = DualState { c: 1.0, ..dual.clone() };
    let eval = evaluate(problem, x, &probe)?;
    Ok(kkt_from_evaluation(problem, dual, &eval))
}

/// `f(x) + c (‖F(x)‖² + |max{g(x), 0}|²)`.
pub fn eval_penalty_function<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositivePenalty(c));
    }
    if x.len() != problem.primal_weights().len() {
        return Err(Error::Shape("primal point has wrong length".into()));
    }
    let value = problem.objective(x) + c * constraint_violation(problem, x);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite("penalty function"))
    }
}

/// `θ = ‖F(x)‖² + |max{g(x), 0}|²`.
pub fn constraint_violation<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector) -> f64 {
    let eq = problem.eq_map(x);
    let ineq = problem.ineq_map(x);
    weighted_dot(problem.multiplier_weights(), &eq, &eq) + ineq.iter().map(|g| g.max(0.0).powi(2)).sum::<f64>()
}

/// The quadratic form `Q(x)[λ, μ] = ½ |K(λ, μ)|²` with
/// `K = J J* + diag(0, g²)` and `J = (DF(x), ∇g(x))`.
pub struct QForm<'a, P: ConstrainedProblem + ?Sized> {
    problem: &'a P,
    x: Vector,
    ineq: Vector,
    ineq_grads: Vec<Vector>,
    matrix: Option<DMatrix<f64>>,
}

impl<'a, P: ConstrainedProblem + ?Sized> QForm<'a, P> {
    pub fn multiplier_dim(&self) -> (usize, usize) {
        (self.problem.multiplier_weights().len(), self.ineq.len())
    }

    /// `K(λ, μ)`; self-adjoint and positive semidefinite.
    pub fn apply_k(&self, lambda: &Vector, mu: &Vector) -> (Vector, Vector) {
        let pw = self.problem.primal_weights();
        let mut z = self.problem.eq_adjoint(&self.x, lambda);
        for (gi, mi) in self.ineq_grads.iter().zip(mu.iter()) {
            z.axpy(*mi, gi, 1.0);
        }
        let kl = self.problem.eq_apply(&self.x, &z);
        let km = Vector::from_iterator(
            mu.len(),
            (0..mu.len()).map(|i| weighted_dot(pw, &self.ineq_grads[i], &z) + self.ineq[i].powi(2) * mu[i]),
        );
        (kl, km)
    }

    pub fn eval(&self, lambda: &Vector, mu: &Vector) -> f64 {
        let (kl, km) = self.apply_k(lambda, mu);
        0.5 * (weighted_dot(self.problem.multiplier_weights(), &kl, &kl) + km.norm_squared())
    }

    /// `E_Q` in the weighted-orthonormal multiplier basis, when assembled.
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        self.matrix.as_ref()
    }

    fn basis(&self, k: usize) -> (Vector, Vector) {
        let (nl, m) = self.multiplier_dim();
        let mut lambda = Vector::zeros(nl);
        let mut mu = Vector::zeros(m);
        if k < nl {
            lambda[k] = 1.0 / self.problem.multiplier_weights()[k].sqrt();
        } else {
            mu[k - nl] = 1.0;
        }
        (lambda, mu)
    }

    /// Assembles `E_Q` by polarization over basis pairs.
    fn assemble(&mut self) {
        let (nl, m) = self.multiplier_dim();
        let n = nl + m;
        let basis: Vec<(Vector, Vector)> = (0..n).map(|k| self.basis(k)).collect();
        let diag: Vec<f64> = basis.iter().map(|(l, u)| self.eval(l, u)).collect();
        let mut e = DMatrix::zeros(n, n);
        for i in 0..n {
            e[(i, i)] = diag[i];
            for j in 0..i {
                let sum_l = &basis[i].0 + &basis[j].0;
                let sum_m = &basis[i].1 + &basis[j].1;
                let v = 0.5 * (self.eval(&sum_l, &sum_m) - diag[i] - diag[j]);
                e[(i, j)] = v;
                e[(j, i)] = v;
            }
        }
        self.matrix = Some(e);
    }
}

/// Builds the Q form at `x`; assembles `E_Q` when the multiplier space is
/// finite-dimensional.
pub fn eval_q_form<'a, P: ConstrainedProblem + ?Sized>(problem: &'a P, x: &Vector) -> QForm<'a, P> {
    let ineq = problem.ineq_map(x);
    let ineq_grads = (0..ineq.len()).map(|i| problem.ineq_grad(x, i)).collect();
    let mut q = QForm { problem, x: x.clone(), ineq, ineq_grads, matrix: None };
    if !problem.multiplier_is_grid() {
        q.assemble();
    }
    q
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Budget for the power iterations of the operator path.
pub const SIGMA_ITERATION_BUDGET: usize = 50_000;

/// `σ_max(Q(x))`: the largest `σ` with `Q[λ, μ] ≥ σ (‖λ‖² + |μ|²)`.
///
/// Finite multiplier spaces use the eigenvalues of `E_Q`. Grid multipliers
/// run a power iteration for `λ_max(K)` followed by one on `λ_max I − K`,
/// and return `½ λ_min(K)²`.
pub fn estimate_sigma_max<P: ConstrainedProblem + ?Sized>(q: &QForm<'_, P>, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    if let Some(e) = q.matrix() {
        return Ok(min_eigenvalue(e).max(0.0));
    }
    let (nl, m) = q.multiplier_dim();
    if nl + m == 0 {
        return Ok(0.0);
    }
    let hw = q.problem.multiplier_weights();
    let norm = |l: &Vector, u: &Vector| (weighted_dot(hw, l, l) + u.norm_squared()).sqrt();
    let dot = |a: &(Vector, Vector), b: &(Vector, Vector)| weighted_dot(hw, &a.0, &b.0) + a.1.dot(&b.1);

    // Deterministic, generic starting vector.
    let start = || {
        let l = Vector::from_iterator(nl, (0..nl).map(|k| 1.0 + ((k * 7919) % 13) as f64 / 13.0));
        let u = Vector::from_iterator(m, (0..m).map(|k| 1.0 + ((k * 104729) % 11) as f64 / 11.0));
        let n = norm(&l, &u);
        (l / n, u / n)
    };

    let power = |shift: Option<f64>| -> Result<f64> {
        let mut v = start();
        let mut prev = f64::NAN;
        for it in 0..SIGMA_ITERATION_BUDGET {
            let (kl, km) = q.apply_k(&v.0, &v.1);
            let w = match shift {
                None => (kl, km),
                Some(s) => (&v.0 * s - kl, &v.1 * s - km),
            };
            let rq = dot(&v, &w);
            let n = norm(&w.0, &w.1);
            if n == 0.0 {
                return Ok(0.0);
            }
            if (rq - prev).abs() < tol * rq.abs().max(1e-300) || (rq - prev).abs() < 1e-300 {
                return Ok(rq);
            }
            prev = rq;
            v = (w.0 / n, w.1 / n);
            if it + 1 == SIGMA_ITERATION_BUDGET {
                break;
            }
        }
        Err(Error::IterationBudget { iterations: SIGMA_ITERATION_BUDGET, best: prev })
    };

    let top = power(None)?;
    let lambda_min = match power(Some(top)) {
        Ok(gap) => top - gap,
        Err(Error::IterationBudget { iterations, best }) => {
            let bound = 0.5 * (top - best).max(0.0).powi(2);
            return Err(Error::IterationBudget { iterations, best: bound });
        }
        Err(e) => return Err(e),
    };
    Ok(0.5 * lambda_min.max(0.0).powi(2))
}

/// One diagnostic CSV row per evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub auglag: f64,
    pub objective: f64,
    pub eq_norm: f64,
    pub ineq_violation: f64,
    pub eta: f64,
    pub kkt: KktResidual,
    pub sigma_max: f64,
}

impl DiagnosticRow {
    pub const HEADER: &'static str =
        "auglag,objective,eq_norm,ineq_violation,eta,stationarity,feasibility_eq,feasibility_ineq,complementarity,sign,sigma_max";

    pub fn to_csv(&self) -> String {
        [
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
            self.sigma_max,
        ]
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn diagnostics<P: ConstrainedProblem + ?Sized>(problem: &P, x: &Vector, dual: &DualState) -> Result<DiagnosticRow> {
    let eval = evaluate(problem, x, dual)?;
    let kkt = kkt_from_evaluation(problem, dual, &eval);
    let q = eval_q_form(problem, x);
    let sigma_max = match estimate_sigma_max(&q, 1e-10) {
        Ok(s) => s,
        Err(Error::IterationBudget { best, .. }) => best,
        Err(e) => return Err(e),
    };
    Ok(DiagnosticRow {
        auglag: eval.value,
        objective: eval.objective,
        eq_norm: kkt.feasibility_eq,
        ineq_violation: eval.ineq.iter().map(|g| g.max(0.0).powi(2)).sum::<f64>().sqrt(),
        eta: eval.eta,
        kkt,
        sigma_max,
    })
}

#[cfg(test)]
pub(crate) mod toy {
    //! Small closed-form problems on `ℝ^n` used across unit tests.
    use super::*;

    /// `f = Σ a_k x_k² / 2 + ⟨b, x⟩`, `F = A x − e`, `g = G x − h`
    /// (or `g_0 = |x|² − r` when `ball` is set).
    pub struct Quadratic {
        pub n: usize,
        pub a: Vec<f64>,
        pub b: Vec<f64>,
        pub eq_rows: DMatrix<f64>,
        pub eq_rhs: Vector,
        pub ineq_rows: DMatrix<f64>,
        pub ineq_rhs: Vector,
        pub ball: Option<f64>,
        pub pw: Vec<f64>,
        pub hw: Vec<f64>,
    }

    impl Quadratic {
        pub fn new(n: usize) -> Self {
            Self {
                n,
                a: vec![1.0; n],
                b: vec![0.0; n],
                eq_rows: DMatrix::zeros(0, n),
                eq_rhs: Vector::zeros(0),
                ineq_rows: DMatrix::zeros(0, n),
                ineq_rhs: Vector::zeros(0),
                ball: None,
                pw: vec![1.0; n],
                hw: vec![],
            }
        }

        pub fn with_eq(mut self, rows: DMatrix<f64>, rhs: Vector) -> Self {
            self.hw = vec![1.0; rows.nrows()];
            self.eq_rows = rows;
            self.eq_rhs = rhs;
            self
        }

        pub fn with_ineq(mut self, rows: DMatrix<f64>, rhs: Vector) -> Self {
            self.ineq_rows = rows;
            self.ineq_rhs = rhs;
            self
        }
    }

    impl ConstrainedProblem for Quadratic {
        fn primal_weights(&self) -> &[f64] {
            &self.pw
        }
        fn multiplier_weights(&self) -> &[f64] {
            &self.hw
        }
        fn ineq_count(&self) -> usize {
            self.ineq_rows.nrows() + usize::from(self.ball.is_some())
        }
        fn objective(&self, x: &Vector) -> f64 {
            (0..self.n).map(|k| 0.5 * self.a[k] * x[k] * x[k] + self.b[k] * x[k]).sum()
        }
        fn objective_grad(&self, x: &Vector) -> Vector {
            Vector::from_iterator(self.n, (0..self.n).map(|k| self.a[k] * x[k] + self.b[k]))
        }
        fn eq_map(&self, x: &Vector) -> Vector {
            &self.eq_rows * x - &self.eq_rhs
        }
        fn eq_apply(&self, _x: &Vector, w: &Vector) -> Vector {
            &self.eq_rows * w
        }
        fn eq_adjoint(&self, _x: &Vector, l: &Vector) -> Vector {
            self.eq_rows.transpose() * l
        }
        fn ineq_map(&self, x: &Vector) -> Vector {
            let mut g: Vec<f64> = (&self.ineq_rows * x - &self.ineq_rhs).iter().cloned().collect();
            if let Some(r) = self.ball {
                g.push(x.norm_squared() - r);
            }
            Vector::from_vec(g)
        }
        fn ineq_grad(&self, x: &Vector, i: usize) -> Vector {
            if i < self.ineq_rows.nrows() {
                self.ineq_rows.row(i).transpose()
            } else {
                x * 2.0
            }
        }
        fn objective_hvp(&self, _x: &Vector, w: &Vector) -> Option<Vector> {
            Some(Vector::from_iterator(self.n, (0..self.n).map(|k| self.a[k] * w[k])))
        }
        fn eq_adjoint_derivative(&self, _x: &Vector, _l: &Vector, w: &Vector) -> Option<Vector> {
            Some(Vector::zeros(w.len()))
        }
        fn ineq_hvp(&self, _x: &Vector, mu: &Vector, w: &Vector) -> Option<Vector> {
            match self.ball {
                Some(_) => Some(w * (2.0 * mu[self.ineq_rows.nrows()])),
                None => Some(Vector::zeros(w.len())),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::toy::Quadratic;
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    fn scalar_eq(shift: f64) -> Quadratic {
        // f = x², F = x − shift
        let mut q = Quadratic::new(1).with_eq(dmatrix![1.0], dvector![shift]);
        q.a = vec![2.0];
        q
    }

    #[test]
    fn classical_lagrangian_examples() {
        let p = scalar_eq(1.0);
        let zero = DualState::zeros(&p, 1.0);
        assert_eq!(eval_classical_lagrangian(&p, &dvector![2.0], &zero).unwrap(), 4.0);
        let d = DualState::new(dvector![3.0], Vector::zeros(0), 1.0);
        assert_eq!(eval_classical_lagrangian(&p, &dvector![2.0], &d).unwrap(), 7.0);
    }

    #[test]
    fn eta_examples() {
        // f = x², F = x, x = 1, λ = 0 → ∇ₓL = 2, DF[2] = 2, η = 2.
        let p = scalar_eq(0.0);
        let d = DualState::zeros(&p, 1.0);
        assert!((eval_eta(&p, &dvector![1.0], &d).unwrap() - 2.0).abs() < 1e-15);
        // Trivial constraint map and m = 0.
        let mut trivial = Quadratic::new(2).with_eq(DMatrix::zeros(1, 2), dvector![0.0]);
        trivial.b = vec![1.0, -2.0];
        let d = DualState::zeros(&trivial, 1.0);
        assert_eq!(eval_eta(&trivial, &dvector![0.3, 0.7], &d).unwrap(), 0.0);
    }

    #[test]
    fn auglag_feasible_equality_example() {
        // f = x², F = x − 1, x = 1, λ = 5, c = 7: 1 + ½(2 + 5)² = 25.5
        let p = scalar_eq(1.0);
        let d = DualState::new(dvector![5.0], Vector::zeros(0), 7.0);
        assert!((eval_augmented_lagrangian(&p, &dvector![1.0], &d).unwrap() - 25.5).abs() < 1e-13);
    }

    #[test]
    fn auglag_inactive_inequality_example() {
        // f = 0, g = x, x = −1, μ = 0, c = 1 → 0
        let mut p = Quadratic::new(1).with_ineq(dmatrix![1.0], dvector![0.0]);
        p.a = vec![0.0];
        let d = DualState::zeros(&p, 1.0);
        assert_eq!(eval_augmented_lagrangian(&p, &dvector![-1.0], &d).unwrap(), 0.0);
    }

    #[test]
    fn rejects_non_positive_penalty_and_bad_shapes() {
        let p = scalar_eq(1.0);
        let d = DualState::new(dvector![0.0], Vector::zeros(0), 0.0);
        assert_eq!(eval_augmented_lagrangian(&p, &dvector![1.0], &d), Err(Error::NonPositivePenalty(0.0)));
        assert!(eval_penalty_function(&p, &dvector![1.0], -1.0).is_err());
        let d = DualState::new(dvector![0.0, 1.0], Vector::zeros(0), 1.0);
        assert!(matches!(eval_augmented_lagrangian(&p, &dvector![1.0], &d), Err(Error::Shape(_))));
    }

    #[test]
    fn penalty_function_examples() {
        let mut p = Quadratic::new(1).with_eq(dmatrix![1.0], dvector![0.0]);
        p.a = vec![0.0];
        assert_eq!(eval_penalty_function(&p, &dvector![2.0], 3.0).unwrap(), 12.0);
        assert_eq!(eval_penalty_function(&p, &dvector![0.0], 3.0).unwrap(), 0.0);
        assert!(eval_penalty_function(&p, &dvector![2.0], 2.0).unwrap() > eval_penalty_function(&p, &dvector![2.0], 1.0).unwrap());
    }

    /// min ½|x|² s.t. x₁ + x₂ = 2, x₁ ≤ 0.5: x* = (0.5, 1.5), λ* = −1.5, μ* = 1.
    fn mixed() -> Quadratic {
        Quadratic::new(2)
            .with_eq(dmatrix![1.0, 1.0], dvector![2.0])
            .with_ineq(dmatrix![1.0, 0.0; 0.0, -1.0], dvector![0.5, 10.0])
    }

    #[test]
    fn kkt_identity_on_mixed_toy() {
        let p = mixed();
        let x = dvector![0.5, 1.5];
        for c in [0.1, 1.0, 10.0, 100.0] {
            let d = DualState::new(dvector![-1.5], dvector![1.0, 0.0], c);
            let k = kkt_residual(&p, &x, &d).unwrap();
            assert!(k.max() < 1e-14, "{k:?}");
            let val = eval_augmented_lagrangian(&p, &x, &d).unwrap();
            assert!((val - p.objective(&x)).abs() < 1e-12);
            assert_eq!(eval_eta(&p, &x, &d).unwrap(), 0.0);
        }
    }

    #[test]
    fn kkt_residual_components() {
        let p = mixed();
        let x = dvector![0.5, 1.5];
        let d = DualState::zeros(&p, 1.0);
        let k = kkt_residual(&p, &x, &d).unwrap();
        assert!((k.stationarity - (0.25f64 + 2.25).sqrt()).abs() < 1e-14);
        assert_eq!(k.feasibility_eq, 0.0);
        assert_eq!(k.feasibility_ineq, 0.0);
        let d = DualState::new(dvector![0.0], dvector![-0.5, 2.0], 1.0);
        assert_eq!(kkt_residual(&p, &x, &d).unwrap().sign, 0.5);
    }

    #[test]
    fn analytic_gradient_matches_fd_on_toys() {
        let mut p = mixed();
        p.ball = Some(3.0);
        p.b = vec![0.3, -0.7];
        let pts = [
            (dvector![0.2, -0.4], dvector![0.7], dvector![0.3, -0.2, 0.5], 2.0),
            (dvector![1.1, 0.9], dvector![-1.2], dvector![-0.1, 0.4, 0.05], 0.5),
            (dvector![-2.0, 1.0], dvector![0.0], dvector![2.0, 0.0, -1.0], 10.0),
        ];
        for (x, l, m, c) in pts {
            let d = DualState::new(l, m, c);
            let a = grad_augmented_lagrangian(&p, &x, &d, GradientMode::Analytic).unwrap();
            let f = grad_augmented_lagrangian(&p, &x, &d, GradientMode::FiniteDifference).unwrap();
            for (ga, gf) in [(&a.x, &f.x), (&a.lambda, &f.lambda), (&a.mu, &f.mu)] {
                let err = (ga - gf).norm() / ga.norm().max(gf.norm()).max(1e-8);
                assert!(err < 1e-6, "{ga} vs {gf}");
            }
        }
    }

    #[test]
    fn monotone_in_penalty() {
        let p = mixed();
        let x = dvector![1.3, -0.2];
        let d = |c| DualState::new(dvector![0.4], dvector![0.2, -0.3], c);
        let mut prev = f64::NEG_INFINITY;
        for c in [0.1, 0.5, 1.0, 3.0, 10.0] {
            let v = eval_augmented_lagrangian(&p, &x, &d(c)).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn q_form_identity_and_rank_deficiency() {
        // F = identity on ℝ², no inequalities: K = I, Q = ½|λ|², σ = ½.
        let p = Quadratic::new(2).with_eq(DMatrix::identity(2, 2), dvector![0.0, 0.0]);
        let q = eval_q_form(&p, &dvector![0.0, 0.0]);
        assert!((estimate_sigma_max(&q, 1e-12).unwrap() - 0.5).abs() < 1e-14);
        // Duplicate row: rank deficient.
        let p = Quadratic::new(2).with_eq(dmatrix![1.0, 2.0; 1.0, 2.0], dvector![0.0, 0.0]);
        let q = eval_q_form(&p, &dvector![0.0, 0.0]);
        assert!(estimate_sigma_max(&q, 1e-12).unwrap().abs() < 1e-10);
        // F ≡ 0 map.
        let p = Quadratic::new(2).with_eq(DMatrix::zeros(1, 2), dvector![0.0]);
        let q = eval_q_form(&p, &dvector![1.0, 1.0]);
        assert_eq!(q.eval(&dvector![3.0], &Vector::zeros(0)), 0.0);
        assert_eq!(estimate_sigma_max(&q, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn e_q_for_identity_gram_is_half_identity() {
        // E_Q = ½ (G + D)², G = J Jᵀ = I ⇒ E_Q = ½ I; the stated "E_Q = I" example
        // corresponds to J Jᵀ = √2 I.
        let s = 2f64.sqrt().sqrt();
        let p = Quadratic::new(2).with_eq(DMatrix::identity(2, 2) * s, dvector![0.0, 0.0]);
        let q = eval_q_form(&p, &dvector![0.0, 0.0]);
        let e = q.matrix().unwrap();
        assert!((e - DMatrix::identity(2, 2)).norm() < 1e-14);
        assert!((estimate_sigma_max(&q, 1e-12).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn q_form_homogeneous_and_nonnegative() {
        let mut p = mixed();
        p.ball = Some(1.0);
        let x = dvector![0.3, 0.8];
        let q = eval_q_form(&p, &x);
        let l = dvector![0.7];
        let m = dvector![-0.2, 1.1, 0.4];
        let base = q.eval(&l, &m);
        assert!(base >= 0.0);
        for t in [-3.0, 0.5, 7.0] {
            let v = q.eval(&(&l * t), &(&m * t));
            assert!((v - t * t * base).abs() <= 1e-12 * v.abs().max(1.0));
        }
        // E_Q reproduces Q.
        let e = q.matrix().unwrap();
        let k = DVector::from_vec(vec![0.7, -0.2, 1.1, 0.4]);
        let quad = (k.transpose() * e * &k)[0];
        assert!((quad - base).abs() < 1e-12 * base.max(1.0), "{quad} vs {base}");
    }

    #[test]
    fn operator_path_matches_matrix_path() {
        struct Grid2(Quadratic);
        impl ConstrainedProblem for Grid2 {
            fn primal_weights(&self) -> &[f64] {
                self.0.primal_weights()
            }
            fn multiplier_weights(&self) -> &[f64] {
                self.0.multiplier_weights()
            }
            fn multiplier_is_grid(&self) -> bool {
                true
            }
            fn objective(&self, x: &Vector) -> f64 {
                self.0.objective(x)
            }
            fn objective_grad(&self, x: &Vector) -> Vector {
                self.0.objective_grad(x)
            }
            fn eq_map(&self, x: &Vector) -> Vector {
                self.0.eq_map(x)
            }
            fn eq_apply(&self, x: &Vector, w: &Vector) -> Vector {
                self.0.eq_apply(x, w)
            }
            fn eq_adjoint(&self, x: &Vector, l: &Vector) -> Vector {
                self.0.eq_adjoint(x, l)
            }
        }
        let rows = dmatrix![1.0, 0.5, 0.0; 0.0, 1.0, -1.0];
        let base = Quadratic::new(3).with_eq(rows, dvector![0.0, 0.0]);
        let x = dvector![0.0, 0.0, 0.0];
        let dense = estimate_sigma_max(&eval_q_form(&base, &x), 1e-13).unwrap();
        let grid = Grid2(base);
        let q = eval_q_form(&grid, &x);
        assert!(q.matrix().is_none());
        let iter = estimate_sigma_max(&q, 1e-13).unwrap();
        assert!((dense - iter).abs() < 1e-8 * dense, "{dense} vs {iter}");
    }

    #[test]
    fn missing_second_order_is_reported() {
        struct FirstOrder(Quadratic);
        impl ConstrainedProblem for FirstOrder {
            fn primal_weights(&self) -> &[f64] {
                self.0.primal_weights()
            }
            fn multiplier_weights(&self) -> &[f64] {
                self.0.multiplier_weights()
            }
            fn objective(&self, x: &Vector) -> f64 {
                self.0.objective(x)
            }
            fn objective_grad(&self, x: &Vector) -> Vector {
                self.0.objective_grad(x)
            }
            fn eq_map(&self, x: &Vector) -> Vector {
                self.0.eq_map(x)
            }
            fn eq_apply(&self, x: &Vector, w: &Vector) -> Vector {
                self.0.eq_apply(x, w)
            }
            fn eq_adjoint(&self, x: &Vector, l: &Vector) -> Vector {
                self.0.eq_adjoint(x, l)
            }
        }
        let p = FirstOrder(scalar_eq(1.0));
        assert!(!p.has_second_order());
        let d = DualState::zeros(&p, 1.0);
        let x = dvector![0.0];
        assert_eq!(grad_augmented_lagrangian(&p, &x, &d, GradientMode::Analytic), Err(Error::MissingSecondOrder));
        assert!(grad_augmented_lagrangian(&p, &x, &d, GradientMode::FiniteDifference).is_ok());
    }

    #[test]
    fn diagnostic_row_has_fixed_columns() {
        let p = mixed();
        let d = DualState::zeros(&p, 1.0);
        let row = diagnostics(&p, &dvector![0.0, 0.0], &d).unwrap();
        assert_eq!(row.to_csv().split(',').count(), DiagnosticRow::HEADER.split(',').count());
        assert!((row.eq_norm - 2.0).abs() < 1e-15);
    }
}
