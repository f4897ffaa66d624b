//! Fixed-endpoint minimum-energy control of `ẋ = A x + B u` on `[0, T]`.
//!
//! Controls are piecewise constant on `K` uniform time cells. The state is
//! stepped exactly for such controls, `x_{k+1} = Φ x_k + Γ u_k`, and the
//! adjoint of the input map is the transpose of that recursion, so the
//! adjoint identity and `W = F F*` hold to rounding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::auglag::{weighted_dot, ConstrainedProblem, DualState, Vector};
use crate::error::{Error, Result};

/// Threshold on `λ_min(W)` below which the discrete system is declared
/// uncontrollable.
pub const CONTROLLABILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorMode {
    /// `Φ = exp(AΔt)`, `Γ = ∫₀^Δt exp(As) ds B`.
    #[default]
    Exponential,
    /// `(I − AΔt/2) x_{k+1} = (I + AΔt/2) x_k + Δt B u_k`; for stiff `A`.
    ImplicitMidpoint,
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    horizon: f64,
    steps: usize,
    mode: PropagatorMode,
    phi: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, horizon: f64, steps: usize, mode: PropagatorMode) -> Result<Self> {
        let h = a.nrows();
        if a.ncols() != h || b.nrows() != h {
            return Err(Error::Shape(format!("A is {}x{}, B is {}x{}", a.nrows(), a.ncols(), b.nrows(), b.ncols())));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::Config(format!("need at least 2 time steps, got {steps}")));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("system matrices"));
        }
        let dt = horizon / steps as f64;
        let m = b.ncols();
        let (phi, gamma) = match mode {
            PropagatorMode::Exponential => {
                let mut aug = DMatrix::zeros(h + m, h + m);
                aug.view_mut((0, 0), (h, h)).copy_from(&(&a * dt));
                aug.view_mut((0, h), (h, m)).copy_from(&(&b * dt));
                let e = aug.exp();
                (e.view((0, 0), (h, h)).into_owned(), e.view((0, h), (h, m)).into_owned())
            }
            PropagatorMode::ImplicitMidpoint => {
                let id = DMatrix::<f64>::identity(h, h);
                let lhs = (&id - &a * (0.5 * dt)).lu();
                let phi = lhs.solve(&(&id + &a * (0.5 * dt))).ok_or(Error::Singular)?;
                let gamma = lhs.solve(&(&b * dt)).ok_or(Error::Singular)?;
                (phi, gamma)
            }
        };
        Ok(Self { a, b, horizon, steps, mode, phi, gamma })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn mode(&self) -> PropagatorMode {
        self.mode
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn input_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// One-step propagator `Φ`.
    pub fn step_propagator(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// One-step input quadrature `Γ`.
    pub fn step_input(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// `Φ^K x₀`: the free response at `T`.
    pub fn free_response(&self, x0: &DVector<f64>) -> DVector<f64> {
        let mut x = x0.clone();
        for _ in 0..self.steps {
            x = &self.phi * x;
        }
        x
    }

    /// Trajectory at the `K + 1` time nodes.
    pub fn simulate(&self, x0: &DVector<f64>, u: &ControlFunction) -> Result<Vec<DVector<f64>>> {
        self.check_control(u)?;
        let mut out = Vec::with_capacity(self.steps + 1);
        let mut x = x0.clone();
        out.push(x.clone());
        for k in 0..self.steps {
            x = &self.phi * x + &self.gamma * u.at(k);
            out.push(x.clone());
        }
        Ok(out)
    }

    fn check_control(&self, u: &ControlFunction) -> Result<()> {
        if u.steps != self.steps || u.dim != self.control_dim() {
            return Err(Error::Shape(format!(
                "control has {} steps of dimension {}, system expects {} of {}",
                u.steps,
                u.dim,
                self.steps,
                self.control_dim()
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant control, one `u_dim` vector per time cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFunction {
    pub steps: usize,
    pub dim: usize,
    pub horizon: f64,
    /// `values[k * dim + j]`.
    pub values: Vec<f64>,
}

impl ControlFunction {
    pub fn zeros(sys: &LinearSystem) -> Self {
        Self { steps: sys.steps, dim: sys.control_dim(), horizon: sys.horizon, values: vec![0.0; sys.steps * sys.control_dim()] }
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(sys: &LinearSystem, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let mut u = Self::zeros(sys);
        for k in 0..sys.steps {
            let v = f(u.time(k));
            u.values[k * u.dim..(k + 1) * u.dim].copy_from_slice(&v[..u.dim]);
        }
        u
    }

    pub fn from_vector(sys: &LinearSystem, v: &Vector) -> Result<Self> {
        if v.len() != sys.steps * sys.control_dim() {
            return Err(Error::Shape("control vector has wrong length".into()));
        }
        Ok(Self { values: v.iter().cloned().collect(), ..Self::zeros(sys) })
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.values)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Center of cell `k`.
    pub fn time(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }

    pub fn at(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.values[k * self.dim..(k + 1) * self.dim])
    }

    pub fn l2_norm(&self) -> f64 {
        (self.dt() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// `F_T u = ∫₀ᵀ 𝕋_{T−τ} B u(τ) dτ`, i.e. the final state from `x(0) = 0`.
pub fn input_map(sys: &LinearSystem, u: &ControlFunction) -> Result<DVector<f64>> {
    sys.check_control(u)?;
    let mut x = DVector::zeros(sys.state_dim());
    for k in 0..sys.steps {
        x = &sys.phi * x + &sys.gamma * u.at(k);
    }
    Ok(x)
}

/// Exact adjoint of [`input_map`] under the `Δt`-weighted `L²` product:
/// `(F* λ)_k = Γᵀ (Φᵀ)^{K−1−k} λ / Δt`.
pub fn adjoint_input_map(sys: &LinearSystem, lambda: &DVector<f64>) -> Result<ControlFunction> {
    if lambda.len() != sys.state_dim() {
        return Err(Error::Shape("multiplier has wrong length".into()));
    }
    let mut u = ControlFunction::zeros(sys);
    let d = u.dim;
    let gt = sys.gamma.transpose() / sys.dt();
    let phit = sys.phi.transpose();
    let mut p = lambda.clone();
    for k in (0..sys.steps).rev() {
        u.values[k * d..(k + 1) * d].copy_from_slice((&gt * &p).as_slice());
        p = &phit * p;
    }
    Ok(u)
}

/// Controllability Gramian `W = F_T F_T*`.
pub fn gramian(sys: &LinearSystem) -> DMatrix<f64> {
    let h = sys.state_dim();
    let step = &sys.gamma * sys.gamma.transpose() / sys.dt();
    let mut w = DMatrix::zeros(h, h);
    // W ← Φ W Φᵀ + ΓΓᵀ/Δt, K times.
    for _ in 0..sys.steps {
        w = &sys.phi * w * sys.phi.transpose() + &step;
    }
    (&w + w.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `λ_max / λ_min`; infinite when `λ_min ≤ 0`.
    pub condition: f64,
    pub controllable: bool,
}

pub fn controllability(sys: &LinearSystem) -> ControllabilityReport {
    let eig = SymmetricEigen::new(gramian(sys)).eigenvalues;
    let lambda_min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda_max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ControllabilityReport {
        lambda_min,
        lambda_max,
        condition: if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY },
        controllable: lambda_min > CONTROLLABILITY_TOL,
    }
}

/// `min ½‖u‖²` s.t. `F_T u = x̂_T`, `x̂_T = x_T − Φ^K x₀`.
#[derive(Debug, Clone)]
pub struct OcProblem {
    sys: LinearSystem,
    x0: DVector<f64>,
    target: DVector<f64>,
    shifted_target: DVector<f64>,
    pw: Vec<f64>,
    hw: Vec<f64>,
    report: ControllabilityReport,
}

pub fn assemble_oc_problem(sys: &LinearSystem, x0: &DVector<f64>, xt: &DVector<f64>) -> Result<OcProblem> {
    let h = sys.state_dim();
    if x0.len() != h || xt.len() != h {
        return Err(Error::Shape(format!("endpoints must have length {h}")));
    }
    if x0.iter().chain(xt.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("endpoints"));
    }
    Ok(OcProblem {
        shifted_target: xt - sys.free_response(x0),
        x0: x0.clone(),
        target: xt.clone(),
        pw: vec![sys.dt(); sys.steps * sys.control_dim()],
        hw: vec![1.0; h],
        report: controllability(sys),
        sys: sys.clone(),
    })
}

impl OcProblem {
    pub fn system(&self) -> &LinearSystem {
        &self.sys
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// `x̂_T = x_T − Φ^K x₀`.
    pub fn shifted_target(&self) -> &DVector<f64> {
        &self.shifted_target
    }

    /// Gramian spectrum; `controllable == false` means global exactness is
    /// not guaranteed.
    pub fn controllability(&self) -> ControllabilityReport {
        self.report
    }

    pub fn control(&self, x: &Vector) -> Result<ControlFunction> {
        ControlFunction::from_vector(&self.sys, x)
    }

    fn apply(&self, w: &Vector) -> Vector {
        input_map(&self.sys, &ControlFunction { values: w.iter().cloned().collect(), ..ControlFunction::zeros(&self.sys) })
            .expect("length checked by caller")
    }

    fn adjoint(&self, lambda: &Vector) -> Vector {
        adjoint_input_map(&self.sys, lambda).expect("length checked by caller").to_vector()
    }
}

impl ConstrainedProblem for OcProblem {
    fn primal_weights(&self) -> &[f64] {
        &self.pw
    }
    fn multiplier_weights(&self) -> &[f64] {
        &self.hw
    }
    fn objective(&self, x: &Vector) -> f64 {
        0.5 * weighted_dot(&self.pw, x, x)
    }
    fn objective_grad(&self, x: &Vector) -> Vector {
        x.clone()
    }
    fn eq_map(&self, x: &Vector) -> Vector {
        self.apply(x) - &self.shifted_target
    }
    fn eq_apply(&self, _x: &Vector, w: &Vector) -> Vector {
        self.apply(w)
    }
    fn eq_adjoint(&self, _x: &Vector, lambda: &Vector) -> Vector {
        self.adjoint(lambda)
    }
    fn objective_hvp(&self, _x: &Vector, w: &Vector) -> Option<Vector> {
        Some(w.clone())
    }
    fn eq_adjoint_derivative(&self, x: &Vector, _lambda: &Vector, _w: &Vector) -> Option<Vector> {
        Some(Vector::zeros(x.len()))
    }
}

/// The augmented Lagrangian written out for this problem:
/// `½‖u‖² + ⟨λ, F_T u − x̂⟩ + (c/2)(1 + |λ|²)|F_T u − x̂|² + ½|F_T(u + F_T*λ)|²`.
pub fn eval_oc_auglag_explicit(problem: &OcProblem, u: &Vector, dual: &DualState) -> Result<f64> {
    if !(dual.c > 0.0) {
        return Err(Error::NonPositivePenalty(dual.c));
    }
    if u.len() != problem.pw.len() || dual.lambda.len() != problem.hw.len() {
        return Err(Error::Shape("point does not match the problem".into()));
    }
    let l = &dual.lambda;
    let r = problem.eq_map(u);
    let s = problem.apply(&(u + problem.adjoint(l)));
    Ok(problem.objective(u) + l.dot(&r) + 0.5 * dual.c * (1.0 + l.norm_squared()) * r.norm_squared() + 0.5 * s.norm_squared())
}

/// `Q(u)[λ] = ½|W λ|²`.
pub fn oc_q_form(sys: &LinearSystem, lambda: &DVector<f64>) -> f64 {
    0.5 * (gramian(sys) * lambda).norm_squared()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinEnergySolution {
    pub control: ControlFunction,
    pub lambda: DVector<f64>,
    pub value: f64,
    pub report: ControllabilityReport,
}

/// KKT solution of the discrete problem: `W λ* = −x̂`, `u* = −F* λ*`,
/// value `½ x̂ᵀ W⁻¹ x̂`.
pub fn min_energy_oracle(sys: &LinearSystem, x0: &DVector<f64>, xt: &DVector<f64>) -> Result<MinEnergySolution> {
    let problem = assemble_oc_problem(sys, x0, xt)?;
    let report = problem.report;
    if !report.controllable {
        return Err(Error::Uncontrollable { lambda_min: report.lambda_min });
    }
    let xhat = problem.shifted_target;
    let chol = gramian(sys).cholesky().ok_or(Error::Uncontrollable { lambda_min: report.lambda_min })?;
    let winv_x = chol.solve(&xhat);
    let lambda = -&winv_x;
    let mut control = adjoint_input_map(sys, &lambda)?;
    control.values.iter_mut().for_each(|v| *v = -*v);
    Ok(MinEnergySolution { value: 0.5 * xhat.dot(&winv_x), control, lambda, report })
}

/// `½‖u‖² + c |x(T) − x_T|` (norm, not squared).
pub fn eval_exact_penalty_oc(sys: &LinearSystem, x0: &DVector<f64>, xt: &DVector<f64>, u: &ControlFunction, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositivePenalty(c));
    }
    if x0.len() != sys.state_dim() || xt.len() != sys.state_dim() {
        return Err(Error::Shape("endpoints have wrong length".into()));
    }
    let xt_reached = sys.free_response(x0) + input_map(sys, u)?;
    Ok(0.5 * u.l2_norm().powi(2) + c * (xt_reached - xt).norm())
}

/// `ẍ = u`: `A = [[0, 1], [0, 0]]`, `B = (0, 1)ᵀ`.
pub fn double_integrator(horizon: f64, steps: usize) -> Result<LinearSystem> {
    LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        horizon,
        steps,
        PropagatorMode::Exponential,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auglag::{eval_augmented_lagrangian, eval_q_form, grad_augmented_lagrangian, kkt_residual, GradientMode};
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn integrator(steps: usize) -> LinearSystem {
        LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), 2.0, steps, PropagatorMode::Exponential).unwrap()
    }

    #[test]
    fn input_map_examples() {
        let sys = integrator(8);
        assert_eq!(input_map(&sys, &ControlFunction::zeros(&sys)).unwrap(), DVector::zeros(2));
        let u = ControlFunction::from_fn(&sys, |_| vec![0.5, -1.5]);
        assert!((input_map(&sys, &u).unwrap() - dvector![1.0, -3.0]).norm() < 1e-14);

        for k in [32, 64, 128] {
            let sys = double_integrator(1.0, k).unwrap();
            let u = ControlFunction::from_fn(&sys, |t| vec![6.0 - 12.0 * t]);
            let err = (input_map(&sys, &u).unwrap() - dvector![1.0, 0.0]).norm();
            // Midpoint sampling of a linear control: x₁ is off by Δt²/2 · O(1).
            assert!(err < 2.0 / (k * k) as f64, "K={k}: {err}");
        }
    }

    #[test]
    fn rejects_bad_systems() {
        assert!(LinearSystem::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1), 1.0, 4, PropagatorMode::Exponential).is_err());
        assert!(LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1), 1.0, 4, PropagatorMode::Exponential).is_err());
        assert!(LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), 0.0, 4, PropagatorMode::Exponential).is_err());
        assert!(LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), 1.0, 1, PropagatorMode::Exponential).is_err());
        let sys = integrator(4);
        let bad = ControlFunction { steps: 3, ..ControlFunction::zeros(&sys) };
        assert!(matches!(input_map(&sys, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn adjoint_examples() {
        let sys = integrator(5);
        assert!(adjoint_input_map(&sys, &DVector::zeros(2)).unwrap().values.iter().all(|v| *v == 0.0));
        let u = adjoint_input_map(&sys, &dvector![3.0, -1.0]).unwrap();
        for k in 0..5 {
            assert!((u.at(k) - dvector![3.0, -1.0]).norm() < 1e-14);
        }

        let sys = double_integrator(1.0, 64).unwrap();
        let u = adjoint_input_map(&sys, &dvector![12.0, -6.0]).unwrap();
        for k in 0..64 {
            let t = u.time(k);
            assert!((u.values[k] - (12.0 * (1.0 - t) - 6.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_identity_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for mode in [PropagatorMode::Exponential, PropagatorMode::ImplicitMidpoint] {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let b = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
            let sys = LinearSystem::new(a, b, 1.5, 17, mode).unwrap();
            let u = ControlFunction { values: (0..34).map(|_| rng.gen_range(-1.0..1.0)).collect(), ..ControlFunction::zeros(&sys) };
            let l = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = input_map(&sys, &u).unwrap().dot(&l);
            let fl = adjoint_input_map(&sys, &l).unwrap();
            let rhs = sys.dt() * u.values.iter().zip(&fl.values).map(|(a, b)| a * b).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-12 * u.l2_norm() * l.norm(), "{mode:?}");

            // W = F F* on probes.
            let w = gramian(&sys);
            let ffl = input_map(&sys, &fl).unwrap();
            assert!((&w * &l - ffl).norm() <= 1e-12 * l.norm().max(1.0));
            assert!((&w - w.transpose()).norm() == 0.0);
            assert!(SymmetricEigen::new(w).eigenvalues.min() > -1e-12);
        }
    }

    #[test]
    fn gramian_examples() {
        let sys = LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), 1.0, 4, PropagatorMode::Exponential).unwrap();
        assert_eq!(gramian(&sys), DMatrix::zeros(2, 2));

        let sys = double_integrator(1.0, 64).unwrap();
        let w = gramian(&sys);
        let exact = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 0.5, 0.5, 1.0]);
        assert!((&w - &exact).abs().max() <= 5e-3);
        // Piecewise-constant controls: only the (0,0) entry picks up −Δt²/12.
        let h = sys.dt();
        assert!((w[(0, 0)] - (1.0 / 3.0 - h * h / 12.0)).abs() < 1e-13);
        assert!((w[(0, 1)] - 0.5).abs() < 1e-13 && (w[(1, 1)] - 1.0).abs() < 1e-13);

        let sys = LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), 1.0, 8, PropagatorMode::Exponential).unwrap();
        let r = controllability(&sys);
        assert!(r.lambda_min.abs() < 1e-14 && !r.controllable && r.condition.is_infinite());
    }

    #[test]
    fn oracle_examples() {
        let sys = double_integrator(1.0, 256).unwrap();
        let zero = DVector::zeros(2);
        let s = min_energy_oracle(&sys, &zero, &zero).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.lambda.norm() == 0.0 && s.control.l2_norm() == 0.0);

        let s = min_energy_oracle(&sys, &zero, &dvector![1.0, 0.0]).unwrap();
        assert!((s.value - 6.0).abs() < 1e-3);
        assert!((&s.lambda - dvector![-12.0, 6.0]).norm() < 1e-2);
        for k in 0..256 {
            let t = s.control.time(k);
            assert!((s.control.values[k] - (6.0 - 12.0 * t)).abs() < 1e-3);
        }
        let reached = input_map(&sys, &s.control).unwrap();
        assert!((reached - dvector![1.0, 0.0]).norm() <= 1e-10);

        let sys = integrator(10);
        let s = min_energy_oracle(&sys, &dvector![1.0, 1.0], &dvector![2.0, -1.0]).unwrap();
        for k in 0..10 {
            assert!((s.control.at(k) - dvector![0.5, -1.0]).norm() < 1e-13);
        }
        assert!((s.value - 5.0 / 4.0).abs() < 1e-13);

        let sys = LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), 1.0, 8, PropagatorMode::Exponential).unwrap();
        assert!(matches!(min_energy_oracle(&sys, &zero, &dvector![1.0, 1.0]), Err(Error::Uncontrollable { .. })));
    }

    #[test]
    fn problem_examples() {
        let sys = double_integrator(1.0, 16).unwrap();
        let x0 = dvector![0.3, -0.2];
        let p = assemble_oc_problem(&sys, &x0, &sys.free_response(&x0)).unwrap();
        let u = Vector::zeros(16);
        let dual = DualState::zeros(&p, 1.0);
        assert_eq!(eval_augmented_lagrangian(&p, &u, &dual).unwrap(), 0.0);
        assert_eq!(kkt_residual(&p, &u, &dual).unwrap().max(), 0.0);

        let sys = double_integrator(1.0, 256).unwrap();
        let (x0, xt) = (DVector::zeros(2), dvector![1.0, 0.0]);
        let p = assemble_oc_problem(&sys, &x0, &xt).unwrap();
        let s = min_energy_oracle(&sys, &x0, &xt).unwrap();
        for c in [1.0, 10.0, 100.0] {
            let dual = DualState::new(s.lambda.clone(), Vector::zeros(0), c);
            let v = eval_augmented_lagrangian(&p, &s.control.to_vector(), &dual).unwrap();
            assert!((v - 6.0).abs() < 1e-3);
            assert!((v - s.value).abs() < 1e-9 * s.value);
        }
    }

    #[test]
    fn explicit_formula_and_q_form_match_generic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = double_integrator(1.0, 24).unwrap();
        let p = assemble_oc_problem(&sys, &dvector![0.1, 0.0], &dvector![1.0, -0.5]).unwrap();
        for _ in 0..5 {
            let u = Vector::from_fn(24, |_, _| rng.gen_range(-2.0..2.0));
            let dual = DualState::new(Vector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)), Vector::zeros(0), rng.gen_range(0.5..20.0));
            let generic = eval_augmented_lagrangian(&p, &u, &dual).unwrap();
            let explicit = eval_oc_auglag_explicit(&p, &u, &dual).unwrap();
            assert!((generic - explicit).abs() <= 1e-12 * generic.abs().max(1.0));

            let q = eval_q_form(&p, &u);
            let l = &dual.lambda;
            assert!((q.eval(l, &Vector::zeros(0)) - oc_q_form(&sys, l)).abs() <= 1e-12 * oc_q_form(&sys, l).max(1.0));
        }
    }

    #[test]
    fn analytic_gradient_matches_fd() {
        let sys = double_integrator(1.0, 12).unwrap();
        let p = assemble_oc_problem(&sys, &dvector![0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
        let u = Vector::from_fn(12, |i, _| (i as f64 * 0.7).sin());
        let dual = DualState::new(dvector![0.4, -1.1], Vector::zeros(0), 3.0);
        let a = grad_augmented_lagrangian(&p, &u, &dual, GradientMode::Analytic).unwrap();
        let f = grad_augmented_lagrangian(&p, &u, &dual, GradientMode::FiniteDifference).unwrap();
        assert!((&a.x - &f.x).norm() <= 1e-6 * a.x.norm());
        assert!((&a.lambda - &f.lambda).norm() <= 1e-6 * a.lambda.norm());
    }

    #[test]
    fn exact_penalty_examples() {
        let sys = double_integrator(1.0, 256).unwrap();
        let (x0, xt) = (DVector::zeros(2), dvector![1.0, 0.0]);
        let s = min_energy_oracle(&sys, &x0, &xt).unwrap();
        for c in [0.5, 5.0, 500.0] {
            let v = eval_exact_penalty_oc(&sys, &x0, &xt, &s.control, c).unwrap();
            assert!((v - 6.0).abs() < 1e-3);
        }
        let zero = ControlFunction::zeros(&sys);
        assert!((eval_exact_penalty_oc(&sys, &x0, &xt, &zero, 3.0).unwrap() - 3.0).abs() < 1e-15);
        assert!(matches!(eval_exact_penalty_oc(&sys, &x0, &xt, &zero, 0.0), Err(Error::NonPositivePenalty(_))));
    }

    #[test]
    fn implicit_midpoint_converges_to_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let e = gramian(&LinearSystem::new(a.clone(), b.clone(), 1.0, 200, PropagatorMode::Exponential).unwrap());
        let m = gramian(&LinearSystem::new(a, b, 1.0, 200, PropagatorMode::ImplicitMidpoint).unwrap());
        assert!((e - m).abs().max() < 1e-4);
    }
}
