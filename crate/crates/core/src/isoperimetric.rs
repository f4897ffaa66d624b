//! Multidimensional variational problems with one isoperimetric constraint,
//! posed in the space of mixed derivatives.
//!
//! `min ∫_Ω f₀(u, ∇u, x) dx` s.t. `∫_Ω f₁(u, ∇u, x) dx = ζ`, `u = ū + 𝒜v`,
//! `v ∈ X` (zero mean along every axis line). Gradients are
//! `proj_X P_i(v)` with `P_i(v) = 𝒜ᵀ ∇_u f_i + Σ_k (∂_k 𝒜)ᵀ ∂f_i/∂ξ_k`.

use std::sync::Arc;

use crate::auglag::{weighted_dot, weighted_norm, ConstrainedProblem, Vector};
use crate::error::{Error, Result};
use crate::function_spaces::{cumulative_integral_box, Grid, GridFunction, Placement, ZERO_MEAN_TOL};
use crate::integrand::{CellFields, FieldMap, Integrand};

#[derive(Clone)]
pub struct IsoperimetricSpec {
    pub grid: Grid,
    pub d: usize,
    pub f0: Arc<dyn Integrand>,
    pub f1: Arc<dyn Integrand>,
    pub zeta: f64,
    /// Node-based boundary datum.
    pub ubar: GridFunction,
}

#[derive(Clone)]
pub struct IsoperimetricProblem {
    spec: IsoperimetricSpec,
    map: FieldMap,
    offset: CellFields,
    pw: Vec<f64>,
    hw: Vec<f64>,
}

/// Selects `f₀` (objective) or `f₁` (constraint).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Objective,
    Constraint,
}

pub fn assemble_isoperimetric_problem(spec: IsoperimetricSpec) -> Result<IsoperimetricProblem> {
    if spec.d == 0 {
        return Err(Error::Config("d must be positive".into()));
    }
    if spec.ubar.grid() != &spec.grid || spec.ubar.placement() != Placement::Node || spec.ubar.components() != spec.d {
        return Err(Error::Shape("boundary datum must be node-based on the problem grid with d components".into()));
    }
    if !spec.zeta.is_finite() {
        return Err(Error::NonFinite("ζ"));
    }
    let grid = &spec.grid;
    let offset = CellFields {
        u: grid.node_average(spec.d, spec.ubar.values()),
        xi: (0..grid.dim()).map(|i| grid.node_partial(spec.d, spec.ubar.values(), i)).collect(),
    };
    let pw = vec![grid.cell_volume(); spec.d * grid.cell_count()];
    let map = FieldMap::new(grid.clone(), spec.d);
    Ok(IsoperimetricProblem { spec, map, offset, pw, hw: vec![1.0] })
}

impl IsoperimetricProblem {
    pub fn spec(&self) -> &IsoperimetricSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.spec.grid
    }

    pub fn primal_len(&self) -> usize {
        self.pw.len()
    }

    fn integrand(&self, which: Which) -> &dyn Integrand {
        match which {
            Which::Objective => self.spec.f0.as_ref(),
            Which::Constraint => self.spec.f1.as_ref(),
        }
    }

    fn fields(&self, v: &[f64]) -> CellFields {
        let mut f = self.map.apply(v);
        f.add(&self.offset);
        f
    }

    fn project(&self, mut w: Vec<f64>) -> Vector {
        w = self.grid().project_zero_mean_raw(self.spec.d, &w);
        Vector::from_vec(w)
    }

    /// `P_i(v)` without the zero-mean check.
    fn p_raw(&self, which: Which, v: &[f64]) -> Vec<f64> {
        let local = self.map.local_gradient(self.integrand(which), &self.fields(v));
        self.map.transpose(&local)
    }

    fn hessian_pullback(&self, which: Which, v: &[f64], w: &[f64]) -> Option<Vector> {
        let local = self.map.local_hessian(self.integrand(which), &self.fields(v), &self.map.apply(w))?;
        Some(self.project(self.map.transpose(&local)))
    }

    /// `𝓘_i(ū + 𝒜v)`.
    pub fn functional(&self, which: Which, v: &[f64]) -> f64 {
        self.map.integrate(self.integrand(which), &self.fields(v))
    }

    pub fn to_vector(&self, v: &GridFunction) -> Result<Vector> {
        self.check_shape(v)?;
        Ok(Vector::from_column_slice(v.values()))
    }

    pub fn to_grid_function(&self, x: &Vector) -> GridFunction {
        GridFunction::new(self.grid().clone(), self.spec.d, Placement::Cell, x.as_slice().to_vec())
            .expect("primal vector has the problem's shape")
    }

    fn check_shape(&self, v: &GridFunction) -> Result<()> {
        if v.grid() != self.grid() || v.placement() != Placement::Cell || v.components() != self.spec.d {
            return Err(Error::Shape("density must be cell-centered on the problem grid with d components".into()));
        }
        Ok(())
    }

    fn check_member(&self, v: &GridFunction) -> Result<()> {
        self.check_shape(v)?;
        let residual = self.grid().zero_mean_residuals_raw(self.spec.d, v.values()).into_iter().fold(0.0, f64::max);
        if residual > ZERO_MEAN_TOL {
            return Err(Error::NotZeroMean { residual, tol: ZERO_MEAN_TOL });
        }
        Ok(())
    }

    /// Node values of `u = ū + 𝒜v`.
    pub fn state(&self, x: &Vector) -> GridFunction {
        let v = self.to_grid_function(x);
        let a = cumulative_integral_box(&v).expect("shapes agree by construction");
        let values = a.values().iter().zip(self.spec.ubar.values()).map(|(a, b)| a + b).collect();
        GridFunction::new(self.grid().clone(), self.spec.d, Placement::Node, values).expect("finite state")
    }
}

impl ConstrainedProblem for IsoperimetricProblem {
    fn primal_weights(&self) -> &[f64] {
        &self.pw
    }
    fn multiplier_weights(&self) -> &[f64] {
        &self.hw
    }
    fn project_primal(&self, x: &mut Vector) {
        let p = self.grid().project_zero_mean_raw(self.spec.d, x.as_slice());
        x.as_mut_slice().copy_from_slice(&p);
    }

    fn objective(&self, x: &Vector) -> f64 {
        self.functional(Which::Objective, x.as_slice())
    }
    fn objective_grad(&self, x: &Vector) -> Vector {
        self.project(self.p_raw(Which::Objective, x.as_slice()))
    }
    fn eq_map(&self, x: &Vector) -> Vector {
        Vector::from_element(1, self.functional(Which::Constraint, x.as_slice()) - self.spec.zeta)
    }
    fn eq_apply(&self, x: &Vector, w: &Vector) -> Vector {
        let g = self.project(self.p_raw(Which::Constraint, x.as_slice()));
        Vector::from_element(1, weighted_dot(&self.pw, &g, w))
    }
    fn eq_adjoint(&self, x: &Vector, lambda: &Vector) -> Vector {
        self.project(self.p_raw(Which::Constraint, x.as_slice())) * lambda[0]
    }
    fn objective_hvp(&self, x: &Vector, w: &Vector) -> Option<Vector> {
        self.hessian_pullback(Which::Objective, x.as_slice(), w.as_slice())
    }
    fn eq_adjoint_derivative(&self, x: &Vector, lambda: &Vector, w: &Vector) -> Option<Vector> {
        Some(self.hessian_pullback(Which::Constraint, x.as_slice(), w.as_slice())? * lambda[0])
    }
}

/// `P_i(v)` at cell centers; `v` must lie in `X`.
pub fn eval_p(problem: &IsoperimetricProblem, which: Which, v: &GridFunction) -> Result<GridFunction> {
    problem.check_member(v)?;
    let values = problem.p_raw(which, v.values());
    GridFunction::new(problem.grid().clone(), problem.spec.d, Placement::Cell, values)
}

/// `∇Î₀(v) = proj_X P₀(v)`.
pub fn iso_objective_gradient(problem: &IsoperimetricProblem, v: &GridFunction) -> Result<GridFunction> {
    problem.check_member(v)?;
    let g = problem.objective_grad(&Vector::from_column_slice(v.values()));
    GridFunction::new(problem.grid().clone(), problem.spec.d, Placement::Cell, g.as_slice().to_vec())
}

/// `‖proj_X P₁(v)‖`.
pub fn constraint_gradient_norm(problem: &IsoperimetricProblem, x: &Vector) -> f64 {
    let g = problem.project(problem.p_raw(Which::Constraint, x.as_slice()));
    weighted_norm(&problem.pw, &g)
}

/// Coefficient `q` in the closed form `Q(v)[λ] = q λ²`, `q = ½‖proj_X P₁(v)‖⁴`.
pub fn iso_q_coefficient(problem: &IsoperimetricProblem, x: &Vector) -> f64 {
    0.5 * constraint_gradient_norm(problem, x).powi(4)
}
