//! Variational problems on an interval with equality and inequality
//! constraints on the boundary values `(u(a), u(b))`.
//!
//! The unknown is `(y, v) ∈ ℝ^d × L²`, with `u = y + ∫_a^x v`. Constraints
//! become `f̂_j(y, v) = f_j(y, y + ∫_a^b v)`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::auglag::{estimate_sigma_max, eval_q_form, min_eigenvalue, weighted_dot, ConstrainedProblem, Vector};
use crate::error::{Error, Result};
use crate::function_spaces::{cumulative_integral_1d, Grid, GridFunction, Placement};
use crate::integrand::{BoundaryFunction, CellFields, FieldMap, Integrand};

/// Default active-set tolerance for the LICQ check.
pub const ACTIVE_TOL: f64 = 1e-8;

/// Smallest admissible eigenvalue of `E_Q` for LICQ to pass.
pub const LICQ_EIGEN_TOL: f64 = 1e-10;

#[derive(Clone)]
pub struct BoundaryProblemSpec {
    pub interval: (f64, f64),
    pub d: usize,
    pub integrand: Arc<dyn Integrand>,
    /// `f₀(u_a, u_b)`.
    pub cost: Arc<dyn BoundaryFunction>,
    pub equalities: Vec<Arc<dyn BoundaryFunction>>,
    pub inequalities: Vec<Arc<dyn BoundaryFunction>>,
}

/// The assembled problem over `x = (y, v)`.
#[derive(Clone)]
pub struct BoundaryProblem {
    spec: BoundaryProblemSpec,
    map: FieldMap,
    pw: Vec<f64>,
    hw: Vec<f64>,
}

pub fn assemble_boundary_problem(spec: BoundaryProblemSpec, grid: Grid) -> Result<BoundaryProblem> {
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid(format!("boundary problems need a 1-D grid, got dimension {}", grid.dim())));
    }
    let (a, b) = grid.bounds()[0];
    if (a - spec.interval.0).abs() > 1e-14 || (b - spec.interval.1).abs() > 1e-14 {
        return Err(Error::InvalidGrid(format!(
            "grid spans ({a}, {b}) but the problem is posed on ({}, {})",
            spec.interval.0, spec.interval.1
        )));
    }
    if spec.d == 0 {
        return Err(Error::Config("d must be positive".into()));
    }
    if spec.equalities.is_empty() && spec.inequalities.is_empty() {
        return Err(Error::Config("at least one boundary constraint is required".into()));
    }
    let h = grid.width(0);
    let mut pw = vec![1.0; spec.d];
    pw.extend(std::iter::repeat_n(h, spec.d * grid.cell_count()));
    let hw = vec![1.0; spec.equalities.len()];
    let map = FieldMap::new(grid, spec.d);
    Ok(BoundaryProblem { spec, map, pw, hw })
}

impl BoundaryProblem {
    pub fn spec(&self) -> &BoundaryProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.map.grid
    }

    pub fn primal_len(&self) -> usize {
        self.pw.len()
    }

    /// Packs `(y, v)` into a primal vector.
    pub fn pack(&self, y: &[f64], v: &GridFunction) -> Result<Vector> {
        let d = self.spec.d;
        if y.len() != d || v.components() != d || v.placement() != Placement::Cell || v.grid() != self.grid() {
            return Err(Error::Shape("(y, v) does not match the problem".into()));
        }
        Ok(Vector::from_iterator(self.pw.len(), y.iter().chain(v.values()).cloned()))
    }

    /// Splits a primal vector into `(y, v)`.
    pub fn unpack(&self, x: &Vector) -> (Vec<f64>, GridFunction) {
        let d = self.spec.d;
        let v = GridFunction::new(self.grid().clone(), d, Placement::Cell, x.as_slice()[d..].to_vec())
            .expect("primal vector has the problem's shape");
        (x.as_slice()[..d].to_vec(), v)
    }

    /// Node values of `u = y + ∫_a^x v`.
    pub fn state(&self, x: &Vector) -> GridFunction {
        let (y, v) = self.unpack(x);
        cumulative_integral_1d(&y, &v).expect("shapes agree by construction")
    }

    fn split<'a>(&self, x: &'a Vector) -> (&'a [f64], &'a [f64]) {
        x.as_slice().split_at(self.spec.d)
    }

    fn fields(&self, x: &Vector) -> CellFields {
        let (y, v) = self.split(x);
        let mut f = self.map.apply(v);
        self.broadcast_add(&mut f.u, y);
        f
    }

    fn broadcast_add(&self, target: &mut [f64], per_component: &[f64]) {
        let d = per_component.len();
        for (i, t) in target.iter_mut().enumerate() {
            *t += per_component[i % d];
        }
    }

    /// `B(y, v) = (y, y + ∫ v)`.
    fn boundary(&self, x: &Vector) -> Vec<f64> {
        let (y, v) = self.split(x);
        let d = self.spec.d;
        let h = self.grid().width(0);
        let mut z = y.to_vec();
        z.extend_from_slice(y);
        for (i, val) in v.iter().enumerate() {
            z[d + i % d] += h * val;
        }
        z
    }

    /// `B*(p_a, p_b) = (p_a + p_b, p_b broadcast)`.
    fn boundary_adjoint(&self, p: &[f64]) -> Vector {
        let d = self.spec.d;
        let mut out = Vector::zeros(self.pw.len());
        for k in 0..d {
            out[k] = p[k] + p[d + k];
        }
        for i in d..out.len() {
            out[i] = p[d + (i - d) % d];
        }
        out
    }

    /// Riesz representer of `w ↦ Σ vol ⟨g, fields(w)⟩` for cell-field data `g`.
    fn pull_fields(&self, g: &CellFields) -> Vector {
        let d = self.spec.d;
        let h = self.grid().width(0);
        let mut out = Vector::zeros(self.pw.len());
        for (i, val) in g.u.iter().enumerate() {
            out[i % d] += h * val;
        }
        for (o, t) in out.as_mut_slice()[d..].iter_mut().zip(self.map.transpose(g)) {
            *o = t;
        }
        out
    }

    fn direction_fields(&self, w: &Vector) -> CellFields {
        self.fields(w)
    }

    fn constraint(&self, i: usize) -> &Arc<dyn BoundaryFunction> {
        let l = self.spec.equalities.len();
        if i < l {
            &self.spec.equalities[i]
        } else {
            &self.spec.inequalities[i - l]
        }
    }

    /// Gradient of the `i`-th constraint (equalities first).
    fn constraint_grad(&self, x: &Vector, i: usize) -> Vector {
        self.boundary_adjoint(&self.constraint(i).gradient(&self.boundary(x)))
    }

    /// `B* (Σ_j c_j ∇²φ_j) B w`.
    fn weighted_boundary_hvp(&self, x: &Vector, funcs: &[Arc<dyn BoundaryFunction>], coeffs: &Vector, w: &Vector) -> Option<Vector> {
        let z = self.boundary(x);
        let dz = self.boundary(w);
        let mut acc = vec![0.0; z.len()];
        for (f, c) in funcs.iter().zip(coeffs.iter()) {
            let hz = f.hessian_action(&z, &dz)?;
            acc.iter_mut().zip(hz).for_each(|(a, b)| *a += c * b);
        }
        Some(self.boundary_adjoint(&acc))
    }
}

impl ConstrainedProblem for BoundaryProblem {
    fn primal_weights(&self) -> &[f64] {
        &self.pw
    }
    fn multiplier_weights(&self) -> &[f64] {
        &self.hw
    }
    fn ineq_count(&self) -> usize {
        self.spec.inequalities.len()
    }

    fn objective(&self, x: &Vector) -> f64 {
        self.map.integrate(self.spec.integrand.as_ref(), &self.fields(x)) + self.spec.cost.value(&self.boundary(x))
    }

    fn objective_grad(&self, x: &Vector) -> Vector {
        let local = self.map.local_gradient(self.spec.integrand.as_ref(), &self.fields(x));
        self.pull_fields(&local) + self.boundary_adjoint(&self.spec.cost.gradient(&self.boundary(x)))
    }

    fn eq_map(&self, x: &Vector) -> Vector {
        let z = self.boundary(x);
        Vector::from_iterator(self.spec.equalities.len(), self.spec.equalities.iter().map(|f| f.value(&z)))
    }

    fn eq_apply(&self, x: &Vector, w: &Vector) -> Vector {
        Vector::from_iterator(
            self.spec.equalities.len(),
            (0..self.spec.equalities.len()).map(|j| weighted_dot(&self.pw, &self.constraint_grad(x, j), w)),
        )
    }

    fn eq_adjoint(&self, x: &Vector, lambda: &Vector) -> Vector {
        let z = self.boundary(x);
        let mut p = vec![0.0; z.len()];
        for (f, l) in self.spec.equalities.iter().zip(lambda.iter()) {
            p.iter_mut().zip(f.gradient(&z)).for_each(|(a, b)| *a += l * b);
        }
        self.boundary_adjoint(&p)
    }

    fn ineq_map(&self, x: &Vector) -> Vector {
        let z = self.boundary(x);
        Vector::from_iterator(self.spec.inequalities.len(), self.spec.inequalities.iter().map(|g| g.value(&z)))
    }

    fn ineq_grad(&self, x: &Vector, i: usize) -> Vector {
        self.constraint_grad(x, self.spec.equalities.len() + i)
    }

    fn objective_hvp(&self, x: &Vector, w: &Vector) -> Option<Vector> {
        let fields = self.fields(x);
        let dir = self.direction_fields(w);
        let local = self.map.local_hessian(self.spec.integrand.as_ref(), &fields, &dir)?;
        let cost = self.weighted_boundary_hvp(x, std::slice::from_ref(&self.spec.cost), &Vector::from_element(1, 1.0), w)?;
        Some(self.pull_fields(&local) + cost)
    }

    fn eq_adjoint_derivative(&self, x: &Vector, lambda: &Vector, w: &Vector) -> Option<Vector> {
        self.weighted_boundary_hvp(x, &self.spec.equalities, lambda, w)
    }

    fn ineq_hvp(&self, x: &Vector, mu: &Vector, w: &Vector) -> Option<Vector> {
        self.weighted_boundary_hvp(x, &self.spec.inequalities, mu, w)
    }
}

/// `(∇_y Î, ∇_v Î)` at `(y, v)`.
pub fn boundary_objective_gradient(problem: &BoundaryProblem, y: &[f64], v: &GridFunction) -> Result<(Vec<f64>, GridFunction)> {
    let x = problem.pack(y, v)?;
    Ok(problem.unpack(&problem.objective_grad(&x)))
}

/// `(∇_y, ∇_v)` of every constraint, equalities first, then inequalities.
pub fn boundary_constraint_gradients(problem: &BoundaryProblem, y: &[f64], v: &GridFunction) -> Result<Vec<(Vec<f64>, GridFunction)>> {
    let x = problem.pack(y, v)?;
    let total = problem.spec.equalities.len() + problem.spec.inequalities.len();
    Ok((0..total).map(|i| problem.unpack(&problem.constraint_grad(&x, i))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LicqReport {
    /// `E_Q` restricted to equalities and active inequalities.
    pub e_q: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub active: Vec<usize>,
    pub pass: bool,
}

/// Linear independence of the equality and active inequality gradients,
/// measured by the smallest eigenvalue of the restricted `E_Q`.
pub fn check_boundary_licq(problem: &BoundaryProblem, x: &Vector, active_tol: f64) -> Result<LicqReport> {
    if !(active_tol > 0.0) {
        return Err(Error::Config("active-set tolerance must be positive".into()));
    }
    if x.len() != problem.pw.len() {
        return Err(Error::Shape("primal point has wrong length".into()));
    }
    let l = problem.spec.equalities.len();
    let g = problem.ineq_map(x);
    let active: Vec<usize> = (0..g.len()).filter(|&i| g[i].abs() <= active_tol).collect();
    let rows: Vec<usize> = (0..l).chain(active.iter().map(|i| l + i)).collect();
    let grads: Vec<Vector> = rows.iter().map(|&r| problem.constraint_grad(x, r)).collect();
    let k = rows.len();
    // K = Gram + diag(0, g²); E_Q = ½ K².
    let mut gram = DMatrix::from_fn(k, k, |i, j| weighted_dot(&problem.pw, &grads[i], &grads[j]));
    for (pos, i) in active.iter().enumerate() {
        gram[(l + pos, l + pos)] += g[*i] * g[*i];
    }
    let e_q = &gram * &gram * 0.5;
    let min_eigenvalue = min_eigenvalue(&e_q);
    Ok(LicqReport { e_q, min_eigenvalue, active, pass: min_eigenvalue > LICQ_EIGEN_TOL })
}

/// `σ_max` of the full Q form at `x`; equals the LICQ eigenvalue when every
/// inequality is active or absent.
pub fn boundary_sigma_max(problem: &BoundaryProblem, x: &Vector) -> Result<f64> {
    estimate_sigma_max(&eval_q_form(problem, x), 1e-12)
}
