//! Variational problems with pointwise affine PDE constraints
//! `A(x) u + Σ_i B_i(x) ∂_i u + D(x) = 0`, enforced at cell centers, with a
//! grid-valued multiplier `λ ∈ L²(Ω; ℝ^ℓ)`.
//!
//! The constraint acts on `v` through `u = ū + 𝒜v`, so its derivative is
//! `h ↦ A 𝒜h + Σ_i B_i ∂_i 𝒜h` and the adjoint is
//! `λ ↦ proj_X(𝒜ᵀ Aᵀλ + Σ_i (∂_i 𝒜)ᵀ B_iᵀ λ)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::auglag::{ConstrainedProblem, Vector};
use crate::error::{Error, Result};
use crate::function_spaces::{cumulative_integral_box, Grid, GridFunction, Placement, ZERO_MEAN_TOL};
use crate::integrand::{CellFields, FieldMap, Integrand};

/// Affine coefficients sampled at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    /// `A(x_c)`, `ℓ × d`.
    pub a: Vec<DMatrix<f64>>,
    /// `B_i(x_c)` for each axis `i`, `ℓ × d`.
    pub b: Vec<Vec<DMatrix<f64>>>,
    /// `D(x_c)`, length `ℓ`.
    pub offset: Vec<DVector<f64>>,
}

impl AffineConstraint {
    /// Samples coefficient functions at every cell center.
    pub fn from_fn(
        grid: &Grid,
        a: impl Fn(&[f64]) -> DMatrix<f64>,
        b: impl Fn(usize, &[f64]) -> DMatrix<f64>,
        offset: impl Fn(&[f64]) -> DVector<f64>,
    ) -> Self {
        let centers: Vec<Vec<f64>> = (0..grid.cell_count()).map(|c| grid.cell_center(c)).collect();
        Self {
            a: centers.iter().map(|x| a(x)).collect(),
            b: (0..grid.dim()).map(|i| centers.iter().map(|x| b(i, x)).collect()).collect(),
            offset: centers.iter().map(|x| offset(x)).collect(),
        }
    }

    /// Spatially constant coefficients.
    pub fn constant(grid: &Grid, a: DMatrix<f64>, b: Vec<DMatrix<f64>>, offset: DVector<f64>) -> Self {
        Self::from_fn(grid, |_| a.clone(), |i, _| b[i].clone(), |_| offset.clone())
    }

    pub fn rows(&self) -> usize {
        self.offset.first().map_or(0, |d| d.len())
    }
}

#[derive(Clone)]
pub struct NonholonomicSpec {
    pub grid: Grid,
    pub d: usize,
    pub integrand: Arc<dyn Integrand>,
    pub constraint: AffineConstraint,
    /// Node-based boundary datum.
    pub ubar: GridFunction,
}

#[derive(Clone)]
pub struct NonholonomicProblem {
    spec: NonholonomicSpec,
    map: FieldMap,
    offset: CellFields,
    l: usize,
    pw: Vec<f64>,
    hw: Vec<f64>,
}

/// Tolerance below which `P_F` counts as vanishing.
pub const PF_TOL: f64 = 1e-12;

pub fn assemble_nonholonomic_problem(spec: NonholonomicSpec) -> Result<NonholonomicProblem> {
    let grid = &spec.grid;
    let (n, d, cells) = (grid.dim(), spec.d, grid.cell_count());
    let k = &spec.constraint;
    let l = k.rows();
    if d == 0 || l == 0 {
        return Err(Error::Config("d and the number of constraint rows must be positive".into()));
    }
    let ok_cells = k.a.len() == cells && k.offset.len() == cells && k.b.len() == n && k.b.iter().all(|b| b.len() == cells);
    if !ok_cells {
        return Err(Error::Shape("coefficient fields must be sampled at every cell center".into()));
    }
    let ok_shapes = k.a.iter().all(|m| m.shape() == (l, d))
        && k.b.iter().flatten().all(|m| m.shape() == (l, d))
        && k.offset.iter().all(|o| o.len() == l);
    if !ok_shapes {
        return Err(Error::Shape(format!("coefficients must be {l}×{d} matrices and length-{l} offsets")));
    }
    let finite = k.a.iter().chain(k.b.iter().flatten()).all(|m| m.iter().all(|x| x.is_finite()))
        && k.offset.iter().all(|o| o.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(Error::NonFinite("constraint coefficients"));
    }
    if spec.ubar.grid() != grid || spec.ubar.placement() != Placement::Node || spec.ubar.components() != d {
        return Err(Error::Shape("boundary datum must be node-based on the problem grid with d components".into()));
    }
    let offset = CellFields {
        u: grid.node_average(d, spec.ubar.values()),
        xi: (0..n).map(|i| grid.node_partial(d, spec.ubar.values(), i)).collect(),
    };
    let vol = grid.cell_volume();
    let map = FieldMap::new(grid.clone(), d);
    Ok(NonholonomicProblem { pw: vec![vol; d * cells], hw: vec![vol; l * cells], l, map, offset, spec })
}

impl NonholonomicProblem {
    pub fn spec(&self) -> &NonholonomicSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.spec.grid
    }

    pub fn rows(&self) -> usize {
        self.l
    }

    pub fn primal_len(&self) -> usize {
        self.pw.len()
    }

    pub fn multiplier_len(&self) -> usize {
        self.hw.len()
    }

    fn fields(&self, v: &[f64]) -> CellFields {
        let mut f = self.map.apply(v);
        f.add(&self.offset);
        f
    }

    /// `A u + Σ B_i ξ_i (+ D)` on cell fields.
    fn apply_coefficients(&self, f: &CellFields, with_offset: bool) -> Vector {
        let (d, l, cells) = (self.spec.d, self.l, self.map.cells());
        let k = &self.spec.constraint;
        let mut out = Vector::zeros(l * cells);
        for c in 0..cells {
            for r in 0..l {
                let mut s = if with_offset { k.offset[c][r] } else { 0.0 };
                for j in 0..d {
                    s += k.a[c][(r, j)] * f.u[c * d + j];
                    for (i, bi) in k.b.iter().enumerate() {
                        s += bi[c][(r, j)] * f.xi[i][c * d + j];
                    }
                }
                out[c * l + r] = s;
            }
        }
        out
    }

    /// `(Aᵀλ, B_iᵀλ)` as cell fields.
    fn transpose_coefficients(&self, lambda: &Vector) -> CellFields {
        let (d, l, cells) = (self.spec.d, self.l, self.map.cells());
        let k = &self.spec.constraint;
        let mut g = CellFields::zeros(self.grid(), d);
        for c in 0..cells {
            for j in 0..d {
                for r in 0..l {
                    let lr = lambda[c * l + r];
                    g.u[c * d + j] += k.a[c][(r, j)] * lr;
                    for (i, bi) in k.b.iter().enumerate() {
                        g.xi[i][c * d + j] += bi[c][(r, j)] * lr;
                    }
                }
            }
        }
        g
    }

    fn project(&self, w: Vec<f64>) -> Vector {
        Vector::from_vec(self.grid().project_zero_mean_raw(self.spec.d, &w))
    }

    pub fn to_grid_function(&self, x: &Vector) -> GridFunction {
        GridFunction::new(self.grid().clone(), self.spec.d, Placement::Cell, x.as_slice().to_vec())
            .expect("primal vector has the problem's shape")
    }

    pub fn multiplier_to_grid_function(&self, lambda: &Vector) -> GridFunction {
        GridFunction::new(self.grid().clone(), self.l, Placement::Cell, lambda.as_slice().to_vec())
            .expect("multiplier has the problem's shape")
    }

    /// Node values of `u = ū + 𝒜v`.
    pub fn state(&self, x: &Vector) -> GridFunction {
        let a = cumulative_integral_box(&self.to_grid_function(x)).expect("shapes agree by construction");
        let values = a.values().iter().zip(self.spec.ubar.values()).map(|(a, b)| a + b).collect();
        GridFunction::new(self.grid().clone(), self.spec.d, Placement::Node, values).expect("finite state")
    }

    /// `u = ū + 𝒜v` sampled at cell centers.
    pub fn state_at_centers(&self, x: &Vector) -> Vec<f64> {
        self.fields(x.as_slice()).u
    }

    fn check_member(&self, v: &GridFunction) -> Result<()> {
        if v.grid() != self.grid() || v.placement() != Placement::Cell || v.components() != self.spec.d {
            return Err(Error::Shape("density must be cell-centered on the problem grid with d components".into()));
        }
        let residual = self.grid().zero_mean_residuals_raw(self.spec.d, v.values()).into_iter().fold(0.0, f64::max);
        if residual > ZERO_MEAN_TOL {
            return Err(Error::NotZeroMean { residual, tol: ZERO_MEAN_TOL });
        }
        Ok(())
    }
}

impl ConstrainedProblem for NonholonomicProblem {
    fn primal_weights(&self) -> &[f64] {
        &self.pw
    }
    fn multiplier_weights(&self) -> &[f64] {
        &self.hw
    }
    fn multiplier_is_grid(&self) -> bool {
        true
    }
    fn project_primal(&self, x: &mut Vector) {
        let p = self.grid().project_zero_mean_raw(self.spec.d, x.as_slice());
        x.as_mut_slice().copy_from_slice(&p);
    }

    fn objective(&self, x: &Vector) -> f64 {
        self.map.integrate(self.spec.integrand.as_ref(), &self.fields(x.as_slice()))
    }
    fn objective_grad(&self, x: &Vector) -> Vector {
        let local = self.map.local_gradient(self.spec.integrand.as_ref(), &self.fields(x.as_slice()));
        self.project(self.map.transpose(&local))
    }
    fn eq_map(&self, x: &Vector) -> Vector {
        self.apply_coefficients(&self.fields(x.as_slice()), true)
    }
    fn eq_apply(&self, _x: &Vector, w: &Vector) -> Vector {
        self.apply_coefficients(&self.map.apply(w.as_slice()), false)
    }
    fn eq_adjoint(&self, _x: &Vector, lambda: &Vector) -> Vector {
        self.project(self.map.transpose(&self.transpose_coefficients(lambda)))
    }
    fn objective_hvp(&self, x: &Vector, w: &Vector) -> Option<Vector> {
        let local = self.map.local_hessian(
            self.spec.integrand.as_ref(),
            &self.fields(x.as_slice()),
            &self.map.apply(w.as_slice()),
        )?;
        Some(self.project(self.map.transpose(&local)))
    }
    fn eq_adjoint_derivative(&self, x: &Vector, _lambda: &Vector, _w: &Vector) -> Option<Vector> {
        Some(Vector::zeros(x.len()))
    }
}

/// The constraint field `A u + Σ B_i ∂_i u + D` at cell centers.
pub fn eval_constraint_field(problem: &NonholonomicProblem, v: &GridFunction) -> Result<GridFunction> {
    if v.grid() != problem.grid() || v.placement() != Placement::Cell || v.components() != problem.spec.d {
        return Err(Error::Shape("density must be cell-centered on the problem grid with d components".into()));
    }
    let f = problem.eq_map(&Vector::from_column_slice(v.values()));
    GridFunction::new(problem.grid().clone(), problem.l, Placement::Cell, f.as_slice().to_vec())
}

/// `P_F(x) = ∫_x^b A + Σ_i ∫_{x, ≠i}^b B_i` per cell (`ℓ × d`): the nested
/// tail integrals of the constraint coefficients. Independent of `v` for
/// affine constraints.
pub fn eval_pf(problem: &NonholonomicProblem, v: &GridFunction) -> Result<Vec<DMatrix<f64>>> {
    problem.check_member(v)?;
    Ok(pf_field(problem))
}

fn pf_field(problem: &NonholonomicProblem) -> Vec<DMatrix<f64>> {
    let grid = problem.grid();
    let (d, l, cells) = (problem.spec.d, problem.l, grid.cell_count());
    let k = &problem.spec.constraint;
    let mut out = vec![DMatrix::zeros(l, d); cells];
    for r in 0..l {
        for j in 0..d {
            let a: Vec<f64> = (0..cells).map(|c| k.a[c][(r, j)]).collect();
            let mut total = grid.integral_at_centers_adjoint(1, &a);
            for (i, bi) in k.b.iter().enumerate() {
                let b: Vec<f64> = (0..cells).map(|c| bi[c][(r, j)]).collect();
                let t = grid.integral_partial_at_centers_adjoint(1, &b, i);
                total.iter_mut().zip(t).for_each(|(s, t)| *s += t);
            }
            for c in 0..cells {
                out[c][(r, j)] = total[c];
            }
        }
    }
    out
}

/// Whether `P_F` vanishes nowhere on the grid — the pointwise
/// nondegeneracy condition behind exactness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfReport {
    pub min_norm: f64,
    pub pass: bool,
}

pub fn check_pf_nonvanishing(problem: &NonholonomicProblem) -> PfReport {
    let min_norm = pf_field(problem).iter().map(|m| m.norm()).fold(f64::INFINITY, f64::min);
    PfReport { min_norm, pass: min_norm > PF_TOL }
}
