//! Pointwise integrands `f(u, ξ, x)`, boundary functions `φ(u_a, u_b)`, and
//! the cell-field plumbing that turns a derivative-space density `v` into
//! `(u, ∇u)` at cell centers and pulls local gradients back.
//!
//! `ξ` is flattened row-major: `ξ[k * n + i] = ∂_i u_k`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::function_spaces::Grid;

/// A pointwise integrand with first-order and optional second-order oracles.
pub trait Integrand: Send + Sync {
    fn value(&self, u: &[f64], xi: &[f64], x: &[f64]) -> f64;
    /// `(∇_u f, ∇_ξ f)`.
    fn gradient(&self, u: &[f64], xi: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>);
    /// Action of the local Hessian on `(δu, δξ)`.
    fn hessian_action(&self, _u: &[f64], _xi: &[f64], _x: &[f64], _du: &[f64], _dxi: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

type PointFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// `(α/2)|ξ|² + (β/2)|u − r(x)|² + ⟨a, u⟩ + ⟨b, ξ⟩ + κ`.
#[derive(Clone)]
pub struct QuadraticIntegrand {
    pub xi_weight: f64,
    pub u_weight: f64,
    target: Option<PointFn>,
    pub u_linear: Vec<f64>,
    pub xi_linear: Vec<f64>,
    pub constant: f64,
}

impl fmt::Debug for QuadraticIntegrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadraticIntegrand")
            .field("xi_weight", &self.xi_weight)
            .field("u_weight", &self.u_weight)
            .field("has_target", &self.target.is_some())
            .field("u_linear", &self.u_linear)
            .field("xi_linear", &self.xi_linear)
            .field("constant", &self.constant)
            .finish()
    }
}

impl QuadraticIntegrand {
    /// The zero integrand for `d` components on an `n`-dimensional domain.
    pub fn zero(d: usize, n: usize) -> Self {
        Self {
            xi_weight: 0.0,
            u_weight: 0.0,
            target: None,
            u_linear: vec![0.0; d],
            xi_linear: vec![0.0; d * n],
            constant: 0.0,
        }
    }

    /// `(α/2)|ξ|²`.
    pub fn dirichlet(d: usize, n: usize, alpha: f64) -> Self {
        Self { xi_weight: alpha, ..Self::zero(d, n) }
    }

    /// `⟨a, u⟩`.
    pub fn linear_in_u(a: Vec<f64>, n: usize) -> Self {
        let d = a.len();
        Self { u_linear: a, ..Self::zero(d, n) }
    }

    /// Adds `(β/2)|u − r(x)|²`.
    pub fn with_tracking(mut self, beta: f64, target: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.u_weight = beta;
        self.target = Some(Arc::new(target));
        self
    }

    pub fn with_xi_linear(mut self, b: Vec<f64>) -> Self {
        self.xi_linear = b;
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = c;
        self
    }

    fn residual(&self, u: &[f64], x: &[f64]) -> Vec<f64> {
        match &self.target {
            Some(r) => u.iter().zip(r(x)).map(|(a, b)| a - b).collect(),
            None => u.to_vec(),
        }
    }
}

impl Integrand for QuadraticIntegrand {
    fn value(&self, u: &[f64], xi: &[f64], x: &[f64]) -> f64 {
        let r = self.residual(u, x);
        0.5 * self.xi_weight * xi.iter().map(|s| s * s).sum::<f64>()
            + 0.5 * self.u_weight * r.iter().map(|s| s * s).sum::<f64>()
            + dot(&self.u_linear, u)
            + dot(&self.xi_linear, xi)
            + self.constant
    }

    fn gradient(&self, u: &[f64], xi: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = self.residual(u, x);
        let gu = r.iter().zip(&self.u_linear).map(|(r, a)| self.u_weight * r + a).collect();
        let gxi = xi.iter().zip(&self.xi_linear).map(|(s, b)| self.xi_weight * s + b).collect();
        (gu, gxi)
    }

    fn hessian_action(&self, _u: &[f64], _xi: &[f64], _x: &[f64], du: &[f64], dxi: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((
            du.iter().map(|s| self.u_weight * s).collect(),
            dxi.iter().map(|s| self.xi_weight * s).collect(),
        ))
    }
}

type ValueFn = Box<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64], &[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>;
type HessFn = Box<dyn Fn(&[f64], &[f64], &[f64], &[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>;

/// Integrand assembled from closures; the Hessian action is optional.
pub struct ClosureIntegrand {
    value: ValueFn,
    gradient: GradFn,
    hessian: Option<HessFn>,
}

impl ClosureIntegrand {
    pub fn new(
        value: impl Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        Self { value: Box::new(value), gradient: Box::new(gradient), hessian: None }
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&[f64], &[f64], &[f64], &[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Box::new(hessian));
        self
    }
}

impl Integrand for ClosureIntegrand {
    fn value(&self, u: &[f64], xi: &[f64], x: &[f64]) -> f64 {
        (self.value)(u, xi, x)
    }
    fn gradient(&self, u: &[f64], xi: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.gradient)(u, xi, x)
    }
    fn hessian_action(&self, u: &[f64], xi: &[f64], x: &[f64], du: &[f64], dxi: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        self.hessian.as_ref().map(|h| h(u, xi, x, du, dxi))
    }
}

/// A function of the boundary values `z = (u_a, u_b) ∈ ℝ^{2d}`.
pub trait BoundaryFunction: Send + Sync {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
    fn hessian_action(&self, _z: &[f64], _dz: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// `½ zᵀ H z + ⟨b, z⟩ + κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBoundary {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl QuadraticBoundary {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>, constant: f64) -> Self {
        Self { hessian, linear, constant }
    }

    pub fn affine(linear: Vec<f64>, constant: f64) -> Self {
        let n = linear.len();
        Self { hessian: DMatrix::zeros(n, n), linear: DVector::from_vec(linear), constant }
    }

    pub fn zero(dim: usize) -> Self {
        Self::affine(vec![0.0; dim], 0.0)
    }
}

impl BoundaryFunction for QuadraticBoundary {
    fn value(&self, z: &[f64]) -> f64 {
        let z = DVector::from_column_slice(z);
        0.5 * z.dot(&(&self.hessian * &z)) + self.linear.dot(&z) + self.constant
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(z);
        (&self.hessian * z + &self.linear).iter().cloned().collect()
    }
    fn hessian_action(&self, _z: &[f64], dz: &[f64]) -> Option<Vec<f64>> {
        Some((&self.hessian * DVector::from_column_slice(dz)).iter().cloned().collect())
    }
}

type BValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type BGradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type BHessFn = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Boundary function assembled from closures.
pub struct ClosureBoundary {
    value: BValueFn,
    gradient: BGradFn,
    hessian: Option<BHessFn>,
}

impl ClosureBoundary {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { value: Box::new(value), gradient: Box::new(gradient), hessian: None }
    }

    pub fn with_hessian(mut self, hessian: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.hessian = Some(Box::new(hessian));
        self
    }
}

impl BoundaryFunction for ClosureBoundary {
    fn value(&self, z: &[f64]) -> f64 {
        (self.value)(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        (self.gradient)(z)
    }
    fn hessian_action(&self, z: &[f64], dz: &[f64]) -> Option<Vec<f64>> {
        self.hessian.as_ref().map(|h| h(z, dz))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `u` and `∂_i u` sampled at cell centers, point-major like
/// [`GridFunction`](crate::GridFunction) (`u[c * d + k]`, `xi[i][c * d + k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct CellFields {
    pub u: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
}

impl CellFields {
    pub fn zeros(grid: &Grid, d: usize) -> Self {
        let len = d * grid.cell_count();
        Self { u: vec![0.0; len], xi: vec![vec![0.0; len]; grid.dim()] }
    }

    fn gather(&self, d: usize, c: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.xi.len();
        let u = self.u[c * d..(c + 1) * d].to_vec();
        let mut xi = vec![0.0; d * n];
        for k in 0..d {
            for (i, axis) in self.xi.iter().enumerate() {
                xi[k * n + i] = axis[c * d + k];
            }
        }
        (u, xi)
    }

    fn scatter(&mut self, d: usize, c: usize, gu: &[f64], gxi: &[f64]) {
        let n = self.xi.len();
        for k in 0..d {
            self.u[c * d + k] = gu[k];
            for (i, axis) in self.xi.iter_mut().enumerate() {
                axis[c * d + k] = gxi[k * n + i];
            }
        }
    }

    pub fn add(&mut self, other: &CellFields) {
        self.u.iter_mut().zip(&other.u).for_each(|(a, b)| *a += b);
        for (a, b) in self.xi.iter_mut().zip(&other.xi) {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
        }
    }
}

/// The linear map `v ↦ (𝒜v, ∂_1 𝒜v, …, ∂_n 𝒜v)` at cell centers and its
/// transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub grid: Grid,
    pub d: usize,
    centers: Vec<Vec<f64>>,
}

impl FieldMap {
    pub fn new(grid: Grid, d: usize) -> Self {
        let centers = (0..grid.cell_count()).map(|c| grid.cell_center(c)).collect();
        Self { grid, d, centers }
    }

    pub fn cells(&self) -> usize {
        self.grid.cell_count()
    }

    pub fn center(&self, c: usize) -> &[f64] {
        &self.centers[c]
    }

    pub fn apply(&self, v: &[f64]) -> CellFields {
        CellFields {
            u: self.grid.integral_at_centers(self.d, v),
            xi: (0..self.grid.dim()).map(|i| self.grid.integral_partial_at_centers(self.d, v, i)).collect(),
        }
    }

    /// `𝒜ᵀ g_u + Σ_i (∂_i 𝒜)ᵀ g_ξ_i`: positive-sign nested tail integrals.
    pub fn transpose(&self, g: &CellFields) -> Vec<f64> {
        let mut out = self.grid.integral_at_centers_adjoint(self.d, &g.u);
        for (i, gi) in g.xi.iter().enumerate() {
            let t = self.grid.integral_partial_at_centers_adjoint(self.d, gi, i);
            out.iter_mut().zip(t).for_each(|(a, b)| *a += b);
        }
        out
    }

    /// `Σ_cells vol · f(u_c, ξ_c, x_c)`.
    pub fn integrate(&self, f: &dyn Integrand, fields: &CellFields) -> f64 {
        let cells = self.cells();
        let vol = self.grid.cell_volume();
        (0..cells)
            .map(|c| {
                let (u, xi) = fields.gather(self.d, c);
                f.value(&u, &xi, &self.centers[c])
            })
            .sum::<f64>()
            * vol
    }

    /// Pointwise `(∇_u f, ∇_ξ f)` at every cell.
    pub fn local_gradient(&self, f: &dyn Integrand, fields: &CellFields) -> CellFields {
        let cells = self.cells();
        let mut out = CellFields::zeros(&self.grid, self.d);
        for c in 0..cells {
            let (u, xi) = fields.gather(self.d, c);
            let (gu, gxi) = f.gradient(&u, &xi, &self.centers[c]);
            out.scatter(self.d, c, &gu, &gxi);
        }
        out
    }

    /// Pointwise Hessian action on the direction fields `dir`.
    pub fn local_hessian(&self, f: &dyn Integrand, fields: &CellFields, dir: &CellFields) -> Option<CellFields> {
        let cells = self.cells();
        let mut out = CellFields::zeros(&self.grid, self.d);
        for c in 0..cells {
            let (u, xi) = fields.gather(self.d, c);
            let (du, dxi) = dir.gather(self.d, c);
            let (hu, hxi) = f.hessian_action(&u, &xi, &self.centers[c], &du, &dxi)?;
            out.scatter(self.d, c, &hu, &hxi);
        }
        Some(out)
    }
}
