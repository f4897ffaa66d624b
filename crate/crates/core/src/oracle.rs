//! Independent reference solutions.
//!
//! The discretised benchmarks with quadratic objectives and affine
//! constraints are equality-constrained quadratic programs. Here they are
//! written down as explicit matrices over the cell values of `v` and solved
//! through the dense KKT system, without going through the problem oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `min ½ xᵀHx + gᵀx + κ` s.t. `E x = e`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualityQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Euclidean multipliers `ν` with `Hx + g + Eᵀν = 0`.
    pub multipliers: DVector<f64>,
    pub value: f64,
}

impl EqualityQp {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x) + self.constant
    }

    /// Solves `[H Eᵀ; E 0] (x, ν) = (−g, e)`.
    pub fn solve(&self) -> Result<QpSolution> {
        let n = self.hessian.nrows();
        let m = self.rows.nrows();
        if self.hessian.ncols() != n || self.linear.len() != n || self.rows.ncols() != n || self.rhs.len() != m {
            return Err(Error::Shape("inconsistent QP data".into()));
        }
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.hessian);
        kkt.view_mut((0, n), (n, m)).copy_from(&self.rows.transpose());
        kkt.view_mut((n, 0), (m, n)).copy_from(&self.rows);
        let mut b = DVector::zeros(n + m);
        b.rows_mut(0, n).copy_from(&(-&self.linear));
        b.rows_mut(n, m).copy_from(&self.rhs);
        let sol = kkt.clone().full_piv_lu().solve(&b).ok_or(Error::Singular)?;
        let residual = (&kkt * &sol - &b).norm();
        if !(residual <= 1e-8 * (1.0 + b.norm())) {
            return Err(Error::Singular);
        }
        let x = sol.rows(0, n).into_owned();
        let multipliers = sol.rows(n, m).into_owned();
        Ok(QpSolution { value: self.value(&x), x, multipliers })
    }
}

/// Maps cell values of `v` (one component) to cell-center values of
/// `∫_a^x v`: `h (Σ_{j<c} v_j + ½ v_c)`.
pub fn center_integration_matrix(cells: usize, h: f64) -> DMatrix<f64> {
    DMatrix::from_fn(cells, cells, |c, j| match j.cmp(&c) {
        std::cmp::Ordering::Less => h,
        std::cmp::Ordering::Equal => 0.5 * h,
        std::cmp::Ordering::Greater => 0.0,
    })
}

/// Selects component `k` of `d` from a point-major vector of `cells` points.
fn component(cells: usize, d: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(cells, cells * d, |c, j| if j == c * d + k { 1.0 } else { 0.0 })
}

/// `min ∫ ½ α |u′|²` on `(a, b)` s.t. `u(a) + u(b) = s`, over `x = (y, v)`.
pub fn boundary_sum_qp(interval: (f64, f64), cells: usize, alpha: f64, s: f64) -> EqualityQp {
    let h = (interval.1 - interval.0) / cells as f64;
    let n = 1 + cells;
    let mut hessian = DMatrix::zeros(n, n);
    for c in 0..cells {
        hessian[(1 + c, 1 + c)] = alpha * h;
    }
    let mut rows = DMatrix::zeros(1, n);
    rows[(0, 0)] = 2.0;
    for c in 0..cells {
        rows[(0, 1 + c)] = h;
    }
    EqualityQp { hessian, linear: DVector::zeros(n), constant: 0.0, rows, rhs: DVector::from_element(1, s) }
}

/// `min ∫₀¹ (u′)²` s.t. `∫₀¹ u = ζ`, `u(0) = u(1) = 0`, over the cell values
/// of `v = u′`. Rows: zero mean of `v`, then the integral constraint.
pub fn iso_dirichlet_qp(cells: usize, zeta: f64) -> EqualityQp {
    let h = 1.0 / cells as f64;
    let s = center_integration_matrix(cells, h);
    let mut rows = DMatrix::zeros(2, cells);
    for c in 0..cells {
        rows[(0, c)] = h;
        rows[(1, c)] = h * s.column(c).sum();
    }
    EqualityQp {
        hessian: DMatrix::identity(cells, cells) * (2.0 * h),
        linear: DVector::zeros(cells),
        constant: 0.0,
        rows,
        rhs: DVector::from_vec(vec![0.0, zeta]),
    }
}

/// Discrete solution of [`iso_dirichlet_qp`] in closed form:
/// `v_c = α(½ − x_c)` with `α = 12ζ/(1 − h²)`, `λ = −24ζ/(1 − h²)`,
/// value `12ζ²/(1 − h²)`.
pub fn iso_dirichlet_closed_form(cells: usize, zeta: f64) -> (DVector<f64>, f64, f64) {
    let h = 1.0 / cells as f64;
    let scale = 1.0 / (1.0 - h * h);
    let v = DVector::from_fn(cells, |c, _| 12.0 * zeta * scale * (0.5 - (c as f64 + 0.5) * h));
    (v, -24.0 * zeta * scale, 12.0 * zeta * zeta * scale)
}

/// Data of the chain benchmark: `d = 2`, `n = 1` on `(0, 1)`, constraint
/// `u₁′ − u₂ = 0` at cell centers, integrand
/// `(α/2)|u′|² + (β/2)|u − r(x)|²`, endpoints from `ū`.
pub struct ChainData<'a> {
    pub cells: usize,
    pub alpha: f64,
    pub beta: f64,
    pub ubar: &'a dyn Fn(f64) -> [f64; 2],
    pub target: &'a dyn Fn(f64) -> [f64; 2],
}

/// Rows: the `N` collocated constraints, then one zero-mean row per
/// component. The grid multiplier is `λ_c = ν_c / h`.
pub fn nonholo_chain_qp(data: &ChainData<'_>) -> EqualityQp {
    let n = data.cells;
    let h = 1.0 / n as f64;
    let node = |j: usize| (data.ubar)(j as f64 * h);
    // Offsets from ū at cell centers: averages and difference quotients.
    let ubar_c: Vec<[f64; 2]> = (0..n).map(|c| {
        let (a, b) = (node(c), node(c + 1));
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }).collect();
    let dubar_c: Vec<[f64; 2]> = (0..n).map(|c| {
        let (a, b) = (node(c), node(c + 1));
        [(b[0] - a[0]) / h, (b[1] - a[1]) / h]
    }).collect();

    let s = center_integration_matrix(n, h);
    let sel: Vec<DMatrix<f64>> = (0..2).map(|k| component(n, 2, k)).collect();
    let su: Vec<DMatrix<f64>> = sel.iter().map(|p| &s * p).collect();

    let mut hessian = DMatrix::zeros(2 * n, 2 * n);
    let mut linear = DVector::zeros(2 * n);
    let mut constant = 0.0;
    for k in 0..2 {
        // (α/2) h Σ_c (ū′_c + v_c)²
        hessian += sel[k].transpose() * &sel[k] * (data.alpha * h);
        let xi0 = DVector::from_fn(n, |c, _| dubar_c[c][k]);
        linear += sel[k].transpose() * &xi0 * (data.alpha * h);
        constant += 0.5 * data.alpha * h * xi0.norm_squared();
        // (β/2) h Σ_c (ū_c − r_c + (S v)_c)²
        hessian += su[k].transpose() * &su[k] * (data.beta * h);
        let r0 = DVector::from_fn(n, |c, _| ubar_c[c][k] - (data.target)((c as f64 + 0.5) * h)[k]);
        linear += su[k].transpose() * &r0 * (data.beta * h);
        constant += 0.5 * data.beta * h * r0.norm_squared();
    }

    // u₁′ − u₂ = (ū′₁ + v₁) − (ū₂ + S v₂).
    let mut rows = DMatrix::zeros(n + 2, 2 * n);
    let mut rhs = DVector::zeros(n + 2);
    rows.view_mut((0, 0), (n, 2 * n)).copy_from(&(&sel[0] - &su[1]));
    for c in 0..n {
        rhs[c] = ubar_c[c][1] - dubar_c[c][0];
    }
    for c in 0..n {
        rows[(n, 2 * c)] = h;
        rows[(n + 1, 2 * c + 1)] = h;
    }
    EqualityQp { hessian, linear, constant, rows, rhs }
}
