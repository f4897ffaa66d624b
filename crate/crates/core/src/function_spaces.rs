//! Discrete function spaces on uniform interval/box grids.
//!
//! Derivative-space densities `v` live at cell centers, primitives `u` at grid
//! nodes. With the rectangle rule on cells the cumulative integral and the
//! iterated forward difference are exact inverses of each other.
//!
//! Flat storage is row-major over the spatial axes (last axis fastest) with the
//! component index innermost: `values[point * components + k]`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute per-line tolerance for membership in the zero-mean subspace.
pub const ZERO_MEAN_TOL: f64 = 1e-12;

/// Uniform tensor grid on a box `∏ (a_i, b_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    bounds: Vec<(f64, f64)>,
    cells: Vec<usize>,
}

impl Grid {
    pub fn new(bounds: Vec<(f64, f64)>, cells: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if bounds.len() != cells.len() {
            return Err(Error::InvalidGrid(format!(
                "{} bounds for {} axes",
                bounds.len(),
                cells.len()
            )));
        }
        for (axis, (&(a, b), &n)) in bounds.iter().zip(&cells).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidGrid(format!("axis {axis}: need a < b, got ({a}, {b})")));
            }
            if n < 2 {
                return Err(Error::InvalidGrid(format!("axis {axis}: need at least 2 cells, got {n}")));
            }
        }
        Ok(Self { bounds, cells })
    }

    pub fn interval(a: f64, b: f64, cells: usize) -> Result<Self> {
        Self::new(vec![(a, b)], vec![cells])
    }

    /// The unit cube `(0, 1)^dim` with `cells` cells per axis.
    pub fn unit_box(dim: usize, cells: usize) -> Result<Self> {
        Self::new(vec![(0.0, 1.0); dim], vec![cells; dim])
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn width(&self, axis: usize) -> f64 {
        let (a, b) = self.bounds[axis];
        (b - a) / self.cells[axis] as f64
    }

    pub fn length(&self, axis: usize) -> f64 {
        let (a, b) = self.bounds[axis];
        b - a
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn node_count(&self) -> usize {
        self.cells.iter().map(|n| n + 1).product()
    }

    pub fn cell_shape(&self) -> Vec<usize> {
        self.cells.clone()
    }

    pub fn node_shape(&self) -> Vec<usize> {
        self.cells.iter().map(|n| n + 1).collect()
    }

    pub fn shape(&self, placement: Placement) -> Vec<usize> {
        match placement {
            Placement::Cell => self.cell_shape(),
            Placement::Node => self.node_shape(),
        }
    }

    pub fn point_count(&self, placement: Placement) -> usize {
        match placement {
            Placement::Cell => self.cell_count(),
            Placement::Node => self.node_count(),
        }
    }

    /// Coordinates of the point with flat index `flat` (cell center or node).
    pub fn coordinates(&self, placement: Placement, flat: usize) -> Vec<f64> {
        let shape = self.shape(placement);
        let idx = unravel(flat, &shape);
        let offset = match placement {
            Placement::Cell => 0.5,
            Placement::Node => 0.0,
        };
        idx.iter()
            .enumerate()
            .map(|(axis, &i)| self.bounds[axis].0 + (i as f64 + offset) * self.width(axis))
            .collect()
    }

    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        self.coordinates(Placement::Cell, flat)
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.coordinates(Placement::Node, flat)
    }

    /// Cell-center sampling of the primitive `𝒜v` (node averaging over all
    /// axes of the cumulative integral). Linear in `v`.
    pub fn integral_at_centers(&self, d: usize, v: &[f64]) -> Vec<f64> {
        let mut data = v.to_vec();
        let mut shape = self.cell_shape();
        for axis in 0..self.dim() {
            let h = self.width(axis);
            (data, shape) = map_axis(&data, &shape, d, axis, shape[axis], |line, out| {
                midpoint_cumsum(h, line, out)
            });
        }
        data
    }

    /// Transpose of [`Grid::integral_at_centers`]: nested tail integrals
    /// `∫_{x_1}^{b_1} … ∫_{x_n}^{b_n}` evaluated at cell centers.
    pub fn integral_at_centers_adjoint(&self, d: usize, g: &[f64]) -> Vec<f64> {
        let mut data = g.to_vec();
        let mut shape = self.cell_shape();
        for axis in 0..self.dim() {
            let h = self.width(axis);
            (data, shape) = map_axis(&data, &shape, d, axis, shape[axis], |line, out| {
                midpoint_tail(h, line, out)
            });
        }
        data
    }

    /// Cell-center sampling of `∂_axis 𝒜v`.
    pub fn integral_partial_at_centers(&self, d: usize, v: &[f64], axis: usize) -> Vec<f64> {
        let mut data = v.to_vec();
        let mut shape = self.cell_shape();
        for k in (0..self.dim()).filter(|&k| k != axis) {
            let h = self.width(k);
            (data, shape) = map_axis(&data, &shape, d, k, shape[k], |line, out| {
                midpoint_cumsum(h, line, out)
            });
        }
        data
    }

    /// Transpose of [`Grid::integral_partial_at_centers`]: tail integrals over
    /// every axis except `axis`, which is held at the evaluation point.
    pub fn integral_partial_at_centers_adjoint(&self, d: usize, g: &[f64], axis: usize) -> Vec<f64> {
        let mut data = g.to_vec();
        let mut shape = self.cell_shape();
        for k in (0..self.dim()).filter(|&k| k != axis) {
            let h = self.width(k);
            (data, shape) = map_axis(&data, &shape, d, k, shape[k], |line, out| {
                midpoint_tail(h, line, out)
            });
        }
        data
    }

    /// Average of node values over the corners of each cell.
    pub fn node_average(&self, d: usize, u: &[f64]) -> Vec<f64> {
        let mut data = u.to_vec();
        let mut shape = self.node_shape();
        for axis in 0..self.dim() {
            (data, shape) = map_axis(&data, &shape, d, axis, shape[axis] - 1, |line, out| {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = 0.5 * (line[j] + line[j + 1]);
                }
            });
        }
        data
    }

    /// Forward difference of node values along `axis`, averaged over the
    /// remaining axes, at cell centers.
    pub fn node_partial(&self, d: usize, u: &[f64], axis: usize) -> Vec<f64> {
        let mut data = u.to_vec();
        let mut shape = self.node_shape();
        for k in 0..self.dim() {
            let h = self.width(k);
            (data, shape) = map_axis(&data, &shape, d, k, shape[k] - 1, |line, out| {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = if k == axis {
                        (line[j + 1] - line[j]) / h
                    } else {
                        0.5 * (line[j] + line[j + 1])
                    };
                }
            });
        }
        data
    }

    /// Orthogonal projection onto the zero-axis-mean subspace, written as the
    /// inclusion–exclusion sum over multi-indices `α ∈ {0,1}^n` of
    /// `(−1)^{|α|} c_α S_α v` with `c_α = ∏ (b_i − a_i)^{−α_i}`.
    pub fn project_zero_mean_raw(&self, d: usize, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = v.to_vec();
        for alpha in 1u32..(1u32 << n) {
            let mut term = v.to_vec();
            let mut coeff = 1.0;
            for axis in (0..n).filter(|&i| alpha & (1 << i) != 0) {
                term = self.axis_integral_broadcast(d, &term, axis);
                coeff /= self.length(axis);
            }
            let sign = if alpha.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            for (o, t) in out.iter_mut().zip(&term) {
                *o += sign * coeff * t;
            }
        }
        out
    }

    /// `S_i v`: the integral of `v` along each line parallel to `axis`,
    /// broadcast back along that line.
    pub fn axis_integral_broadcast(&self, d: usize, v: &[f64], axis: usize) -> Vec<f64> {
        let h = self.width(axis);
        let shape = self.cell_shape();
        map_axis(v, &shape, d, axis, shape[axis], |line, out| {
            let s: f64 = h * line.iter().sum::<f64>();
            out.fill(s);
        })
        .0
    }

    /// Largest absolute line integral along each axis.
    pub fn zero_mean_residuals_raw(&self, d: usize, v: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|axis| {
                self.axis_integral_broadcast(d, v, axis)
                    .iter()
                    .fold(0.0_f64, |m, s| m.max(s.abs()))
            })
            .collect()
    }
}

/// Where the samples of a [`GridFunction`] sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Cell,
    Node,
}

/// Samples of a vector-valued function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    components: usize,
    placement: Placement,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, components: usize, placement: Placement, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::Shape("grid function needs at least one component".into()));
        }
        let expected = grid.point_count(placement) * components;
        if values.len() != expected {
            return Err(Error::Shape(format!("expected {expected} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function values"));
        }
        Ok(Self { grid, components, placement, values })
    }

    pub fn zeros(grid: Grid, components: usize, placement: Placement) -> Self {
        let len = grid.point_count(placement) * components;
        Self { grid, components, placement, values: vec![0.0; len] }
    }

    /// Samples `f` at every cell center or node.
    pub fn from_fn(
        grid: Grid,
        components: usize,
        placement: Placement,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.point_count(placement) * components);
        for p in 0..grid.point_count(placement) {
            let sample = f(&grid.coordinates(placement, p));
            if sample.len() != components {
                return Err(Error::Shape(format!(
                    "sampler returned {} components, expected {components}",
                    sample.len()
                )));
            }
            values.extend(sample);
        }
        Self::new(grid, components, placement, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn point(&self, p: usize) -> &[f64] {
        &self.values[p * self.components..(p + 1) * self.components]
    }

    fn require(&self, placement: Placement, what: &str) -> Result<()> {
        if self.placement != placement {
            return Err(Error::Shape(format!("{what} expects {placement:?}-placed data")));
        }
        Ok(())
    }

    /// One row per point: coordinates, then components, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.grid.dim())
            .map(|i| format!("x{i}"))
            .chain((1..=self.components).map(|k| format!("c{k}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for p in 0..self.grid.point_count(self.placement) {
            let coords = self.grid.coordinates(self.placement, p);
            let row: Vec<String> = coords
                .iter()
                .chain(self.point(p))
                .map(|x| format!("{x:.16e}"))
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Reads values written by [`GridFunction::to_csv`] back onto `grid`.
    pub fn from_csv(grid: Grid, components: usize, placement: Placement, text: &str) -> Result<Self> {
        let n = grid.dim();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n + components {
                return Err(Error::Parse(format!("line {}: expected {} fields", lineno + 1, n + components)));
            }
            for field in &fields[n..] {
                let x: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                values.push(x);
            }
        }
        Self::new(grid, components, placement, values)
    }
}

/// `u_0 = y`, `u_{k+1} = u_k + h v_k` on a 1-D grid.
pub fn cumulative_integral_1d(y: &[f64], v: &GridFunction) -> Result<GridFunction> {
    v.require(Placement::Cell, "cumulative_integral_1d")?;
    if v.grid.dim() != 1 {
        return Err(Error::Shape("cumulative_integral_1d needs a 1-D grid".into()));
    }
    let d = v.components;
    if y.len() != d {
        return Err(Error::Shape(format!("initial value has {} components, density has {d}", y.len())));
    }
    let h = v.grid.width(0);
    let n = v.grid.cells[0];
    let mut values = Vec::with_capacity((n + 1) * d);
    values.extend_from_slice(y);
    for k in 0..n {
        for c in 0..d {
            let prev = values[k * d + c];
            values.push(prev + h * v.values[k * d + c]);
        }
    }
    GridFunction::new(v.grid.clone(), d, Placement::Node, values)
}

/// Node values `∏h_j · Σ_{j < i} v_j` of the iterated integral `𝒜v`.
pub fn cumulative_integral_box(v: &GridFunction) -> Result<GridFunction> {
    v.require(Placement::Cell, "cumulative_integral_box")?;
    let grid = &v.grid;
    let d = v.components;
    let mut data = v.values.clone();
    let mut shape = grid.cell_shape();
    for axis in 0..grid.dim() {
        let h = grid.width(axis);
        (data, shape) = map_axis(&data, &shape, d, axis, shape[axis] + 1, |line, out| {
            out[0] = 0.0;
            for (j, x) in line.iter().enumerate() {
                out[j + 1] = out[j] + h * x;
            }
        });
    }
    GridFunction::new(grid.clone(), d, Placement::Node, data)
}

/// Discrete mixed derivative `D^{(1,…,1)}`: iterated forward differences of
/// node values, giving a cell-centered function.
pub fn mixed_difference(u: &GridFunction) -> Result<GridFunction> {
    u.require(Placement::Node, "mixed_difference")?;
    let grid = &u.grid;
    let d = u.components;
    let mut data = u.values.clone();
    let mut shape = grid.node_shape();
    for axis in 0..grid.dim() {
        let h = grid.width(axis);
        (data, shape) = map_axis(&data, &shape, d, axis, shape[axis] - 1, |line, out| {
            for (j, o) in out.iter_mut().enumerate() {
                *o = (line[j + 1] - line[j]) / h;
            }
        });
    }
    GridFunction::new(grid.clone(), d, Placement::Cell, data)
}

/// Entry `i` is the largest `|h_i Σ v|` over lines parallel to axis `i`.
pub fn zero_mean_residuals(v: &GridFunction) -> Vec<f64> {
    v.grid.zero_mean_residuals_raw(v.components, &v.values)
}

pub fn project_zero_mean(v: &GridFunction) -> GridFunction {
    let values = v.grid.project_zero_mean_raw(v.components, &v.values);
    GridFunction { values, ..v.clone() }
}

/// Discrete `L²` pairing. Cell data uses the rectangle rule; node data the
/// tensor trapezoidal rule.
pub fn inner_product(u: &GridFunction, w: &GridFunction) -> Result<f64> {
    if u.grid != w.grid || u.placement != w.placement || u.components != w.components {
        return Err(Error::Shape("inner product of functions on different spaces".into()));
    }
    let d = u.components;
    let weights = quadrature_weights(&u.grid, u.placement);
    Ok(weights
        .iter()
        .enumerate()
        .map(|(p, wt)| {
            let a = &u.values[p * d..(p + 1) * d];
            let b = &w.values[p * d..(p + 1) * d];
            wt * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
        })
        .sum())
}

/// Per-point quadrature weights for the given placement.
pub fn quadrature_weights(grid: &Grid, placement: Placement) -> Vec<f64> {
    match placement {
        Placement::Cell => vec![grid.cell_volume(); grid.cell_count()],
        Placement::Node => {
            let shape = grid.node_shape();
            (0..grid.node_count())
                .map(|p| {
                    unravel(p, &shape)
                        .iter()
                        .enumerate()
                        .map(|(axis, &i)| {
                            let h = grid.width(axis);
                            if i == 0 || i == grid.cells[axis] {
                                0.5 * h
                            } else {
                                h
                            }
                        })
                        .product()
                })
                .collect()
        }
    }
}

/// Row-major multi-index of a flat position.
pub fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for axis in (0..shape.len()).rev() {
        idx[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    idx
}

/// Applies a line kernel along `axis` of a row-major array with trailing
/// component dimension `d`; the axis length may change to `out_len`.
pub(crate) fn map_axis(
    data: &[f64],
    shape: &[usize],
    d: usize,
    axis: usize,
    out_len: usize,
    mut kernel: impl FnMut(&[f64], &mut [f64]),
) -> (Vec<f64>, Vec<usize>) {
    let len_in = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product::<usize>() * d;
    let mut out = vec![0.0; outer * out_len * inner];
    let mut line = vec![0.0; len_in];
    let mut res = vec![0.0; out_len];
    for o in 0..outer {
        for i in 0..inner {
            for (j, x) in line.iter_mut().enumerate() {
                *x = data[(o * len_in + j) * inner + i];
            }
            kernel(&line, &mut res);
            for (j, x) in res.iter().enumerate() {
                out[(o * out_len + j) * inner + i] = *x;
            }
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape[axis] = out_len;
    (out, out_shape)
}

/// `out_j = h (Σ_{m<j} v_m + v_j / 2)`.
fn midpoint_cumsum(h: f64, v: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, x) in out.iter_mut().zip(v) {
        *o = h * (acc + 0.5 * x);
        acc += x;
    }
}

/// `out_j = h (Σ_{m>j} g_m + g_j / 2)`.
fn midpoint_tail(h: f64, g: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, x) in out.iter_mut().zip(g).rev() {
        *o = h * (acc + 0.5 * x);
        acc += x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cells(grid: &Grid, d: usize, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.cell_count() * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GridFunction::new(grid.clone(), d, Placement::Cell, values).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_axes() {
        assert!(Grid::interval(0.0, 1.0, 1).is_err());
        assert!(Grid::interval(1.0, 1.0, 4).is_err());
        assert!(Grid::new(vec![(0.0, 1.0)], vec![4, 4]).is_err());
        let g = Grid::new(vec![(0.0, 2.0), (-1.0, 1.0)], vec![4, 5]).unwrap();
        assert_eq!(g.node_count(), 30);
        assert!((g.width(0) - 0.5).abs() < 1e-15);
        assert!((g.cell_volume() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn cumulative_integral_of_constant() {
        let g = Grid::interval(0.0, 1.0, 4).unwrap();
        let v = GridFunction::new(g, 1, Placement::Cell, vec![1.0; 4]).unwrap();
        let u = cumulative_integral_1d(&[0.0], &v).unwrap();
        for (a, b) in u.values().iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn cumulative_integral_of_zero_is_initial_value() {
        let g = Grid::interval(0.0, 1.0, 7).unwrap();
        let v = GridFunction::zeros(g, 1, Placement::Cell);
        let u = cumulative_integral_1d(&[2.0], &v).unwrap();
        assert!(u.values().iter().all(|&x| x == 2.0));
    }

    #[test]
    fn cumulative_integral_of_midpoints() {
        let g = Grid::interval(0.0, 1.0, 10).unwrap();
        let v = GridFunction::from_fn(g, 1, Placement::Cell, |x| vec![x[0]]).unwrap();
        let u = cumulative_integral_1d(&[0.0], &v).unwrap();
        assert!((u.values()[10] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cumulative_integral_dimension_mismatch() {
        let g = Grid::interval(0.0, 1.0, 4).unwrap();
        let v = GridFunction::zeros(g, 2, Placement::Cell);
        assert!(matches!(cumulative_integral_1d(&[0.0], &v), Err(Error::Shape(_))));
    }

    #[test]
    fn box_integral_of_one_is_product_of_coordinates() {
        let g = Grid::unit_box(2, 5).unwrap();
        let v = GridFunction::new(g.clone(), 1, Placement::Cell, vec![1.0; 25]).unwrap();
        let u = cumulative_integral_box(&v).unwrap();
        for p in 0..g.node_count() {
            let x = g.node(p);
            assert!((u.values()[p] - x[0] * x[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn box_integral_round_trip() {
        for dim in 1..=3 {
            let g = Grid::new(vec![(0.0, 1.0), (-1.0, 2.0), (0.5, 1.0)][..dim].to_vec(), vec![5, 4, 3][..dim].to_vec())
                .unwrap();
            let v = random_cells(&g, 2, dim as u64);
            let back = mixed_difference(&cumulative_integral_box(&v).unwrap()).unwrap();
            let scale = v.values().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            for (a, b) in back.values().iter().zip(v.values()) {
                assert!((a - b).abs() <= 1e-13 * scale, "dim {dim}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn residuals_of_constant_one() {
        let g = Grid::interval(0.0, 1.0, 8).unwrap();
        let v = GridFunction::new(g, 1, Placement::Cell, vec![1.0; 8]).unwrap();
        let r = zero_mean_residuals(&v);
        assert!((r[0] - 1.0).abs() < 1e-15);
        let z = GridFunction::zeros(Grid::unit_box(3, 3).unwrap(), 1, Placement::Cell);
        assert_eq!(zero_mean_residuals(&z), vec![0.0; 3]);
    }

    #[test]
    fn projection_in_one_dimension_subtracts_mean() {
        let g = Grid::interval(0.0, 1.0, 6).unwrap();
        let v = GridFunction::new(g.clone(), 1, Placement::Cell, vec![3.0; 6]).unwrap();
        assert!(project_zero_mean(&v).values().iter().all(|x| x.abs() < 1e-15));

        let w = random_cells(&g, 1, 11);
        let mean = w.values().iter().sum::<f64>() / 6.0;
        for (p, x) in project_zero_mean(&w).values().iter().zip(w.values()) {
            assert!((p - (x - mean)).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_of_first_coordinate_on_unit_square() {
        // x₁ is constant along x₂-lines, so it is orthogonal to X and the
        // four inclusion–exclusion terms cancel: x₁ − ½ − x₁ + ½ = 0.
        let g = Grid::unit_box(2, 6).unwrap();
        let v = GridFunction::from_fn(g.clone(), 1, Placement::Cell, |x| vec![x[0]]).unwrap();
        let p = project_zero_mean(&v);
        assert!(p.values().iter().all(|x| x.abs() < 1e-14));
        // x₁ − ½ is not in X: its x₂-line integrals do not vanish.
        let shifted = GridFunction::from_fn(g, 1, Placement::Cell, |x| vec![x[0] - 0.5]).unwrap();
        assert!((zero_mean_residuals(&shifted)[1] - 5.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn projection_matches_iterated_mean_removal() {
        // Independent route: apply (I - S_i / |b_i - a_i|) axis by axis.
        let g = Grid::new(vec![(0.0, 2.0), (1.0, 1.5), (-1.0, 0.0)], vec![3, 4, 5]).unwrap();
        let v = random_cells(&g, 2, 5);
        let mut iterated = v.values().to_vec();
        for axis in 0..3 {
            let s = g.axis_integral_broadcast(2, &iterated, axis);
            for (x, si) in iterated.iter_mut().zip(&s) {
                *x -= si / g.length(axis);
            }
        }
        let p = project_zero_mean(&v);
        for (a, b) in p.values().iter().zip(&iterated) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn inner_product_examples() {
        let g = Grid::interval(0.0, 1.0, 4).unwrap();
        let one = GridFunction::new(g.clone(), 1, Placement::Cell, vec![1.0; 4]).unwrap();
        assert!((inner_product(&one, &one).unwrap() - 1.0).abs() < 1e-15);
        let e = GridFunction::new(g.clone(), 1, Placement::Cell, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((inner_product(&e, &e).unwrap() - 0.25).abs() < 1e-15);
        let p = project_zero_mean(&random_cells(&g, 1, 3));
        assert!(inner_product(&p, &one).unwrap().abs() < 1e-12);
        let other = GridFunction::zeros(g, 2, Placement::Cell);
        assert!(inner_product(&one, &other).is_err());
    }

    #[test]
    fn node_inner_product_uses_trapezoid_weights() {
        let g = Grid::interval(0.0, 2.0, 4).unwrap();
        let one = GridFunction::new(g, 1, Placement::Node, vec![1.0; 5]).unwrap();
        assert!((inner_product(&one, &one).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn transposes_match_under_euclidean_pairing() {
        let g = Grid::new(vec![(0.0, 1.0), (0.0, 2.0)], vec![4, 3]).unwrap();
        let a = random_cells(&g, 2, 1);
        let b = random_cells(&g, 2, 2);
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        let lhs = dot(&g.integral_at_centers(2, a.values()), b.values());
        let rhs = dot(a.values(), &g.integral_at_centers_adjoint(2, b.values()));
        assert!((lhs - rhs).abs() < 1e-13);
        for axis in 0..2 {
            let lhs = dot(&g.integral_partial_at_centers(2, a.values(), axis), b.values());
            let rhs = dot(a.values(), &g.integral_partial_at_centers_adjoint(2, b.values(), axis));
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn center_operators_agree_with_node_route() {
        let g = Grid::new(vec![(0.0, 1.0), (0.0, 2.0)], vec![4, 3]).unwrap();
        let v = random_cells(&g, 1, 9);
        let u = cumulative_integral_box(&v).unwrap();
        let direct = g.integral_at_centers(1, v.values());
        let via_nodes = g.node_average(1, u.values());
        for (a, b) in direct.iter().zip(&via_nodes) {
            assert!((a - b).abs() < 1e-14);
        }
        for axis in 0..2 {
            let direct = g.integral_partial_at_centers(1, v.values(), axis);
            let via_nodes = g.node_partial(1, u.values(), axis);
            for (a, b) in direct.iter().zip(&via_nodes) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = Grid::unit_box(2, 3).unwrap();
        let v = random_cells(&g, 2, 4);
        let text = v.to_csv();
        assert!(text.starts_with("x1,x2,c1,c2\n"));
        let back = GridFunction::from_csv(g, 2, Placement::Cell, &text).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = Grid::interval(0.0, 1.0, 2).unwrap();
        assert!(GridFunction::new(g, 1, Placement::Cell, vec![0.0, f64::NAN]).is_err());
    }
}
