//! Built-in benchmark problems, their reference solutions, and two
//! deliberately defective fixtures.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::auglag::{weighted_norm, ConstrainedProblem, Vector};
use crate::boundary::{assemble_boundary_problem, BoundaryProblem, BoundaryProblemSpec};
use crate::error::{Error, Result};
use crate::function_spaces::{quadrature_weights, Grid, GridFunction, Placement};
use crate::integrand::{QuadraticBoundary, QuadraticIntegrand};
use crate::isoperimetric::{assemble_isoperimetric_problem, IsoperimetricProblem, IsoperimetricSpec};
use crate::nonholonomic::{assemble_nonholonomic_problem, AffineConstraint, NonholonomicProblem, NonholonomicSpec};
use crate::optimal_control::{
    assemble_oc_problem, double_integrator, min_energy_oracle, ControlFunction, LinearSystem, OcProblem, PropagatorMode,
};
use crate::oracle::{boundary_sum_qp, iso_dirichlet_qp, nonholo_chain_qp, ChainData};
use crate::solver::{exactness_sweep, InitialPoint, SolverConfig, SweepTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemId {
    /// `f = ξ²/2` on `(0, 1)` with `u(0) + u(1) = s`.
    BoundarySum,
    /// `min ∫(u′)²` s.t. `∫u = ζ`, `u(0) = u(1) = 0`.
    IsoDirichlet,
    /// `d = 2`, `u₁′ = u₂`, quadratic tracking objective.
    NonholoChain,
    /// `ẍ = u` from `x₀` to `x_T`.
    DoubleIntegrator,
    /// 1-D heat equation with a distributed control on a subinterval.
    #[serde(rename = "heat-1d")]
    Heat1d,
    /// Boundary problem with the constraint row repeated (LICQ fails).
    DuplicatedConstraint,
    /// `A = 0`, `B = (1, 0)ᵀ`: the second state is unreachable.
    Uncontrollable,
}

impl ProblemId {
    pub const ALL: [ProblemId; 7] = [
        ProblemId::BoundarySum,
        ProblemId::IsoDirichlet,
        ProblemId::NonholoChain,
        ProblemId::DoubleIntegrator,
        ProblemId::Heat1d,
        ProblemId::DuplicatedConstraint,
        ProblemId::Uncontrollable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::BoundarySum => "boundary-sum",
            ProblemId::IsoDirichlet => "iso-dirichlet",
            ProblemId::NonholoChain => "nonholo-chain",
            ProblemId::DoubleIntegrator => "double-integrator",
            ProblemId::Heat1d => "heat-1d",
            ProblemId::DuplicatedConstraint => "duplicated-constraint",
            ProblemId::Uncontrollable => "uncontrollable",
        }
    }

    pub fn is_fixture(self) -> bool {
        matches!(self, ProblemId::DuplicatedConstraint | ProblemId::Uncontrollable)
    }

    pub fn is_optimal_control(self) -> bool {
        matches!(self, ProblemId::DoubleIntegrator | ProblemId::Heat1d | ProblemId::Uncontrollable)
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL.into_iter().find(|id| id.name() == s).ok_or_else(|| {
            let known: Vec<_> = ProblemId::ALL.iter().map(|id| id.name()).collect();
            Error::Config(format!("unknown problem id `{s}` (known: {})", known.join(", ")))
        })
    }
}

/// Constants of the catalog entries. Unset sizes fall back to per-problem
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemParams {
    /// Grid cells; interior nodes for `heat-1d`.
    pub cells: Option<usize>,
    /// Time steps of the control problems.
    pub steps: Option<usize>,
    pub zeta: f64,
    /// Right-hand side of `u(0) + u(1) = s`.
    pub sum: f64,
    pub horizon: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub xt: Option<Vec<f64>>,
    /// Tracking weight of `nonholo-chain`.
    pub tracking: f64,
    /// Support of the `heat-1d` control.
    pub control_interval: (f64, f64),
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            cells: None,
            steps: None,
            zeta: 1.0,
            sum: 2.0,
            horizon: None,
            x0: None,
            xt: None,
            tracking: 1.0,
            control_interval: (0.2, 0.6),
        }
    }
}

impl ProblemParams {
    pub fn cells_for(&self, id: ProblemId) -> usize {
        self.cells.unwrap_or(match id {
            ProblemId::BoundarySum | ProblemId::IsoDirichlet | ProblemId::DuplicatedConstraint => 200,
            ProblemId::NonholoChain => 100,
            ProblemId::Heat1d => 20,
            ProblemId::DoubleIntegrator | ProblemId::Uncontrollable => 0,
        })
    }

    pub fn steps_for(&self, id: ProblemId) -> usize {
        self.steps.unwrap_or(match id {
            ProblemId::Heat1d => 100,
            _ => 256,
        })
    }

    pub fn horizon_for(&self, id: ProblemId) -> f64 {
        self.horizon.unwrap_or(if id == ProblemId::Heat1d { 0.5 } else { 1.0 })
    }
}

/// The chain benchmark's boundary datum and tracking target.
pub fn chain_ubar(x: f64) -> [f64; 2] {
    [x, 1.0]
}

pub fn chain_target(x: f64) -> [f64; 2] {
    [(PI * x).sin(), PI * (PI * x).cos()]
}

#[derive(Clone)]
pub enum Instance {
    Boundary(BoundaryProblem),
    Iso(IsoperimetricProblem),
    Nonholo(NonholonomicProblem),
    Oc(OcProblem),
}

/// A primal–dual point with its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub x: Vector,
    pub lambda: Vector,
    pub mu: Vector,
    pub value: f64,
}

/// Distances of a solve from the reference solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `L²` distance of the states (controls for control problems).
    pub state_l2: f64,
    pub lambda: f64,
    pub value: f64,
}

#[derive(Clone)]
pub struct Benchmark {
    pub id: ProblemId,
    pub params: ProblemParams,
    pub instance: Instance,
}

impl Benchmark {
    pub fn build(id: ProblemId, params: &ProblemParams) -> Result<Self> {
        let cells = params.cells_for(id);
        let instance = match id {
            ProblemId::BoundarySum | ProblemId::DuplicatedConstraint => {
                let grid = Grid::interval(0.0, 1.0, cells)?;
                let row: Arc<QuadraticBoundary> = Arc::new(QuadraticBoundary::affine(vec![1.0, 1.0], -params.sum));
                let copies = if id == ProblemId::DuplicatedConstraint { 2 } else { 1 };
                let spec = BoundaryProblemSpec {
                    interval: (0.0, 1.0),
                    d: 1,
                    integrand: Arc::new(QuadraticIntegrand::dirichlet(1, 1, 1.0)),
                    cost: Arc::new(QuadraticBoundary::zero(2)),
                    equalities: (0..copies).map(|_| row.clone() as _).collect(),
                    inequalities: vec![],
                };
                Instance::Boundary(assemble_boundary_problem(spec, grid)?)
            }
            ProblemId::IsoDirichlet => {
                let grid = Grid::interval(0.0, 1.0, cells)?;
                Instance::Iso(assemble_isoperimetric_problem(IsoperimetricSpec {
                    ubar: GridFunction::zeros(grid.clone(), 1, Placement::Node),
                    grid,
                    d: 1,
                    f0: Arc::new(QuadraticIntegrand::dirichlet(1, 1, 2.0)),
                    f1: Arc::new(QuadraticIntegrand::linear_in_u(vec![1.0], 1)),
                    zeta: params.zeta,
                })?)
            }
            ProblemId::NonholoChain => {
                let grid = Grid::interval(0.0, 1.0, cells)?;
                let constraint = AffineConstraint::constant(
                    &grid,
                    DMatrix::from_row_slice(1, 2, &[0.0, -1.0]),
                    vec![DMatrix::from_row_slice(1, 2, &[1.0, 0.0])],
                    DVector::zeros(1),
                );
                Instance::Nonholo(assemble_nonholonomic_problem(NonholonomicSpec {
                    ubar: GridFunction::from_fn(grid.clone(), 2, Placement::Node, |x| chain_ubar(x[0]).to_vec())?,
                    grid,
                    d: 2,
                    integrand: Arc::new(
                        QuadraticIntegrand::dirichlet(2, 1, 1.0).with_tracking(params.tracking, |x| chain_target(x[0]).to_vec()),
                    ),
                    constraint,
                })?)
            }
            ProblemId::DoubleIntegrator | ProblemId::Heat1d | ProblemId::Uncontrollable => {
                let (sys, x0, xt) = control_system(id, params)?;
                Instance::Oc(assemble_oc_problem(&sys, &x0, &xt)?)
            }
        };
        Ok(Self { id, params: params.clone(), instance })
    }

    pub fn problem(&self) -> &dyn ConstrainedProblem {
        match &self.instance {
            Instance::Boundary(p) => p,
            Instance::Iso(p) => p,
            Instance::Nonholo(p) => p,
            Instance::Oc(p) => p,
        }
    }

    /// Zero in the derivative space (or zero control), zero multipliers.
    pub fn initial_point(&self) -> InitialPoint {
        InitialPoint::zeros(self.problem())
    }

    /// Reference KKT triple from an independent oracle.
    pub fn reference(&self) -> Result<Reference> {
        let p = self.problem();
        let nl = p.multiplier_weights().len();
        let cells = self.params.cells_for(self.id);
        match &self.instance {
            Instance::Boundary(_) => {
                let mut qp = boundary_sum_qp((0.0, 1.0), cells, 1.0, self.params.sum);
                if nl > qp.rows.nrows() {
                    // Repeated constraint rows, as in the defective fixture.
                    let row = qp.rows.row(0).into_owned();
                    qp.rows = DMatrix::from_fn(nl, row.len(), |_, j| row[j]);
                    qp.rhs = DVector::from_element(nl, qp.rhs[0]);
                }
                let s = qp.solve()?;
                // Both weight vectors are unit on y and λ; v carries h, which
                // the Euclidean QP absorbs into H.
                Ok(Reference { value: s.value, x: s.x, lambda: s.multipliers.rows(0, nl).into_owned(), mu: Vector::zeros(0) })
            }
            Instance::Iso(_) => {
                let s = iso_dirichlet_qp(cells, self.params.zeta).solve()?;
                Ok(Reference { value: s.value, x: s.x, lambda: s.multipliers.rows(1, 1).into_owned(), mu: Vector::zeros(0) })
            }
            Instance::Nonholo(_) => {
                let ubar = |x: f64| chain_ubar(x);
                let target = |x: f64| chain_target(x);
                let data = ChainData { cells, alpha: 1.0, beta: self.params.tracking, ubar: &ubar, target: &target };
                let s = nonholo_chain_qp(&data).solve()?;
                let h = 1.0 / cells as f64;
                Ok(Reference {
                    value: s.value,
                    x: s.x,
                    lambda: s.multipliers.rows(0, cells).into_owned() / h,
                    mu: Vector::zeros(0),
                })
            }
            Instance::Oc(p) => {
                let s = min_energy_oracle(p.system(), p.initial_state(), p.target())?;
                Ok(Reference { x: s.control.to_vector(), lambda: s.lambda, mu: Vector::zeros(0), value: s.value })
            }
        }
    }

    /// `L²` norm of the state (control) difference between two primal points.
    pub fn state_distance(&self, x: &Vector, y: &Vector) -> f64 {
        match &self.instance {
            Instance::Oc(p) => weighted_norm(p.primal_weights(), &(x - y)),
            _ => {
                let (a, b) = (self.state(x), self.state(y));
                let w = quadrature_weights(a.grid(), Placement::Node);
                let d = a.components();
                a.values()
                    .iter()
                    .zip(b.values())
                    .enumerate()
                    .map(|(i, (p, q))| w[i / d] * (p - q).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    pub fn compare(&self, x: &Vector, lambda: &Vector, reference: &Reference) -> Comparison {
        let hw = self.problem().multiplier_weights();
        Comparison {
            state_l2: self.state_distance(x, &reference.x),
            lambda: weighted_norm(hw, &(lambda - &reference.lambda)),
            value: (self.problem().objective(x) - reference.value).abs(),
        }
    }

    /// Node values of the state; for control problems the state trajectory.
    pub fn state(&self, x: &Vector) -> GridFunction {
        match &self.instance {
            Instance::Boundary(p) => p.state(x),
            Instance::Iso(p) => p.state(x),
            Instance::Nonholo(p) => p.state(x),
            Instance::Oc(p) => {
                let sys = p.system();
                let u = p.control(x).expect("primal vector has the problem's shape");
                let traj = sys.simulate(p.initial_state(), &u).expect("shapes agree");
                let grid = Grid::interval(0.0, sys.horizon(), sys.steps()).expect("valid horizon");
                let values = traj.iter().flat_map(|s| s.iter().cloned()).collect();
                GridFunction::new(grid, sys.state_dim(), Placement::Node, values).expect("finite trajectory")
            }
        }
    }

    /// The primal variable as CSV: the density `v` (cell centers) or the
    /// control (cell centers in time). Boundary problems keep `y` separately.
    pub fn primal_csv(&self, x: &Vector) -> String {
        self.primal_function(x).to_csv()
    }

    /// Inverse of [`Benchmark::primal_csv`]; `head` is `y` for boundary
    /// problems and empty otherwise.
    pub fn primal_from_csv(&self, text: &str, head: &[f64]) -> Result<Vector> {
        let template = self.primal_function(&Vector::zeros(self.problem().primal_weights().len()));
        let f = GridFunction::from_csv(template.grid().clone(), template.components(), Placement::Cell, text)?;
        let expected_head = match &self.instance {
            Instance::Boundary(p) => p.spec().d,
            _ => 0,
        };
        if head.len() != expected_head {
            return Err(Error::Shape(format!("expected {expected_head} leading values, got {}", head.len())));
        }
        Ok(Vector::from_iterator(head.len() + f.values().len(), head.iter().chain(f.values()).cloned()))
    }

    /// Leading finite-dimensional part of the primal variable (`y`).
    pub fn primal_head(&self, x: &Vector) -> Vec<f64> {
        match &self.instance {
            Instance::Boundary(p) => p.unpack(x).0,
            _ => vec![],
        }
    }

    fn primal_function(&self, x: &Vector) -> GridFunction {
        match &self.instance {
            Instance::Boundary(p) => p.unpack(x).1,
            Instance::Iso(p) => p.to_grid_function(x),
            Instance::Nonholo(p) => p.to_grid_function(x),
            Instance::Oc(p) => {
                let sys = p.system();
                let grid = Grid::interval(0.0, sys.horizon(), sys.steps()).expect("valid horizon");
                GridFunction::new(grid, sys.control_dim(), Placement::Cell, x.as_slice().to_vec()).expect("finite control")
            }
        }
    }

    /// One fixed-`c` solve per entry of `c_list` against the reference value.
    /// Fails up front when no reference exists (e.g. uncontrollable systems).
    pub fn sweep(&self, c_list: &[f64], cfg: &SolverConfig, tol: f64) -> Result<SweepTable> {
        let reference = self.reference()?;
        exactness_sweep(self.problem(), &self.initial_point(), c_list, cfg, reference.value, tol)
    }

    pub fn control_problem(&self) -> Option<&OcProblem> {
        match &self.instance {
            Instance::Oc(p) => Some(p),
            _ => None,
        }
    }
}

fn control_system(id: ProblemId, params: &ProblemParams) -> Result<(LinearSystem, DVector<f64>, DVector<f64>)> {
    let steps = params.steps_for(id);
    let horizon = params.horizon_for(id);
    let endpoints = |h: usize, x0: DVector<f64>, xt: DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
        let pick = |v: &Option<Vec<f64>>, default: DVector<f64>| match v {
            Some(v) if v.len() == h => Ok(DVector::from_column_slice(v)),
            Some(v) => Err(Error::Shape(format!("endpoint has length {}, state dimension is {h}", v.len()))),
            None => Ok(default),
        };
        Ok((pick(&params.x0, x0)?, pick(&params.xt, xt)?))
    };
    match id {
        ProblemId::DoubleIntegrator => {
            let sys = double_integrator(horizon, steps)?;
            let (x0, xt) = endpoints(2, DVector::zeros(2), DVector::from_vec(vec![1.0, 0.0]))?;
            Ok((sys, x0, xt))
        }
        ProblemId::Uncontrollable => {
            let sys = LinearSystem::new(
                DMatrix::zeros(2, 2),
                DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
                horizon,
                steps,
                PropagatorMode::Exponential,
            )?;
            let (x0, xt) = endpoints(2, DVector::zeros(2), DVector::from_vec(vec![1.0, 1.0]))?;
            Ok((sys, x0, xt))
        }
        ProblemId::Heat1d => {
            let n = params.cells_for(id);
            if n < 2 {
                return Err(Error::Config("heat-1d needs at least 2 interior nodes".into()));
            }
            let dx = 1.0 / (n + 1) as f64;
            let lap = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
                0 => -2.0 / (dx * dx),
                1 => 1.0 / (dx * dx),
                _ => 0.0,
            });
            let (lo, hi) = params.control_interval;
            // Distributed control: one input per node inside the support.
            let support: Vec<usize> = (0..n).filter(|&i| (lo..=hi).contains(&((i + 1) as f64 * dx))).collect();
            if support.is_empty() {
                return Err(Error::Config("heat-1d control interval contains no grid node".into()));
            }
            let b = DMatrix::from_fn(n, support.len(), |i, j| if support[j] == i { 1.0 } else { 0.0 });
            let sys = LinearSystem::new(lap, b, horizon, steps, PropagatorMode::ImplicitMidpoint)?;
            let x0 = DVector::from_fn(n, |i, _| (PI * (i + 1) as f64 * dx).sin());
            let (x0, xt) = endpoints(n, x0, DVector::zeros(n))?;
            Ok((sys, x0, xt))
        }
        _ => unreachable!("not a control problem"),
    }
}

/// Control function of a control benchmark's primal vector.
pub fn control_of(b: &Benchmark, x: &Vector) -> Option<ControlFunction> {
    b.control_problem().and_then(|p| p.control(x).ok())
}
