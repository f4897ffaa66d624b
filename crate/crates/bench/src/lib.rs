//! Shared fixtures for the criterion benchmarks.

use auglag::auglag::DualState;
use auglag::{Benchmark, ProblemId, ProblemParams, Vector};

/// A catalog problem with a point near, but not at, its KKT point.
pub struct Probe {
    pub bench: Benchmark,
    pub x: Vector,
    pub dual: DualState,
}

pub fn probe(id: ProblemId, cells: usize) -> Probe {
    let params = if id.is_optimal_control() {
        ProblemParams { steps: Some(cells), ..Default::default() }
    } else {
        ProblemParams { cells: Some(cells), ..Default::default() }
    };
    let bench = Benchmark::build(id, &params).expect("catalog problem builds");
    let r = bench.reference().expect("oracle available");
    let x = r.x.map_with_location(|i, _, v| v + 1e-2 * (i as f64).sin());
    let dual = DualState::new(r.lambda.add_scalar(0.1), r.mu, 10.0);
    Probe { bench, x, dual }
}

/// Benchmarks with a closed-form oracle.
pub const FAMILIES: [ProblemId; 4] =
    [ProblemId::BoundarySum, ProblemId::IsoDirichlet, ProblemId::NonholoChain, ProblemId::DoubleIntegrator];
