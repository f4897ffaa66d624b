use ::auglag::auglag::{
    constraint_violation, eval_augmented_lagrangian, eval_eta, eval_q_form, grad_augmented_lagrangian, weighted_norm,
};
use ::auglag::catalog::Instance;
use ::auglag::function_spaces::{
    cumulative_integral_1d, cumulative_integral_box, inner_product, mixed_difference, project_zero_mean,
    zero_mean_residuals,
};
use ::auglag::isoperimetric::constraint_gradient_norm;
use ::auglag::nonholonomic::eval_pf;
use ::auglag::optimal_control::{adjoint_input_map, gramian, input_map, min_energy_oracle};
use ::auglag::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn cell_function(n: usize, cells: usize, d: usize, values: &[f64]) -> GridFunction {
    let grid = Grid::unit_box(n, cells).unwrap();
    let len = grid.cell_count() * d;
    GridFunction::new(grid, d, Placement::Cell, values.iter().cycle().take(len).cloned().collect()).unwrap()
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn combine(a: &GridFunction, b: &GridFunction, s: f64, t: f64) -> GridFunction {
    let values = a.values().iter().zip(b.values()).map(|(x, y)| s * x + t * y).collect();
    GridFunction::new(a.grid().clone(), a.components(), a.placement(), values).unwrap()
}

fn small(id: ProblemId) -> Benchmark {
    let params = ProblemParams { cells: Some(if id == ProblemId::Heat1d { 6 } else { 16 }), steps: Some(24), ..Default::default() };
    Benchmark::build(id, &params).unwrap()
}

const FAMILIES: [ProblemId; 4] =
    [ProblemId::BoundarySum, ProblemId::IsoDirichlet, ProblemId::NonholoChain, ProblemId::DoubleIntegrator];

fn random_point(b: &Benchmark, seed: &[f64], c: f64) -> (Vector, DualState) {
    let p = b.problem();
    let mut draw = seed.iter().cycle().cloned();
    let mut x = Vector::from_fn(p.primal_weights().len(), |_, _| draw.next().unwrap());
    p.project_primal(&mut x);
    let lambda = Vector::from_fn(p.multiplier_weights().len(), |_, _| draw.next().unwrap());
    let mu = Vector::from_fn(p.ineq_count(), |_, _| draw.next().unwrap());
    (x, DualState { lambda, mu, c })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_an_orthogonal_projector(
        n in 1usize..=3,
        a in prop::collection::vec(-1.0f64..1.0, 7..40),
        b in prop::collection::vec(-1.0f64..1.0, 7..40),
        s in -2.0f64..2.0,
    ) {
        let cells = [0, 9, 5, 3][n];
        let (v, w) = (cell_function(n, cells, 2, &a), cell_function(n, cells, 2, &b));
        let (pv, pw) = (project_zero_mean(&v), project_zero_mean(&w));
        prop_assert!(sup(project_zero_mean(&pv).values(), pv.values()) <= 1e-12);
        let lin = project_zero_mean(&combine(&v, &w, s, 1.0));
        prop_assert!(sup(lin.values(), combine(&pv, &pw, s, 1.0).values()) <= 1e-12);
        let norm = |f: &GridFunction| inner_product(f, f).unwrap().sqrt();
        prop_assert!(norm(&pv) <= norm(&v) * (1.0 + 1e-12));
        let lhs = inner_product(&pv, &w).unwrap();
        let rhs = inner_product(&v, &pw).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + norm(&v) * norm(&w)));
        prop_assert!(zero_mean_residuals(&pv).into_iter().all(|r| r <= 1e-12));
    }

    #[test]
    fn one_dimensional_projection_subtracts_the_mean(a in prop::collection::vec(-5.0f64..5.0, 3..50)) {
        let v = cell_function(1, a.len(), 1, &a);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let expected: Vec<f64> = a.iter().map(|x| x - mean).collect();
        prop_assert!(sup(project_zero_mean(&v).values(), &expected) <= 1e-13);
    }

    #[test]
    fn cumulative_integral_round_trips(
        n in 1usize..=3,
        a in prop::collection::vec(-3.0f64..3.0, 5..30),
        y in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let cells = [0, 17, 6, 4][n];
        let v = cell_function(n, cells, 2, &a);
        let scale = 1.0 + a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let back = mixed_difference(&cumulative_integral_box(&v).unwrap()).unwrap();
        prop_assert!(sup(back.values(), v.values()) <= 1e-13 * scale);
        if n == 1 {
            let back = mixed_difference(&cumulative_integral_1d(&y, &v).unwrap()).unwrap();
            prop_assert!(sup(back.values(), v.values()) <= 1e-13 * scale * (1.0 + y[0].abs() + y[1].abs()));
        }
    }

    #[test]
    fn kkt_identity_holds_for_every_penalty(family in 0usize..4, log_c in -3.0f64..4.0) {
        let b = small(FAMILIES[family]);
        let r = b.reference().unwrap();
        let dual = DualState::new(r.lambda, r.mu, 10f64.powf(log_c));
        let f = b.problem().objective(&r.x);
        let l = eval_augmented_lagrangian(b.problem(), &r.x, &dual).unwrap();
        prop_assert!((l - f).abs() <= 1e-8 * (1.0 + f.abs()));
        prop_assert!(eval_eta(b.problem(), &r.x, &dual).unwrap() <= 1e-16 * (1.0 + f * f));
    }

    #[test]
    fn auglag_is_monotone_in_penalty_and_eta_nonnegative(
        family in 0usize..4,
        seed in prop::collection::vec(-2.0f64..2.0, 11..23),
        log_c in -2.0f64..3.0,
        factor in 1.5f64..20.0,
    ) {
        let b = small(FAMILIES[family]);
        let c = 10f64.powf(log_c);
        let (x, lo) = random_point(&b, &seed, c);
        let hi = DualState { c: c * factor, ..lo.clone() };
        let (l_lo, l_hi) = (
            eval_augmented_lagrangian(b.problem(), &x, &lo).unwrap(),
            eval_augmented_lagrangian(b.problem(), &x, &hi).unwrap(),
        );
        prop_assert!(l_hi >= l_lo - 1e-12 * (1.0 + l_lo.abs()));
        if b.problem().ineq_count() == 0 && constraint_violation(b.problem(), &x) > 1e-6 {
            prop_assert!(l_hi > l_lo);
        }
        prop_assert!(eval_eta(b.problem(), &x, &lo).unwrap() >= 0.0);
    }

    #[test]
    fn q_form_is_nonnegative_and_quadratic(
        family in 0usize..4,
        seed in prop::collection::vec(-2.0f64..2.0, 11..23),
        t in -4.0f64..4.0,
    ) {
        let b = small(FAMILIES[family]);
        let (x, dual) = random_point(&b, &seed, 1.0);
        let q = eval_q_form(b.problem(), &x);
        let base = q.eval(&dual.lambda, &dual.mu);
        prop_assert!(base >= -1e-12);
        let scaled = q.eval(&(&dual.lambda * t), &(&dual.mu * t));
        prop_assert!((scaled - t * t * base).abs() <= 1e-12 * (1.0 + (t * t * base).abs()));
    }

    #[test]
    fn input_map_adjointness_and_gramian(
        exponential in any::<bool>(),
        steps in 4usize..40,
        a in prop::collection::vec(-1.0f64..1.0, 4),
        u in prop::collection::vec(-1.0f64..1.0, 8..80),
        l in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let mode = if exponential { PropagatorMode::Exponential } else { PropagatorMode::ImplicitMidpoint };
        let sys = LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &a),
            DMatrix::from_row_slice(2, 1, &[0.3, 1.0]),
            1.0,
            steps,
            mode,
        ).unwrap();
        let u = ControlFunction::from_vector(&sys, &Vector::from_iterator(steps, u.iter().cycle().take(steps).cloned())).unwrap();
        let l = DVector::from_column_slice(&l);
        let fu = input_map(&sys, &u).unwrap();
        let fl = adjoint_input_map(&sys, &l).unwrap();
        let inner = sys.dt() * u.values.iter().zip(&fl.values).map(|(p, q)| p * q).sum::<f64>();
        prop_assert!((fu.dot(&l) - inner).abs() <= 1e-12 * (1.0 + u.l2_norm() * l.norm()));

        let w = gramian(&sys);
        prop_assert!((&w - w.transpose()).amax() <= 1e-14 * (1.0 + w.amax()));
        prop_assert!(w.clone().symmetric_eigenvalues().min() >= -1e-12 * (1.0 + w.amax()));
        let composed = input_map(&sys, &fl).unwrap();
        prop_assert!((composed - &w * &l).amax() <= 1e-12 * (1.0 + w.amax() * l.amax()));
    }

    #[test]
    fn affine_constraint_field_is_constant(a in prop::collection::vec(-2.0f64..2.0, 2..64)) {
        let b = small(ProblemId::NonholoChain);
        let Instance::Nonholo(p) = &b.instance else { unreachable!() };
        let zero = p.to_grid_function(&Vector::zeros(p.primal_len()));
        let mut x = Vector::from_iterator(p.primal_len(), a.iter().cycle().take(p.primal_len()).cloned());
        p.project_primal(&mut x);
        let (f0, f1) = (eval_pf(p, &zero).unwrap(), eval_pf(p, &p.to_grid_function(&x)).unwrap());
        for (m0, m1) in f0.iter().zip(&f1) {
            prop_assert_eq!(m0, m1);
        }
    }

    #[test]
    fn isoperimetric_constraint_gradient_norm_is_constant(a in prop::collection::vec(-2.0f64..2.0, 2..64)) {
        let b = small(ProblemId::IsoDirichlet);
        let Instance::Iso(p) = &b.instance else { unreachable!() };
        let base = constraint_gradient_norm(p, &Vector::zeros(p.primal_len()));
        let mut x = Vector::from_iterator(p.primal_len(), a.iter().cycle().take(p.primal_len()).cloned());
        p.project_primal(&mut x);
        prop_assert!((constraint_gradient_norm(p, &x) - base).abs() <= 1e-12);
    }
}

#[test]
fn oracle_triples_are_stationary_for_the_augmented_lagrangian() {
    for id in FAMILIES {
        let b = small(id);
        let r = b.reference().unwrap();
        for c in [1.0, 10.0] {
            let dual = DualState::new(r.lambda.clone(), r.mu.clone(), c);
            let g = grad_augmented_lagrangian(b.problem(), &r.x, &dual, GradientMode::Analytic).unwrap();
            let scale = 1.0 + r.value.abs();
            assert!(weighted_norm(b.problem().primal_weights(), &g.x) <= 1e-8 * scale, "{id} c={c}");
            assert!(weighted_norm(b.problem().multiplier_weights(), &g.lambda) <= 1e-8 * scale, "{id} c={c}");
        }
    }
}

#[test]
fn double_integrator_solves_match_the_oracle_from_small_penalties() {
    let b = Benchmark::build(ProblemId::DoubleIntegrator, &ProblemParams { steps: Some(64), ..Default::default() }).unwrap();
    let p = b.control_problem().unwrap();
    let oracle = min_energy_oracle(p.system(), p.initial_state(), p.target()).unwrap();
    for c0 in [1.0, 10.0] {
        let r = minimize_auglag(b.problem(), &b.initial_point(), &SolverConfig { c0, ..Default::default() }).unwrap();
        assert!(r.converged(), "c0 = {c0}: {:?}", r.status);
        let du = weighted_norm(b.problem().primal_weights(), &(&r.x - oracle.control.to_vector()));
        assert!(du <= 1e-5, "c0 = {c0}: ‖u − u*‖ = {du}");
        assert!((&r.dual.lambda - &oracle.lambda).norm() <= 1e-4, "c0 = {c0}");
    }
}

#[test]
fn inner_steps_never_increase_the_augmented_lagrangian() {
    for id in FAMILIES {
        let b = small(id);
        let r = minimize_auglag(b.problem(), &b.initial_point(), &SolverConfig::default()).unwrap();
        assert!(r.converged(), "{id}");
        for w in r.log.windows(2).filter(|w| w[0].round == w[1].round) {
            assert!(w[1].auglag <= w[0].auglag, "{id}: iteration {}", w[1].iteration);
        }
    }
}

#[test]
fn warm_start_at_larger_penalty_keeps_the_kkt_residual() {
    for id in FAMILIES {
        let b = small(id);
        let cfg = SolverConfig::default();
        let first = minimize_auglag(b.problem(), &b.initial_point(), &cfg).unwrap();
        let warm = InitialPoint { x: first.x.clone(), lambda: first.dual.lambda.clone(), mu: first.dual.mu.clone() };
        let second = minimize_auglag(b.problem(), &warm, &SolverConfig { c0: 10.0 * first.dual.c, ..cfg }).unwrap();
        assert!(second.kkt.max() <= first.kkt.max(), "{id}: {} > {}", second.kkt.max(), first.kkt.max());
    }
}

#[test]
fn identical_runs_give_identical_logs() {
    let b = small(ProblemId::NonholoChain);
    let run = || minimize_auglag(b.problem(), &b.initial_point(), &SolverConfig::default()).unwrap().log_csv();
    assert_eq!(run(), run());
}
