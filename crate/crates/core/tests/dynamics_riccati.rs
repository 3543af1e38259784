use graphon_lqg::dynamics::{mild_solution_deterministic, simulate, FeedbackLaw, LinearSystem};
use graphon_lqg::graphon::GraphonKernel;
use graphon_lqg::qnoise::{sample_path, QCovariance, QNoisePath, TimeGrid};
use graphon_lqg::riccati::{
    algebraic_riccati_symmetric, feedback_gain, solve_differential_riccati, solve_differential_riccati_with,
    CostOperators, RiccatiMethod, RiccatiProblem,
};
use graphon_lqg::rng::derive_seed;
use graphon_lqg::{Field, Grid, Operator};
use proptest::prelude::*;

fn grid(n: usize) -> Grid {
    Grid::new(n).unwrap()
}

fn graphon(k: usize) -> GraphonKernel<f64> {
    match k % 5 {
        0 => GraphonKernel::Constant(0.5),
        1 => GraphonKernel::UniformAttachment,
        2 => GraphonKernel::SmallWorld { sigma: 0.1, gamma: 0.3 },
        3 => GraphonKernel::Cosine,
        _ => GraphonKernel::quadratic_rank_one(),
    }
}

fn uncontrolled(a_op: Operator) -> LinearSystem<f64> {
    let g = a_op.grid();
    LinearSystem::new(a_op, Operator::identity(g), QCovariance::zero(g)).unwrap()
}

#[test]
fn euler_is_first_order_against_the_mild_solution() {
    let g = grid(20);
    let sys = uncontrolled(GraphonKernel::UniformAttachment.discretize(g).shift(-0.3));
    let x0 = Field::from_fn(g, |a| 1.0 + (4.0 * a).sin());
    let exact = mild_solution_deterministic(&sys, &x0, 1.0).unwrap();
    let errors: Vec<f64> = [0.01, 0.005, 0.0025]
        .iter()
        .map(|dt| {
            let tg = TimeGrid::new(1.0, *dt).unwrap();
            let traj = simulate(&sys, &FeedbackLaw::Zero, &x0, tg, &QNoisePath::zeros(tg, g)).unwrap();
            traj.final_state().sub(&exact).unwrap().l2_norm()
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((0.9..1.1).contains(&order), "order {order} from {errors:?}");
    }
}

#[test]
fn ito_variance_of_mode_coefficients() {
    let g = grid(30);
    let q = QCovariance::new(&GraphonKernel::UniformAttachment.discretize(g)).unwrap();
    let sys = LinearSystem::new(Operator::zero(g), Operator::identity(g), q.clone()).unwrap();
    let tg = TimeGrid::new(2.0, 0.1).unwrap();
    let x0 = Field::constant(g, 0.7);
    let spec = q.spectrum();
    let paths = 10_000;
    let modes = 5;
    let mut squares = vec![0.0; modes];
    for k in 0..paths {
        let noise = sample_path(&q, tg, derive_seed(41, k));
        let traj = simulate(&sys, &FeedbackLaw::Zero, &x0, tg, &noise).unwrap();
        let c = spec.coefficients(&traj.final_state().sub(&x0).unwrap()).unwrap();
        for r in 0..modes {
            squares[r] += c[r] * c[r];
        }
    }
    for r in 0..modes {
        let var = squares[r] / paths as f64;
        let expected = q.eigenvalues()[r] * tg.horizon();
        let se = expected * (2.0 / paths as f64).sqrt();
        assert!((var - expected).abs() < 3.0 * se, "mode {r}: {var} vs {expected}");
    }
}

#[test]
fn riccati_residual_is_second_order() {
    let n = 12;
    let g = grid(n);
    let problem = RiccatiProblem::new(
        &GraphonKernel::SmallWorld { sigma: 0.1, gamma: 0.3 }
            .discretize(g)
            .shift(0.1),
        &GraphonKernel::Constant(0.3).discretize(g).shift(1.0),
        &CostOperators::new(
            GraphonKernel::UniformAttachment.discretize(g).shift(1.0),
            Operator::scaled_identity(g, 0.5),
            Operator::scaled_identity(g, 2.0),
        )
        .unwrap(),
    )
    .unwrap();
    let residual = |dt: f64| {
        let tg = TimeGrid::new(1.0, dt).unwrap();
        let sol = problem.solve_with(tg, RiccatiMethod::Dense).unwrap();
        (1..tg.steps())
            .map(|s| {
                let d = sol.s_at(s + 1).sub(&sol.s_at(s - 1)).unwrap().scale(0.5 / dt);
                let gap = d.add(&problem.rhs(&sol.s_at(s)).unwrap()).unwrap();
                gap.kernel_hs_norm() + gap.scalar().abs()
            })
            .fold(0.0, f64::max)
    };
    let (r1, r2) = (residual(0.02), residual(0.01));
    let order = (r1 / r2).log2();
    assert!((1.8..2.2).contains(&order), "{r1} {r2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_noise_dynamics_are_linear(
        k in 0usize..5, shift in -1.0..1.0f64, c in -3.0..3.0f64, seed in any::<u64>(),
    ) {
        let g = grid(10);
        let sys = uncontrolled(graphon(k).discretize(g).shift(shift));
        let tg = TimeGrid::new(0.5, 0.01).unwrap();
        let zeros = QNoisePath::zeros(tg, g);
        let x1 = Field::from_fn(g, |a| (a * 7.0 + seed as f64 % 3.0).cos());
        let x2 = Field::from_fn(g, |a| a * a - 0.2);
        let run = |x: &Field| simulate(&sys, &FeedbackLaw::Zero, x, tg, &zeros).unwrap().final_state();
        let combined = run(&x1.add(&x2.scale(c)).unwrap());
        let separate = run(&x1).add(&run(&x2).scale(c)).unwrap();
        prop_assert!(combined.sub(&separate).unwrap().max_abs() < 1e-10 * (1.0 + separate.max_abs()));
    }

    #[test]
    fn noise_enters_additively(k in 0usize..5, seed in any::<u64>()) {
        let g = grid(8);
        let q = QCovariance::new(&GraphonKernel::UniformAttachment.discretize(g)).unwrap();
        let a_op = graphon(k).discretize(g).shift(-0.2);
        let sys = LinearSystem::new(a_op.clone(), Operator::identity(g), q.clone()).unwrap();
        let tg = TimeGrid::new(0.3, 0.01).unwrap();
        let noise = sample_path(&q, tg, seed);
        let x0 = Field::constant(g, 1.0);
        let noisy = simulate(&sys, &FeedbackLaw::Zero, &x0, tg, &noise).unwrap();
        let clean = simulate(&sys, &FeedbackLaw::Zero, &x0, tg, &QNoisePath::zeros(tg, g)).unwrap();
        let from_zero = simulate(&sys, &FeedbackLaw::Zero, &Field::zeros(g), tg, &noise).unwrap();
        let sum = clean.final_state().add(&from_zero.final_state()).unwrap();
        prop_assert!(noisy.final_state().sub(&sum).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn riccati_stays_symmetric_positive_and_bounded(
        k in 0usize..5, shift in -1.0..1.0f64, m in 0.0..2.0f64, mt in 0.0..2.0f64, r in 0.2..3.0f64,
    ) {
        let g = grid(10);
        let a_op = graphon(k).discretize(g).shift(shift);
        let b_op = GraphonKernel::Cosine.discretize(g).scale(0.2).shift(1.0);
        let costs = CostOperators::new(
            GraphonKernel::Constant(0.2 * m).discretize(g).shift(m),
            Operator::scaled_identity(g, mt),
            Operator::scaled_identity(g, r),
        ).unwrap();
        let problem = RiccatiProblem::new(&a_op, &b_op, &costs).unwrap();
        let tg = TimeGrid::new(1.0, 0.02).unwrap();
        let sol = problem.solve(tg).unwrap();
        for s in 0..=tg.steps() {
            let op = sol.s_at(s);
            prop_assert!(op.is_symmetric(1e-10));
            prop_assert!(op.min_spectral_value().unwrap() > -1e-8);
            prop_assert!(op.op_norm_estimate().unwrap() <= problem.uniform_bound(1.0 - tg.time(s)));
        }
    }

    #[test]
    fn modal_and_dense_storage_agree(k in 0usize..5, shift in -0.5..0.5f64, m in 0.1..2.0f64) {
        let g = grid(9);
        let a_op = graphon(k).discretize(g).shift(shift);
        let costs = CostOperators::scalar(g, m, 0.3, 1.0).unwrap();
        let tg = TimeGrid::new(0.5, 0.01).unwrap();
        let b = Operator::identity(g);
        let modal = solve_differential_riccati_with(&a_op, &b, &costs, tg, RiccatiMethod::Modal).unwrap();
        let dense = solve_differential_riccati_with(&a_op, &b, &costs, tg, RiccatiMethod::Dense).unwrap();
        for s in 0..=tg.steps() {
            prop_assert!(modal.s_at(s).hs_scalar_distance(&dense.s_at(s)).unwrap() < 1e-10);
        }
    }

    #[test]
    fn long_horizons_reach_the_algebraic_solution(k in 0usize..5, shift in 0.0..0.5f64) {
        let g = grid(10);
        let a_op = graphon(k).discretize(g).shift(shift);
        let m_op = Operator::identity(g);
        let costs = CostOperators::scalar(g, 1.0, 0.0, 1.0).unwrap();
        let tg = TimeGrid::new(30.0, 0.01).unwrap();
        let sol = solve_differential_riccati(&a_op, &Operator::identity(g), &costs, tg).unwrap();
        let stationary = algebraic_riccati_symmetric(&a_op, &m_op).unwrap();
        prop_assert!(sol.s_at(0).hs_scalar_distance(&stationary).unwrap() < 1e-6);
    }

    #[test]
    fn optimal_feedback_is_stabilising(k in 0usize..5, seed in any::<u64>()) {
        let g = grid(8);
        let a_op = graphon(k).discretize(g).shift(0.5);
        let costs = CostOperators::scalar(g, 1.0, 0.0, 1.0).unwrap();
        let tg = TimeGrid::new(5.0, 0.01).unwrap();
        let sys = LinearSystem::new(a_op.clone(), Operator::identity(g), QCovariance::zero(g)).unwrap();
        let sol = solve_differential_riccati(&a_op, sys.b_op(), &costs, tg).unwrap();
        let law = feedback_gain(&sol, sys.b_op(), costs.r_op()).unwrap();
        let x0 = Field::from_fn(g, |a| 1.0 + (seed % 7) as f64 * a);
        let controlled = simulate(&sys, &law, &x0, tg, &QNoisePath::zeros(tg, g)).unwrap();
        let free = simulate(&sys, &FeedbackLaw::Zero, &x0, tg, &QNoisePath::zeros(tg, g)).unwrap();
        prop_assert!(controlled.state(tg.index_of(2.5).unwrap()).l2_norm() < x0.l2_norm());
        prop_assert!(controlled.final_state().l2_norm() < free.final_state().l2_norm());
    }
}
