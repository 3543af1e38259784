//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::Instant;

use graphon_lqg::dynamics::{quadratic_cost, simulate, LinearSystem};
use graphon_lqg::experiments::{
    run_convergence_study, run_infinite_horizon_comparison, run_optimality_check, run_table1, ConvergenceConfig,
    ExperimentReport, InfHorizonConfig, OptimalityConfig, Table1Config, TABLE1_REFERENCE,
};
use graphon_lqg::graphon::GraphonKernel;
use graphon_lqg::lowrank::{
    lifted_feedback, simulate_projected, solve_lowrank_lqg, OrthonormalBasis, ProjectedSystem, ProjectionMode,
};
use graphon_lqg::qnoise::{empirical_covariance, interval_cross_covariance, sample_path, QCovariance, TimeGrid};
use graphon_lqg::riccati::{
    feedback_gain, solve_differential_riccati, solve_differential_riccati_with, CostOperators, RiccatiMethod,
    RiccatiProblem,
};
use graphon_lqg::rng::{derive_seed, standard_normals};
use graphon_lqg::{Field, Grid, Kernel, Operator};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

type Criterion = fn() -> Result<Outcome, String>;

fn grid(n: usize) -> Grid {
    Grid::new(n).unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn failed_checks(report: &ExperimentReport) -> String {
    report
        .checks
        .iter()
        .map(|c| {
            format!(
                "{}={:.4e}{}",
                c.name,
                c.value,
                if c.passed || !c.gating { "" } else { "(!)" }
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn ac1_table1() -> Result<Outcome, String> {
    let report = run_table1(&Table1Config::default()).map_err(err)?;
    let table = report.get_table("table1").ok_or("no table1")?;
    let (eig, lra, disc) = (
        table.column("eigenvalue").ok_or("eigenvalue")?,
        table.column("long_range_value").ok_or("long_range_value")?,
        table.column("discounted_value").ok_or("discounted_value")?,
    );
    let mut misses = Vec::new();
    for (k, (name, e, l, d)) in TABLE1_REFERENCE.iter().enumerate() {
        for (what, got, want, tol) in [
            ("eigenvalue", eig[k], *e, 2e-3),
            ("long-range", lra[k], *l, 1e-2),
            ("discounted", disc[k], *d, 1e-2),
        ] {
            if (got - want).abs() > tol {
                misses.push(format!("{name} {what} {got:.4} vs {want} (tol {tol})"));
            }
        }
    }
    let detail = if misses.is_empty() {
        "15/15 cells within tolerance".to_string()
    } else {
        format!("{}/15 cells within tolerance; {}", 15 - misses.len(), misses.join("; "))
    };
    Ok(Outcome::new(misses.is_empty(), detail))
}

fn ac2_spectra() -> Result<Outcome, String> {
    let n = 400;
    let g = grid(n);
    let top = |k: GraphonKernel<f64>| -> Result<Vec<f64>, String> {
        Ok(k.discretize(g).spectral_decompose().map_err(err)?.eigenvalues()[..2].to_vec())
    };
    let uag = top(GraphonKernel::UniformAttachment)?[0];
    let rank_one = top(GraphonKernel::quadratic_rank_one())?[0];
    let cosine = top(GraphonKernel::Cosine)?;
    let errors = [
        (uag - 4.0 / (PI * PI)).abs(),
        (rank_one - 8.0 / 15.0).abs(),
        (cosine[0] - 0.5).abs(),
        (cosine[1] - 0.5).abs(),
    ];
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome::new(
        worst < 1e-3,
        format!(
            "n={n}: UAG {uag:.6} (4/pi^2), rank-one {rank_one:.6} (8/15), cosine {:.6}/{:.6}; worst error {worst:.2e}",
            cosine[0], cosine[1]
        ),
    ))
}

fn random_psd(seed: u64, n: usize) -> Operator {
    let g = standard_normals::<f64>(seed, n, n);
    let shift = standard_normals::<f64>(derive_seed(seed, 1), 1, 1)[(0, 0)].abs();
    let kernel = Kernel::from_fn(grid(n), |i, j| {
        (0..n).map(|k| g[(i, k)] * g[(j, k)]).sum::<f64>() / n as f64
    });
    Operator::new(kernel, shift)
}

fn ac3_operator_algebra() -> Result<Outcome, String> {
    let n = 64;
    let (mut sqrt_err, mut mercer_err, mut compose_err) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..50u64 {
        let op = random_psd(derive_seed(2024, k), n);
        let root = op.sqrt().map_err(err)?;
        sqrt_err = sqrt_err.max(root.compose(&root).map_err(err)?.hs_scalar_distance(&op).map_err(err)?);
        let rebuilt = op.spectral_decompose().map_err(err)?.reconstruct();
        mercer_err = mercer_err.max(rebuilt.hs_scalar_distance(&op).map_err(err)?);

        let other = random_psd(derive_seed(4048, k), n);
        let f = Field::new(
            grid(n),
            standard_normals::<f64>(derive_seed(99, k), 1, n)
                .iter()
                .cloned()
                .collect(),
        )
        .map_err(err)?;
        let once = op.compose(&other).map_err(err)?.apply(&f).map_err(err)?;
        let twice = op.apply(&other.apply(&f).map_err(err)?).map_err(err)?;
        compose_err = compose_err.max(once.sub(&twice).map_err(err)?.l2_norm());
    }
    Ok(Outcome::new(
        sqrt_err < 1e-8 && mercer_err < 1e-8 && compose_err < 1e-12,
        format!("50 operators, n={n}: sqrt {sqrt_err:.2e}, Mercer {mercer_err:.2e}, compose {compose_err:.2e}"),
    ))
}

/// RK4 in time-to-go for `ds/dτ = 2as − (b²/r)s² + m`, sampled every `record` steps.
fn scalar_oracle(a: f64, b: f64, m: f64, r: f64, mt: f64, horizon: f64, steps: usize, record: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    let f = |s: f64| 2.0 * a * s - b * b / r * s * s + m;
    let mut s = mt;
    let mut out = vec![s];
    for k in 1..=steps {
        let k1 = f(s);
        let k2 = f(s + 0.5 * h * k1);
        let k3 = f(s + 0.5 * h * k2);
        let k4 = f(s + h * k3);
        s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if k % record == 0 {
            out.push(s);
        }
    }
    out.reverse();
    out
}

fn central_difference_residual(problem: &RiccatiProblem<f64>, dt: f64) -> Result<f64, String> {
    let tg = TimeGrid::new(1.0, dt).map_err(err)?;
    let sol = problem.solve_with(tg, RiccatiMethod::Dense).map_err(err)?;
    let mut worst = 0.0f64;
    for s in 1..tg.steps() {
        let derivative = sol.s_at(s + 1).sub(&sol.s_at(s - 1)).map_err(err)?.scale(0.5 / dt);
        let rhs = problem.rhs(&sol.s_at(s)).map_err(err)?;
        let gap = derivative.add(&rhs).map_err(err)?;
        worst = worst.max(gap.kernel_hs_norm() + gap.scalar().abs());
    }
    Ok(worst)
}

fn ac4_riccati() -> Result<Outcome, String> {
    let g = grid(4);
    let tg = TimeGrid::new(1.0, 0.001).map_err(err)?;
    let mut oracle_err = 0.0f64;
    for (a, b, m, r, mt) in [
        (0.1, 0.1, 1.0, 1.0, 0.0),
        (0.5, 1.0, 2.0, 0.5, 1.0),
        (-0.3, 0.7, 0.5, 2.0, 0.25),
    ] {
        let costs = CostOperators::scalar(g, m, mt, r).map_err(err)?;
        let oracle = scalar_oracle(a, b, m, r, mt, 1.0, 1_000_000, 1000);
        for method in [RiccatiMethod::Dense, RiccatiMethod::Modal] {
            let sol = solve_differential_riccati_with(
                &Operator::scaled_identity(g, a),
                &Operator::scaled_identity(g, b),
                &costs,
                tg,
                method,
            )
            .map_err(err)?;
            for (s, want) in oracle.iter().enumerate() {
                oracle_err = oracle_err.max((sol.scalar_at(s) - want).abs() + sol.kernel_hs_norm_at(s));
            }
        }
    }

    let n = 16;
    let gn = grid(n);
    let a_op = GraphonKernel::UniformAttachment.discretize(gn).shift(0.2);
    let b_op = GraphonKernel::Cosine.discretize(gn).scale(0.3).shift(1.0);
    let costs = CostOperators::new(
        GraphonKernel::Constant(0.5).discretize(gn).shift(1.0),
        GraphonKernel::quadratic_rank_one().discretize(gn),
        Operator::scaled_identity(gn, 1.0),
    )
    .map_err(err)?;
    let problem = RiccatiProblem::new(&a_op, &b_op, &costs).map_err(err)?;
    let residuals: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|dt| central_difference_residual(&problem, *dt))
        .collect::<Result<_, _>>()?;
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let second_order = orders.iter().all(|p| (1.8..=2.2).contains(p));

    let mut violations = 0;
    let mut solves = 0;
    let graphons = [
        GraphonKernel::Constant(0.5),
        GraphonKernel::UniformAttachment,
        GraphonKernel::SmallWorld { sigma: 0.1, gamma: 0.3 },
        GraphonKernel::Cosine,
        GraphonKernel::quadratic_rank_one(),
    ];
    for graphon in &graphons {
        for (shift, m, mt, horizon) in [(0.1, 1.0, 0.0, 1.0), (-0.5, 0.5, 2.0, 2.0), (1.0, 2.0, 1.0, 1.5)] {
            let a_op = graphon.discretize(gn).shift(shift);
            let costs = CostOperators::scalar(gn, m, mt, 1.0).map_err(err)?;
            let tg = TimeGrid::new(horizon, 0.01).map_err(err)?;
            for (b_op, method) in [
                (Operator::identity(gn), RiccatiMethod::Modal),
                (
                    GraphonKernel::Cosine.discretize(gn).scale(0.2).shift(1.0),
                    RiccatiMethod::Dense,
                ),
            ] {
                let problem = RiccatiProblem::new(&a_op, &b_op, &costs).map_err(err)?;
                let sol = problem.solve_with(tg, method).map_err(err)?;
                solves += 1;
                for s in 0..=tg.steps() {
                    let norm = sol.s_at(s).op_norm_estimate().map_err(err)?;
                    if norm > problem.uniform_bound(horizon - tg.time(s)) {
                        violations += 1;
                    }
                }
            }
        }
    }

    Ok(Outcome::new(
        oracle_err < 1e-8 && second_order && violations == 0,
        format!(
            "oracle error {oracle_err:.2e}; residuals {} (orders {}); bound violations {violations} over {solves} solves",
            residuals.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>().join("/"),
            orders.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join("/")
        ),
    ))
}

fn ac5_stationary() -> Result<Outcome, String> {
    let report = run_infinite_horizon_comparison(&InfHorizonConfig::default()).map_err(err)?;
    Ok(Outcome::new(report.passed(), failed_checks(&report)))
}

fn ac6_noise() -> Result<Outcome, String> {
    let n = 50;
    let paths_count = 10_000;
    let q = QCovariance::new(&GraphonKernel::UniformAttachment.discretize(grid(n))).map_err(err)?;
    let tg = TimeGrid::new(1.0, 0.1).map_err(err)?;
    let paths: Vec<_> = (0..paths_count)
        .map(|k| sample_path(&q, tg, derive_seed(6, k as u64)))
        .collect();

    let cov = empirical_covariance(&paths, 1.0).map_err(err)?;
    let cov_err = cov.max_abs_diff(q.op().kernel()).map_err(err)?;
    let cross = interval_cross_covariance(&paths, (0.0, 0.5), (0.5, 1.0)).map_err(err)?;
    let cross_err = cross.max_abs_diff(&Kernel::zeros(grid(n))).map_err(err)?;

    let spectrum = q.spectrum();
    let rank = q.rank();
    let mut sums = vec![0.0; rank];
    let mut squares = vec![0.0; rank];
    for p in &paths {
        let c = spectrum.coefficients(&p.cumulative(tg.steps())).map_err(err)?;
        for r in 0..rank {
            sums[r] += c[r];
            squares[r] += c[r] * c[r];
        }
    }
    let count = paths_count as f64;
    let mut worst_z = 0.0f64;
    let mut within = 0;
    for r in 0..rank {
        let var = (squares[r] - sums[r] * sums[r] / count) / (count - 1.0);
        let expected = q.eigenvalues()[r];
        let se = expected * (2.0 / (count - 1.0)).sqrt();
        let z = (var - expected).abs() / se;
        worst_z = worst_z.max(z);
        if z < 3.0 {
            within += 1;
        }
    }
    Ok(Outcome::new(
        cov_err < 0.05 && cross_err < 0.05 && within == rank,
        format!(
            "{paths_count} paths, n={n}: covariance {cov_err:.4}, cross-covariance {cross_err:.4}, {within}/{rank} mode variances within 3 SE (worst {worst_z:.3} SE)"
        ),
    ))
}

fn ac7_lowrank() -> Result<Outcome, String> {
    let n = 50;
    let g = grid(n);
    let graphon = GraphonKernel::quadratic_rank_one();
    let basis = OrthonormalBasis::from_profile(&graphon, g).map_err(err)?;
    let sys = LinearSystem::new(
        graphon.discretize(g).shift(0.1),
        Operator::scaled_identity(g, 0.1),
        QCovariance::rank_one(&basis.function(0)).map_err(err)?,
    )
    .map_err(err)?;
    let costs = CostOperators::scalar(g, 1.0, 0.5, 1.0).map_err(err)?;
    let tg = TimeGrid::new(1.0, 0.001).map_err(err)?;
    let x0 = Field::from_fn(g, |a| 1.0 + a * a);
    let noise = sample_path(sys.q(), tg, 11);

    let full = solve_differential_riccati(sys.a_op(), sys.b_op(), &costs, tg).map_err(err)?;
    let law = feedback_gain(&full, sys.b_op(), costs.r_op()).map_err(err)?;
    let traj = simulate(&sys, &law, &x0, tg, &noise).map_err(err)?;

    let proj = ProjectedSystem::project(&sys, &costs, &basis, ProjectionMode::Exact).map_err(err)?;
    let sol = solve_lowrank_lqg(&proj, tg).map_err(err)?;
    let run = simulate_projected(&proj, &sol, &x0, &noise).map_err(err)?;
    let lifted = simulate(&sys, &lifted_feedback(&proj, &sol).map_err(err)?, &x0, tg, &noise).map_err(err)?;
    let max_rmd =
        |other| -> Result<f64, String> { Ok(traj.rmd_series(other).map_err(err)?.into_iter().fold(0.0, f64::max)) };
    let (projected, via_lift) = (max_rmd(&run.trajectory)?, max_rmd(&lifted)?);

    let j = quadratic_cost(&traj, costs.m_op(), costs.r_op(), costs.mt_op()).map_err(err)?;
    let split = run.projected_cost + run.complement_cost;
    let additivity = (j - split).abs() / j.abs();
    Ok(Outcome::new(
        projected < 1e-6 && via_lift < 1e-6 && additivity < 1e-6,
        format!("rmd projected {projected:.2e}, lifted feedback {via_lift:.2e}; cost {j:.6} vs {split:.6} (relative {additivity:.2e})"),
    ))
}

fn ac8_convergence() -> Result<Outcome, String> {
    let report = run_convergence_study(&ConvergenceConfig::default()).map_err(err)?;
    let medians = report
        .get_table("per_n")
        .and_then(|t| t.column("median_terminal_rmd"))
        .ok_or("no per_n table")?;
    Ok(Outcome::new(
        report.passed(),
        format!(
            "median terminal rmd {}; {}",
            medians
                .iter()
                .map(|m| format!("{m:.4}"))
                .collect::<Vec<_>>()
                .join(" > "),
            failed_checks(&report)
        ),
    ))
}

fn ac9_optimality() -> Result<Outcome, String> {
    let cfg = OptimalityConfig::default();
    let report = run_optimality_check(&cfg).map_err(err)?;
    let perturbed = cfg.gain_scalings.len() + cfg.constant_gains.len();
    Ok(Outcome::new(
        report.passed() && perturbed >= 20 && cfg.paths >= 200,
        format!(
            "{perturbed} perturbed gains, {} paths; {}",
            cfg.paths,
            failed_checks(&report)
        ),
    ))
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

fn ac10_determinism() -> Result<Outcome, String> {
    let tmp = tempfile::tempdir().map_err(err)?;
    let config = tmp.path().join("config.toml");
    fs::write(
        &config,
        "[scenario]\nseeds = [0, 1]\n\n[convergence]\nseeds = [0, 1, 2]\n\n[lowrank]\nseed = 3\n",
    )
    .map_err(err)?;
    let cfg = config.to_str().unwrap();
    let commands = ["table1", "simulate", "lqg", "convergence", "lowrank", "infhorizon"];
    let mut compared = 0;
    let mut differing = Vec::new();
    for cmd in commands {
        let mut runs = Vec::new();
        for k in 0..2 {
            let out = tmp.path().join(format!("run{k}"));
            let code = graphon_lqg_cli::run([
                "graphon-lqg",
                cmd,
                "--config",
                cfg,
                "--out",
                out.to_str().unwrap(),
                "--quiet",
            ]);
            if code == 2 {
                return Err(format!("{cmd} exited with 2"));
            }
            runs.push(outputs(&out.join(cmd)));
        }
        compared += runs[0].iter().filter(|f| f.0.ends_with(".csv")).count();
        if runs[0] != runs[1] || runs[0].is_empty() {
            differing.push(cmd);
        }
    }
    Ok(Outcome::new(
        differing.is_empty(),
        format!(
            "{} commands, {compared} CSV files compared{}",
            commands.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!("; differing: {}", differing.join(", "))
            }
        ),
    ))
}

fn main() {
    let criteria: [(&str, &str, Criterion); 10] = [
        ("AC1", "Table 1 values at n=200", ac1_table1),
        ("AC2", "analytic graphon spectra", ac2_spectra),
        ("AC3", "operator algebra", ac3_operator_algebra),
        ("AC4", "Riccati correctness", ac4_riccati),
        ("AC5", "stationary convergence", ac5_stationary),
        ("AC6", "Q-noise statistics", ac6_noise),
        ("AC7", "low-rank equivalence", ac7_lowrank),
        ("AC8", "finite-to-graphon convergence", ac8_convergence),
        ("AC9", "optimality of the Riccati feedback", ac9_optimality),
        ("AC10", "CLI determinism", ac10_determinism),
    ];
    let mut failures = 0;
    for (id, name, criterion) in criteria {
        let start = Instant::now();
        let outcome = criterion().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        if !outcome.passed {
            failures += 1;
        }
        println!(
            "{} {id} {name} [{:.1?}]: {}",
            if outcome.passed { "PASS" } else { "FAIL" },
            start.elapsed(),
            outcome.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
