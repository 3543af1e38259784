use std::time::Instant;

use super::scenario::NOISE_STREAM;
use super::{linear_fit, recorded_steps, ExperimentReport};
use crate::dynamics::{simulate, LinearSystem};
use crate::error::Result;
use crate::graphon::GraphonKernel;
use crate::grid_ops::{Grid, GridField, OperatorKps};
use crate::qnoise::{sample_path, TimeGrid};
use crate::riccati::{
    algebraic_riccati_symmetric, solve_differential_riccati, stationary_gain, worst_case_q, CostOperators,
};
use crate::rng::derive_seed;
use crate::table::CsvTable;

/// `𝔸 = 𝑾 + a𝕀`, `𝔹 = ℝ = 𝕄 = 𝕀`, `𝕄_T = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfHorizonConfig {
    pub graphon: GraphonKernel<f64>,
    pub a: f64,
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    /// The log-distance fit uses `t ∈ [0, fit_until]`.
    pub fit_until: f64,
    pub r2_threshold: f64,
    pub record_every: usize,
    pub seed: u64,
    pub x0: f64,
}

impl Default for InfHorizonConfig {
    fn default() -> Self {
        Self {
            graphon: GraphonKernel::Constant(0.5),
            a: 0.1,
            n: 50,
            horizon: 10.0,
            dt: 0.001,
            fit_until: 8.0,
            r2_threshold: 0.99,
            record_every: 10,
            seed: 0,
            x0: 1.0,
        }
    }
}

/// `S_t` from the differential solver against the algebraic `S_∞`, and a
/// simulation under the stationary gain with worst-case noise.
pub fn run_infinite_horizon_comparison(cfg: &InfHorizonConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("infhorizon");
    report.param("graphon", format!("{:?}", cfg.graphon));
    report.param("a", cfg.a);
    report.param("n", cfg.n);
    report.param("horizon", cfg.horizon);
    report.param("dt", cfg.dt);
    report.param("fit_until", cfg.fit_until);
    report.param("record_every", cfg.record_every);
    report.param("seed", cfg.seed);
    report.param("x0", cfg.x0);

    let grid = Grid::new(cfg.n)?;
    let tg = TimeGrid::new(cfg.horizon, cfg.dt)?;
    let a_op = cfg.graphon.discretize(grid).shift(cfg.a);
    let b_op = OperatorKps::identity(grid);
    let costs = CostOperators::scalar(grid, 1.0, 0.0, 1.0)?;
    let sol = solve_differential_riccati(&a_op, &b_op, &costs, tg)?;
    let s_inf = algebraic_riccati_symmetric(&a_op, costs.m_op())?;
    let s_inf_size = s_inf.kernel_hs_norm() + s_inf.scalar().abs();
    report.param("s_inf_kernel_hs", s_inf.kernel_hs_norm());
    report.param("s_inf_scalar", s_inf.scalar());

    let steps = recorded_steps(tg.steps(), cfg.record_every);
    let mut table = CsvTable::new(["t", "time_to_go", "s_kernel_hs", "s_scalar", "distance"]);
    let mut fit_x = Vec::new();
    let mut fit_y = Vec::new();
    let mut distances = Vec::new();
    for s in &steps {
        let t = tg.time(*s);
        let d = sol.s_at(*s).hs_scalar_distance(&s_inf)?;
        table.push(vec![
            t.into(),
            (cfg.horizon - t).into(),
            sol.kernel_hs_norm_at(*s).into(),
            sol.scalar_at(*s).into(),
            d.into(),
        ]);
        if t <= cfg.fit_until + 1e-12 {
            fit_x.push(cfg.horizon - t);
            fit_y.push(d.ln());
        }
        distances.push(d);
    }
    let (intercept, slope, r2) = linear_fit(&fit_x, &fit_y);
    report.param("fit_intercept", intercept);
    report.param("fit_slope", slope);
    report.table("distance", table);
    report.check_above("R² of log distance against time-to-go", r2, cfg.r2_threshold, true);
    report.check_below("distance at t = 0", distances[0], 1e-6 * (1.0 + s_inf_size), true);
    let largest = distances.iter().cloned().fold(0.0, f64::max);
    report.check_below(
        "largest distance minus terminal distance",
        largest - distances[distances.len() - 1],
        0.0,
        true,
    );

    let worst = worst_case_q(&cfg.graphon.discretize(grid))?;
    let system = LinearSystem::new(a_op, b_op.clone(), worst.covariance)?;
    let law = stationary_gain(&s_inf, &b_op, costs.r_op())?;
    let noise = sample_path(system.q(), tg, derive_seed(cfg.seed, NOISE_STREAM));
    let traj = simulate(&system, &law, &GridField::constant(grid, cfg.x0), tg, &noise)?;
    let mut norms = CsvTable::new(["t", "l2_norm"]);
    for s in &steps {
        norms.push(vec![tg.time(*s).into(), traj.state(*s).l2_norm().into()]);
    }
    report.table("stationary_norm", norms);
    report.table("stationary_states", traj.long_table_every(cfg.record_every));
    report.check_above(
        "stationary-gain trajectory finite",
        f64::from(u8::from(traj.is_finite())),
        1.0,
        true,
    );
    report.duration = start.elapsed();
    Ok(report)
}
