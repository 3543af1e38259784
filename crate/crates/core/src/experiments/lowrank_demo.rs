use std::time::Instant;

use super::scenario::{GRAPH_STREAM, NOISE_STREAM};
use super::{recorded_steps, ExperimentReport};
use crate::dynamics::{simulate, LinearSystem, Trajectory};
use crate::error::Result;
use crate::graphon::{sample_w_random_graph, GraphonKernel};
use crate::grid_ops::{Grid, GridField, OperatorKps};
use crate::lowrank::{
    check_low_rank, simulate_projected, solve_lowrank_lqg, OrthonormalBasis, ProjectedSystem, ProjectionMode,
};
use crate::qnoise::{sample_path, QCovariance, QNoisePath, TimeGrid};
use crate::riccati::{feedback_gain, solve_differential_riccati, CostOperators};
use crate::rng::derive_seed;
use crate::table::CsvTable;

/// Rank cutoff for adjacency and limit-kernel eigenvalues.
pub const RANK_TOL: f64 = 1e-10;
/// Full-vs-projected tolerance when the limit replaces the sample.
pub const EXACT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankDemoConfig {
    /// Must be separable rank one.
    pub graphon: GraphonKernel<f64>,
    pub seed: u64,
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub mt: f64,
    pub r: f64,
    pub horizon: f64,
    pub dt: f64,
    pub x0: f64,
    /// Use the discretised graphon in place of the W-random sample.
    pub use_limit: bool,
    pub max_rmd_threshold: f64,
    pub record_every: usize,
}

impl Default for LowRankDemoConfig {
    fn default() -> Self {
        Self {
            graphon: GraphonKernel::quadratic_rank_one(),
            seed: 0,
            n: 50,
            a: 0.1,
            b: 0.1,
            m: 1.0,
            mt: 0.0,
            r: 1.0,
            horizon: 1.0,
            dt: 0.001,
            x0: 0.0,
            use_limit: false,
            max_rmd_threshold: 0.1,
            record_every: 10,
        }
    }
}

fn optimal_run(
    coupling: OperatorKps<f64>,
    cfg: &LowRankDemoConfig,
    q: &QCovariance<f64>,
    costs: &CostOperators<f64>,
    tg: TimeGrid<f64>,
    x0: &GridField<f64>,
    noise: &QNoisePath<f64>,
) -> Result<(LinearSystem<f64>, Trajectory<f64>)> {
    let grid = coupling.grid();
    let sys = LinearSystem::new(
        coupling.shift(cfg.a),
        OperatorKps::scaled_identity(grid, cfg.b),
        q.clone(),
    )?;
    let sol = solve_differential_riccati(sys.a_op(), sys.b_op(), costs, tg)?;
    let law = feedback_gain(&sol, sys.b_op(), costs.r_op())?;
    let traj = simulate(&sys, &law, x0, tg, noise)?;
    Ok((sys, traj))
}

/// Sampled finite graph, its one-dimensional projection onto the graphon
/// profile and the limit system, all under one noise path on the profile.
pub fn run_lowrank_demo(cfg: &LowRankDemoConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("lowrank");
    report.param("graphon", format!("{:?}", cfg.graphon));
    report.param("seed", cfg.seed);
    report.param("n", cfg.n);
    for (k, v) in [("a", cfg.a), ("b", cfg.b), ("m", cfg.m), ("m_T", cfg.mt), ("r", cfg.r)] {
        report.param(k, v);
    }
    report.param("horizon", cfg.horizon);
    report.param("dt", cfg.dt);
    report.param("x0", cfg.x0);
    report.param("use_limit", cfg.use_limit);
    report.param("record_every", cfg.record_every);

    let grid = Grid::new(cfg.n)?;
    let tg = TimeGrid::new(cfg.horizon, cfg.dt)?;
    let basis = OrthonormalBasis::from_profile(&cfg.graphon, grid)?;
    let limit = cfg.graphon.discretize(grid);
    let sample = sample_w_random_graph(&cfg.graphon, cfg.n, derive_seed(cfg.seed, GRAPH_STREAM))?;
    let coupling = if cfg.use_limit {
        limit.clone()
    } else {
        sample.step_embed()?
    };
    let q = QCovariance::rank_one(&basis.function(0))?;
    let costs = CostOperators::scalar(grid, cfg.m, cfg.mt, cfg.r)?;
    let x0 = GridField::constant(grid, cfg.x0);
    let noise = sample_path(&q, tg, derive_seed(cfg.seed, NOISE_STREAM));

    let (sys, full) = optimal_run(coupling.clone(), cfg, &q, &costs, tg, &x0, &noise)?;
    let mode = if cfg.use_limit {
        ProjectionMode::Exact
    } else {
        ProjectionMode::Approximate
    };
    let proj = ProjectedSystem::project(&sys, &costs, &basis, mode)?;
    let lr = solve_lowrank_lqg(&proj, tg)?;
    let projected = simulate_projected(&proj, &lr, &x0, &noise)?;
    let (_, limit_traj) = optimal_run(limit.clone(), cfg, &q, &costs, tg, &x0, &noise)?;

    let sample_rank = sample.numerical_rank(RANK_TOL)?;
    let limit_rank = limit
        .spectral_decompose()?
        .eigenvalues()
        .iter()
        .filter(|l| l.abs() > RANK_TOL)
        .count();
    report.param("projected_a", proj.a_bar()[(0, 0)]);
    report.param("coupling_low_rank_residual", check_low_rank(&coupling, &basis)?);
    report.param("sample_rank", sample_rank);
    report.param("limit_rank", limit_rank);
    report.param("projected_cost", projected.projected_cost);
    report.param("complement_cost", projected.complement_cost);

    let fp = full.rmd_series(&projected.trajectory)?;
    let fl = full.rmd_series(&limit_traj)?;
    let pl = projected.trajectory.rmd_series(&limit_traj)?;
    let mut table = CsvTable::new(["t", "full_vs_projected", "full_vs_limit", "projected_vs_limit"]);
    for s in recorded_steps(tg.steps(), cfg.record_every) {
        table.push(vec![tg.time(s).into(), fp[s].into(), fl[s].into(), pl[s].into()]);
    }
    report.table("rmd", table);
    report.table("basis", basis.to_table());
    report.table("projected_system", proj.to_table());
    report.table("full_states", full.long_table_every(cfg.record_every));
    report.table(
        "projected_states",
        projected.trajectory.long_table_every(cfg.record_every),
    );
    report.table("limit_states", limit_traj.long_table_every(cfg.record_every));

    let max_fp = fp.iter().cloned().fold(0.0, f64::max);
    let threshold = if cfg.use_limit {
        EXACT_TOL
    } else {
        cfg.max_rmd_threshold
    };
    report.check_below("max rmd full vs projected", max_fp, threshold, true);
    report.check_below("limit kernel rank", limit_rank as f64, 1.0, true);
    if !cfg.use_limit {
        report.check_above("sample adjacency rank", sample_rank as f64, (cfg.n - 1) as f64, true);
    }
    report.duration = start.elapsed();
    Ok(report)
}
