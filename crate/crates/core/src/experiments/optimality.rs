use std::time::Instant;

use super::scenario::NOISE_STREAM;
use super::{fan_out, ExperimentReport};
use crate::dynamics::{quadratic_cost, simulate, FeedbackLaw, LinearSystem};
use crate::error::Result;
use crate::grid_ops::{Grid, GridField, OperatorKps};
use crate::qnoise::{sample_path, QCovariance, QNoisePath, TimeGrid};
use crate::riccati::{feedback_gain, solve_differential_riccati, CostOperators};
use crate::rng::derive_seed;
use crate::table::CsvTable;

/// Scalar system `dx = (a x + b u)dt + dw` on one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityConfig {
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub mt: f64,
    pub r: f64,
    pub horizon: f64,
    pub dt: f64,
    pub x0: f64,
    pub noise_variance: f64,
    pub paths: usize,
    pub seed: u64,
    /// Multipliers of the optimal gain `K_t`.
    pub gain_scalings: Vec<f64>,
    /// Constant gains `k` (control `−k x`).
    pub constant_gains: Vec<f64>,
}

impl Default for OptimalityConfig {
    fn default() -> Self {
        Self {
            a: 0.1,
            b: 0.1,
            m: 1.0,
            mt: 0.0,
            r: 1.0,
            horizon: 1.0,
            dt: 0.001,
            x0: 1.0,
            noise_variance: 1.0,
            paths: 200,
            seed: 0,
            gain_scalings: vec![0.5, 0.6, 0.7, 0.8, 1.2, 1.3, 1.4, 1.5, 1.6, 1.8],
            constant_gains: (0..10).map(|k| 0.02 * k as f64).collect(),
        }
    }
}

/// Mean simulated cost of the Riccati feedback against perturbed gains,
/// every law seeing the same noise paths.
pub fn run_optimality_check(cfg: &OptimalityConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("optimality");
    for (k, v) in [
        ("a", cfg.a),
        ("b", cfg.b),
        ("m", cfg.m),
        ("m_T", cfg.mt),
        ("r", cfg.r),
        ("horizon", cfg.horizon),
        ("dt", cfg.dt),
        ("x0", cfg.x0),
        ("noise_variance", cfg.noise_variance),
    ] {
        report.param(k, v);
    }
    report.param("paths", cfg.paths);
    report.param("seed", cfg.seed);
    report.param("gain_scalings", format!("{:?}", cfg.gain_scalings));
    report.param("constant_gains", format!("{:?}", cfg.constant_gains));

    let grid = Grid::new(1)?;
    let tg = TimeGrid::new(cfg.horizon, cfg.dt)?;
    let q = QCovariance::independent_nodes(grid, cfg.noise_variance)?;
    let sys = LinearSystem::new(
        OperatorKps::scaled_identity(grid, cfg.a),
        OperatorKps::scaled_identity(grid, cfg.b),
        q,
    )?;
    let costs = CostOperators::scalar(grid, cfg.m, cfg.mt, cfg.r)?;
    let sol = solve_differential_riccati(sys.a_op(), sys.b_op(), &costs, tg)?;
    let optimal = feedback_gain(&sol, sys.b_op(), costs.r_op())?;

    let mut laws = vec![("riccati".to_string(), optimal)];
    for c in &cfg.gain_scalings {
        let gains = (0..=tg.steps())
            .map(|s| OperatorKps::scaled_identity(grid, c * cfg.b / cfg.r * sol.scalar_at(s)))
            .collect();
        laws.push((format!("scaled {c}"), FeedbackLaw::TimeVarying { timegrid: tg, gains }));
    }
    for k in &cfg.constant_gains {
        laws.push((
            format!("constant {k}"),
            FeedbackLaw::Stationary(OperatorKps::scaled_identity(grid, *k)),
        ));
    }

    let seeds: Vec<u64> = (0..cfg.paths as u64)
        .map(|p| derive_seed(derive_seed(cfg.seed, NOISE_STREAM), p))
        .collect();
    let noises: Vec<QNoisePath<f64>> = seeds.iter().map(|s| sample_path(sys.q(), tg, *s)).collect();
    let x0 = GridField::constant(grid, cfg.x0);
    let means = fan_out(&laws, |(_, law)| -> Result<f64> {
        let mut total = 0.0;
        for noise in &noises {
            let traj = simulate(&sys, law, &x0, tg, noise)?;
            total += quadratic_cost(&traj, costs.m_op(), costs.r_op(), costs.mt_op())?;
        }
        Ok(total / noises.len() as f64)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut table = CsvTable::new(["law", "mean_cost"]);
    for ((name, _), mean) in laws.iter().zip(&means) {
        table.push(vec![name.as_str().into(), (*mean).into()]);
    }
    report.table("costs", table);
    let best_other = means[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    report.check_below(
        "riccati mean cost minus best perturbed",
        means[0] - best_other,
        0.0,
        true,
    );
    report.duration = start.elapsed();
    Ok(report)
}
