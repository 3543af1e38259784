use std::time::Instant;

use nalgebra::DMatrix;

use super::scenario::{GRAPH_STREAM, NOISE_STREAM};
use super::{fan_out, median, recorded_steps, Check, ExperimentReport};
use crate::dynamics::{simulate, FeedbackLaw, LinearSystem, Trajectory};
use crate::error::{Error, Result};
use crate::graphon::{sample_w_random_graph, GraphonKernel};
use crate::grid_ops::{Grid, GridField, OperatorKps};
use crate::qnoise::{QCovariance, QNoisePath, TimeGrid};
use crate::riccati::{feedback_gain, solve_differential_riccati, CostOperators};
use crate::rng::{derive_seed, standard_normals};
use crate::table::CsvTable;

/// How the finite-`n` coupling is obtained from the graphon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FiniteSource {
    /// Step embedding of a W-random sample.
    #[default]
    WRandom,
    /// Midpoint discretisation of the graphon itself.
    Discretized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub graphon: GraphonKernel<f64>,
    /// Ascending; each entry must divide `reference_n`.
    pub n_list: Vec<usize>,
    pub reference_n: usize,
    pub seeds: Vec<u64>,
    pub source: FiniteSource,
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub mt: f64,
    pub r: f64,
    pub horizon: f64,
    pub dt: f64,
    pub x0: f64,
    /// Noise is `variance·⟨·, φ_k⟩φ_k` on the `k`-th eigenfunction of the
    /// reference graphon.
    pub noise_mode: usize,
    pub noise_variance: f64,
    pub record_every: usize,
    /// `max_t rmd` threshold checked at `check_n`.
    pub max_rmd_threshold: f64,
    pub pass_fraction: f64,
    pub check_n: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            graphon: GraphonKernel::quadratic_rank_one(),
            n_list: vec![25, 50, 100, 200],
            reference_n: 200,
            seeds: (0..20).collect(),
            source: FiniteSource::WRandom,
            a: 0.1,
            b: 0.1,
            m: 1.0,
            mt: 0.0,
            r: 1.0,
            horizon: 1.0,
            dt: 0.001,
            x0: 0.0,
            noise_mode: 0,
            noise_variance: 1.0,
            record_every: 10,
            max_rmd_threshold: 0.1,
            pass_fraction: 0.9,
            check_n: 50,
        }
    }
}

impl ConvergenceConfig {
    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.seeds.is_empty() {
            return Err(Error::Domain("n_list and seeds must be non-empty".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("n_list must be strictly ascending".into()));
        }
        if let Some(n) = self
            .n_list
            .iter()
            .find(|n| **n == 0 || !self.reference_n.is_multiple_of(**n))
        {
            return Err(Error::Domain(format!(
                "n = {n} does not divide the reference grid of {} cells",
                self.reference_n
            )));
        }
        Ok(())
    }
}

struct Solved {
    system: LinearSystem<f64>,
    law: FeedbackLaw<f64>,
}

fn solve(
    cfg: &ConvergenceConfig,
    coupling: OperatorKps<f64>,
    q: QCovariance<f64>,
    tg: TimeGrid<f64>,
) -> Result<Solved> {
    let grid = coupling.grid();
    let system = LinearSystem::new(coupling.shift(cfg.a), OperatorKps::scaled_identity(grid, cfg.b), q)?;
    let costs = CostOperators::scalar(grid, cfg.m, cfg.mt, cfg.r)?;
    let sol = solve_differential_riccati(system.a_op(), system.b_op(), &costs, tg)?;
    let law = feedback_gain(&sol, system.b_op(), costs.r_op())?;
    Ok(Solved { system, law })
}

/// Block averages of every increment onto the coarse grid.
fn coarsen_noise(path: &QNoisePath<f64>, coarse: Grid) -> Result<QNoisePath<f64>> {
    let steps = path.timegrid().steps();
    let mut inc = DMatrix::zeros(steps, coarse.n());
    for s in 0..steps {
        inc.set_row(s, &path.increment(s).coarsen(coarse)?.values().transpose());
    }
    let out = QNoisePath::from_increments(path.timegrid(), coarse, inc)?;
    Ok(match path.seed() {
        Some(seed) => out.with_seed(seed),
        None => out,
    })
}

/// `rmd` between a coarse trajectory, refined by cell repetition, and a
/// reference trajectory at every time.
fn refined_rmd(coarse: &Trajectory<f64>, reference: &Trajectory<f64>) -> Vec<f64> {
    let nr = reference.grid().n();
    let factor = nr / coarse.grid().n();
    let (xs, ys) = (coarse.states(), reference.states());
    (0..xs.nrows())
        .map(|s| {
            let sum: f64 = (0..nr).map(|i| (ys[(s, i)] - xs[(s, i / factor)]).powi(2)).sum();
            (sum / nr as f64).sqrt()
        })
        .collect()
}

struct Run {
    n: usize,
    seed: u64,
    rmd: Vec<f64>,
}

/// Finite systems at each `n` against the limit system at the reference
/// grid, driven by coupled noise: the finite noise is the block average of
/// the reference Karhunen–Loève path.
pub fn run_convergence_study(cfg: &ConvergenceConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    cfg.validate()?;
    let tg = TimeGrid::new(cfg.horizon, cfg.dt)?;
    let ref_grid = Grid::new(cfg.reference_n)?;
    let mut report = ExperimentReport::new("convergence");
    report.param("graphon", format!("{:?}", cfg.graphon));
    report.param("n_list", format!("{:?}", cfg.n_list));
    report.param("reference_n", cfg.reference_n);
    report.param("seeds", format!("{:?}", cfg.seeds));
    report.param("source", format!("{:?}", cfg.source));
    for (k, v) in [("a", cfg.a), ("b", cfg.b), ("m", cfg.m), ("m_T", cfg.mt), ("r", cfg.r)] {
        report.param(k, v);
    }
    report.param("horizon", cfg.horizon);
    report.param("dt", cfg.dt);
    report.param("x0", cfg.x0);
    report.param("noise_mode", cfg.noise_mode);
    report.param("noise_variance", cfg.noise_variance);
    report.param("record_every", cfg.record_every);

    let w_ref = cfg.graphon.discretize(ref_grid);
    let spec = w_ref.spectral_decompose()?;
    if cfg.noise_mode >= spec.len() {
        return Err(Error::Domain(format!("noise mode {} out of range", cfg.noise_mode)));
    }
    let q_ref = QCovariance::new(&OperatorKps::rank_one(
        &spec.eigenfunction(cfg.noise_mode),
        cfg.noise_variance,
    ))?;
    let (eigenvalues, functions) = q_ref.kl_modes();
    let limit = solve(cfg, w_ref, q_ref, tg)?;
    let x0_ref = GridField::constant(ref_grid, cfg.x0);

    let references = fan_out(&cfg.seeds, |seed| -> Result<(QNoisePath<f64>, Trajectory<f64>)> {
        let noise_seed = derive_seed(*seed, NOISE_STREAM);
        let xi = standard_normals(noise_seed, tg.steps(), eigenvalues.len());
        let path = QNoisePath::from_kl(tg, ref_grid, &eigenvalues, &functions, &xi)?.with_seed(noise_seed);
        let traj = simulate(&limit.system, &limit.law, &x0_ref, tg, &path)?;
        Ok((path, traj))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = cfg
        .n_list
        .iter()
        .flat_map(|n| (0..cfg.seeds.len()).map(move |k| (*n, k)))
        .collect();
    let runs = fan_out(&jobs, |(n, k)| -> Result<Run> {
        let seed = cfg.seeds[*k];
        let grid = Grid::new(*n)?;
        let coupling = match cfg.source {
            FiniteSource::WRandom => sample_w_random_graph(
                &cfg.graphon,
                *n,
                derive_seed(derive_seed(seed, GRAPH_STREAM), *n as u64),
            )?
            .step_embed()?,
            FiniteSource::Discretized => cfg.graphon.discretize(grid),
        };
        let (ref_path, ref_traj) = &references[*k];
        let noise = coarsen_noise(ref_path, grid)?;
        let q = QCovariance::new(&coarsen_covariance(limit.system.q().op(), grid)?)?;
        let finite = solve(cfg, coupling, q, tg)?;
        let traj = simulate(
            &finite.system,
            &finite.law,
            &GridField::constant(grid, cfg.x0),
            tg,
            &noise,
        )?;
        Ok(Run {
            n: *n,
            seed,
            rmd: refined_rmd(&traj, ref_traj),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let keep = recorded_steps(tg.steps(), cfg.record_every);
    let mut series = CsvTable::new(["n", "seed", "t", "rmd"]);
    let mut terminal = CsvTable::new(["n", "seed", "terminal_rmd", "max_rmd"]);
    for run in &runs {
        for s in &keep {
            series.push(vec![
                run.n.into(),
                run.seed.into(),
                tg.time(*s).into(),
                run.rmd[*s].into(),
            ]);
        }
        let max = run.rmd.iter().cloned().fold(0.0, f64::max);
        terminal.push(vec![
            run.n.into(),
            run.seed.into(),
            run.rmd[tg.steps()].into(),
            max.into(),
        ]);
    }

    let mut summary = CsvTable::new(["n", "median_terminal_rmd", "median_max_rmd", "fraction_max_below"]);
    let mut medians = Vec::new();
    for n in &cfg.n_list {
        let of_n: Vec<&Run> = runs.iter().filter(|r| r.n == *n).collect();
        let terms: Vec<f64> = of_n.iter().map(|r| r.rmd[tg.steps()]).collect();
        let maxes: Vec<f64> = of_n.iter().map(|r| r.rmd.iter().cloned().fold(0.0, f64::max)).collect();
        let below = maxes.iter().filter(|m| **m < cfg.max_rmd_threshold).count() as f64 / maxes.len() as f64;
        summary.push(vec![
            (*n).into(),
            median(&terms).into(),
            median(&maxes).into(),
            below.into(),
        ]);
        medians.push(median(&terms));
        if *n == cfg.check_n {
            report.check_above(
                format!("n = {n}: fraction of seeds with max rmd < {}", cfg.max_rmd_threshold),
                below,
                cfg.pass_fraction,
                true,
            );
        }
    }
    if medians.len() >= 2 {
        let worst_step = medians
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        report.checks.push(Check {
            name: "largest change in median terminal rmd between successive n".into(),
            value: worst_step,
            threshold: 0.0,
            passed: worst_step < 0.0,
            gating: true,
        });
    }
    report.table("rmd", series);
    report.table("terminal", terminal);
    report.table("per_n", summary);
    report.duration = start.elapsed();
    Ok(report)
}

/// Block average of a kernel: the covariance of block-averaged fields.
fn coarsen_covariance(op: &OperatorKps<f64>, coarse: Grid) -> Result<OperatorKps<f64>> {
    let fine = op.grid();
    let f = fine
        .refinement_factor(coarse)
        .ok_or_else(|| Error::Domain("grids are not nested".into()))?;
    let k = op.kernel().entries();
    let nc = coarse.n();
    let mut out = DMatrix::zeros(nc, nc);
    for i in 0..nc {
        for j in 0..nc {
            out[(i, j)] = k.view((i * f, j * f), (f, f)).sum() / (f * f) as f64;
        }
    }
    Ok(OperatorKps::from_kernel(crate::grid_ops::KernelMatrix::new(
        coarse, out,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ConvergenceConfig {
        ConvergenceConfig {
            n_list: vec![10, 20],
            reference_n: 20,
            seeds: vec![1, 2, 3],
            horizon: 0.2,
            dt: 0.01,
            ..Default::default()
        }
    }

    #[test]
    fn reference_against_itself_is_zero() {
        let cfg = ConvergenceConfig {
            n_list: vec![20],
            source: FiniteSource::Discretized,
            ..quick()
        };
        let r = run_convergence_study(&cfg).unwrap();
        let t = r.get_table("terminal").unwrap();
        assert!(t.column("max_rmd").unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn coarsened_noise_has_block_averaged_covariance() {
        let fine = Grid::new(8).unwrap();
        let coarse = Grid::new(4).unwrap();
        let phi = GridField::from_fn(fine, |a: f64| (6.0 * a).cos());
        let q = OperatorKps::rank_one(&phi, 1.0);
        let c = coarsen_covariance(&q, coarse).unwrap();
        let avg = phi.coarsen(coarse).unwrap();
        let expected = OperatorKps::rank_one(&avg, 1.0);
        assert!(c.hs_scalar_distance(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn invalid_lists_are_rejected() {
        for n_list in [vec![], vec![20, 10], vec![3]] {
            let cfg = ConvergenceConfig { n_list, ..quick() };
            assert!(run_convergence_study(&cfg).is_err());
        }
    }

    #[test]
    fn deterministic() {
        let a = run_convergence_study(&quick()).unwrap();
        let b = run_convergence_study(&quick()).unwrap();
        assert_eq!(a.tables, b.tables);
    }
}
