use std::time::Instant;

use super::{fan_out, ExperimentReport};
use crate::dynamics::{quadratic_cost, simulate, FeedbackLaw, LinearSystem, Trajectory};
use crate::error::{Error, Result};
use crate::graphon::{sample_w_random_graph, AdjacencyMatrix, GraphonKernel};
use crate::grid_ops::{Grid, GridField, OperatorKps};
use crate::qnoise::{sample_path, QCovariance, TimeGrid};
use crate::riccati::{
    discounted_algebraic_riccati, feedback_gain, long_range_average_cost, solve_differential_riccati, value_function,
    CostOperators,
};
use crate::rng::derive_seed;
use crate::table::CsvTable;

/// Stream offsets for [`derive_seed`].
pub(crate) const GRAPH_STREAM: u64 = 1;
pub(crate) const NOISE_STREAM: u64 = 2;

/// Network coupling `𝑨` of the state operator `𝔸 = 𝑨 + a𝕀`.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingSpec {
    /// Discretised graphon kernel.
    Graphon(GraphonKernel<f64>),
    /// Step embedding of a W-random sample drawn from the first seed.
    WRandom(GraphonKernel<f64>),
    /// Step embedding of a given graph; fixes `n` to its node count.
    Adjacency(AdjacencyMatrix),
}

/// A cost operator: `c𝕀`, or `scale·𝑾 + shift·𝕀`.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    Scalar(f64),
    Graphon {
        graphon: GraphonKernel<f64>,
        scale: f64,
        shift: f64,
    },
}

impl OperatorSpec {
    pub fn build(&self, grid: Grid) -> OperatorKps<f64> {
        match self {
            Self::Scalar(c) => OperatorKps::scaled_identity(grid, *c),
            Self::Graphon { graphon, scale, shift } => graphon.discretize(grid).scale(*scale).shift(*shift),
        }
    }
}

/// Spatial covariance of the driving noise.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Zero,
    /// `scale` times a positive semidefinite graphon kernel.
    Graphon {
        graphon: GraphonKernel<f64>,
        scale: f64,
    },
    /// `variance·⟨·, φ_k⟩φ_k` on the `k`-th eigenfunction of the coupling
    /// (`k = 0` is the top one).
    Mode {
        k: usize,
        variance: f64,
    },
    /// Unit rank-one covariance on the top eigenfunction of the coupling.
    WorstCase,
    /// Independent node noise with per-cell variance `variance` per unit time.
    IndependentNodes {
        variance: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Constant(f64),
    Values(Vec<f64>),
}

/// A complete LQG problem with its simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub coupling: CouplingSpec,
    pub a: f64,
    pub b: f64,
    pub m: OperatorSpec,
    pub mt: OperatorSpec,
    pub r: OperatorSpec,
    pub noise: NoiseSpec,
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    pub rho: Option<f64>,
    pub seeds: Vec<u64>,
    pub x0: InitialState,
    /// Stride of the time rows written to trajectory tables.
    pub record_every: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            coupling: CouplingSpec::Graphon(GraphonKernel::quadratic_rank_one()),
            a: 0.1,
            b: 0.1,
            m: OperatorSpec::Scalar(1.0),
            mt: OperatorSpec::Scalar(0.0),
            r: OperatorSpec::Scalar(1.0),
            noise: NoiseSpec::WorstCase,
            n: 50,
            horizon: 1.0,
            dt: 0.001,
            rho: None,
            seeds: vec![0],
            x0: InitialState::Constant(1.0),
            record_every: 10,
        }
    }
}

/// Assembled operators of a [`Scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltScenario {
    pub grid: Grid,
    pub timegrid: TimeGrid<f64>,
    pub coupling: OperatorKps<f64>,
    pub system: LinearSystem<f64>,
    pub costs: CostOperators<f64>,
    pub x0: GridField<f64>,
}

impl Scenario {
    pub fn build(&self) -> Result<BuiltScenario> {
        let first_seed = *self
            .seeds
            .first()
            .ok_or_else(|| Error::Domain("at least one seed is required".into()))?;
        let (grid, coupling) = match &self.coupling {
            CouplingSpec::Graphon(g) => {
                let grid = Grid::new(self.n)?;
                (grid, g.discretize(grid))
            }
            CouplingSpec::WRandom(g) => {
                let adj = sample_w_random_graph(g, self.n, derive_seed(first_seed, GRAPH_STREAM))?;
                (Grid::new(self.n)?, adj.step_embed()?)
            }
            CouplingSpec::Adjacency(adj) => (Grid::new(adj.n())?, adj.step_embed()?),
        };
        let timegrid = TimeGrid::new(self.horizon, self.dt)?;
        let q = match &self.noise {
            NoiseSpec::Zero => QCovariance::zero(grid),
            NoiseSpec::Graphon { graphon, scale } => QCovariance::new(&graphon.discretize(grid).scale(*scale))?,
            NoiseSpec::WorstCase => mode_covariance(&coupling, 0, 1.0)?,
            NoiseSpec::Mode { k, variance } => mode_covariance(&coupling, *k, *variance)?,
            NoiseSpec::IndependentNodes { variance } => QCovariance::independent_nodes(grid, *variance)?,
        };
        let a_op = coupling.shift(self.a);
        let b_op = OperatorKps::scaled_identity(grid, self.b);
        let system = LinearSystem::new(a_op, b_op, q)?;
        let costs = CostOperators::new(self.m.build(grid), self.mt.build(grid), self.r.build(grid))?;
        let x0 = match &self.x0 {
            InitialState::Constant(c) => GridField::constant(grid, *c),
            InitialState::Values(v) => GridField::new(grid, v.clone())?,
        };
        Ok(BuiltScenario {
            grid,
            timegrid,
            coupling,
            system,
            costs,
            x0,
        })
    }

    fn describe(&self, report: &mut ExperimentReport) {
        report.param("coupling", format!("{:?}", self.coupling));
        report.param("a", self.a);
        report.param("b", self.b);
        report.param("M", format!("{:?}", self.m));
        report.param("M_T", format!("{:?}", self.mt));
        report.param("R", format!("{:?}", self.r));
        report.param("noise", format!("{:?}", self.noise));
        report.param("n", self.n);
        report.param("horizon", self.horizon);
        report.param("dt", self.dt);
        report.param("rho", self.rho.map_or("none".to_string(), |r| r.to_string()));
        report.param("seeds", format!("{:?}", self.seeds));
        report.param("x0", format!("{:?}", self.x0));
        report.param("record_every", self.record_every);
    }
}

fn mode_covariance(coupling: &OperatorKps<f64>, k: usize, variance: f64) -> Result<QCovariance<f64>> {
    let spec = coupling.spectral_decompose()?;
    if k >= spec.len() {
        return Err(Error::Domain(format!("mode {k} out of range for {} modes", spec.len())));
    }
    let phi = spec.eigenfunction(k);
    QCovariance::new(&OperatorKps::rank_one(&phi, variance))
}

fn run_paths(built: &BuiltScenario, law: &FeedbackLaw<f64>, seeds: &[u64]) -> Result<Vec<(u64, Trajectory<f64>, f64)>> {
    let runs = fan_out(seeds, |seed| -> Result<(u64, Trajectory<f64>, f64)> {
        let noise = sample_path(built.system.q(), built.timegrid, derive_seed(*seed, NOISE_STREAM));
        let traj = simulate(&built.system, law, &built.x0, built.timegrid, &noise)?;
        let cost = quadratic_cost(&traj, built.costs.m_op(), built.costs.r_op(), built.costs.mt_op())?;
        Ok((*seed, traj, cost))
    });
    runs.into_iter().collect()
}

fn path_tables(report: &mut ExperimentReport, runs: &[(u64, Trajectory<f64>, f64)], every: usize) -> CsvTable {
    let mut costs = CsvTable::new(["seed", "cost", "terminal_l2"]);
    for (seed, traj, cost) in runs {
        report.table(format!("states_seed{seed}"), traj.long_table_every(every));
        costs.push(vec![
            (*seed).into(),
            (*cost).into(),
            traj.final_state().l2_norm().into(),
        ]);
    }
    costs
}

/// Open-loop simulation (`u ≡ 0`) for each seed.
pub fn run_simulate(scn: &Scenario) -> Result<ExperimentReport> {
    let start = Instant::now();
    let built = scn.build()?;
    let mut report = ExperimentReport::new("simulate");
    scn.describe(&mut report);
    let runs = run_paths(&built, &FeedbackLaw::Zero, &scn.seeds)?;
    let costs = path_tables(&mut report, &runs, scn.record_every);
    for (seed, traj, _) in &runs {
        report.check_above(
            format!("seed {seed}: finite trajectory"),
            f64::from(u8::from(traj.is_finite())),
            1.0,
            true,
        );
    }
    report.table("costs", costs);
    report.duration = start.elapsed();
    Ok(report)
}

/// Riccati solve, optimal feedback simulation per seed, and the predicted
/// optimal cost `V(x0, 0)`.
pub fn run_lqg(scn: &Scenario) -> Result<ExperimentReport> {
    let start = Instant::now();
    let built = scn.build()?;
    let mut report = ExperimentReport::new("lqg");
    scn.describe(&mut report);
    let sys = &built.system;
    let sol = solve_differential_riccati(sys.a_op(), sys.b_op(), &built.costs, built.timegrid)?;
    let law = feedback_gain(&sol, sys.b_op(), built.costs.r_op())?;
    let predicted = value_function(&sol, sys.q(), &built.x0, 0.0)?;

    let riccati = sol.to_table(Some(sys.q()))?;
    let keep: Vec<usize> = super::recorded_steps(built.timegrid.steps(), scn.record_every);
    let mut thinned = CsvTable::new(riccati.header.clone());
    for s in keep {
        thinned.push(riccati.rows[s].clone());
    }
    report.table("riccati", thinned);

    let runs = run_paths(&built, &law, &scn.seeds)?;
    let mut costs = path_tables(&mut report, &runs, scn.record_every);
    for (seed, traj, _) in &runs {
        report.table(format!("controls_seed{seed}"), controls_long(traj, scn.record_every));
    }
    let values: Vec<f64> = runs.iter().map(|r| r.2).collect();
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    costs.push(vec!["mean".into(), mean.into(), f64::NAN.into()]);
    costs.push(vec!["predicted".into(), predicted.into(), f64::NAN.into()]);
    report.table("costs", costs);
    if values.len() >= 2 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
        let se = (var / k).sqrt();
        report.check_below(
            "mean cost vs predicted value (3 standard errors)",
            (mean - predicted).abs(),
            3.0 * se,
            false,
        );
    }

    if let Some(rho) = scn.rho {
        let identity_regime = [sys.b_op(), built.costs.r_op()]
            .iter()
            .all(|op| op.has_zero_kernel() && op.scalar() == 1.0);
        if identity_regime {
            let s_rho = discounted_algebraic_riccati(sys.a_op(), built.costs.m_op(), rho)?;
            let v = long_range_average_cost(&s_rho, sys.q())?;
            report.param("discounted_long_range_value", v);
        } else {
            report.param("discounted_long_range_value", "skipped: needs B = R = I");
        }
    }
    report.duration = start.elapsed();
    Ok(report)
}

fn controls_long(traj: &Trajectory<f64>, every: usize) -> CsvTable {
    let mids: Vec<f64> = traj.grid().midpoints();
    let tg = traj.timegrid();
    let mut t = CsvTable::new(["t", "alpha", "value"]);
    for s in super::recorded_steps(tg.steps(), every) {
        if s == tg.steps() {
            continue;
        }
        for (i, m) in mids.iter().enumerate() {
            t.push(vec![tg.time(s).into(), (*m).into(), traj.controls()[(s, i)].into()]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        Scenario {
            n: 10,
            horizon: 0.1,
            dt: 0.01,
            seeds: vec![1, 2],
            record_every: 1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_costs_give_uncontrolled_paths() {
        let scn = Scenario {
            m: OperatorSpec::Scalar(0.0),
            ..small()
        };
        let a = run_simulate(&scn).unwrap();
        let b = run_lqg(&scn).unwrap();
        for seed in [1, 2] {
            let name = format!("states_seed{seed}");
            assert_eq!(a.get_table(&name), b.get_table(&name));
        }
    }

    #[test]
    fn reruns_are_identical() {
        let scn = small();
        let a = run_lqg(&scn).unwrap();
        let b = run_lqg(&scn).unwrap();
        let csv = |r: &ExperimentReport| {
            r.tables
                .iter()
                .map(|(n, t)| (n.clone(), t.to_csv()))
                .collect::<Vec<_>>()
        };
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.parameters, b.parameters);
    }

    #[test]
    fn build_errors() {
        let scn = Scenario {
            seeds: vec![],
            ..small()
        };
        assert!(scn.build().is_err());
        let scn = Scenario {
            noise: NoiseSpec::Mode { k: 10, variance: 1.0 },
            ..small()
        };
        assert!(scn.build().is_err());
        let scn = Scenario {
            x0: InitialState::Values(vec![1.0; 3]),
            ..small()
        };
        assert!(scn.build().is_err());
    }
}
