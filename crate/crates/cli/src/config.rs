//! TOML configuration. Every section and key is optional; missing values fall
//! back to the library defaults. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use graphon_lqg::experiments::{
    ConvergenceConfig, CouplingSpec, FiniteSource, InfHorizonConfig, InitialState, LowRankDemoConfig, NoiseSpec,
    OperatorSpec, Scenario, Table1Config,
};
use graphon_lqg::graphon::{AdjacencyMatrix, GraphonKernel};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyFormat {
    #[default]
    Edges,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphonSpec {
    Constant {
        p: f64,
    },
    UniformAttachment,
    SmallWorld {
        sigma: f64,
        gamma: f64,
    },
    Cosine,
    /// `(α² − 1)(β² − 1)`.
    RankOne,
    /// `g(α)g(β)` with `g` given by ascending polynomial coefficients.
    Separable {
        coefficients: Vec<f64>,
    },
    /// A graph read from a file, relative to the config file.
    Adjacency {
        path: PathBuf,
        #[serde(default)]
        format: AdjacencyFormat,
    },
}

impl GraphonSpec {
    fn adjacency(&self, base: &Path) -> Result<Option<AdjacencyMatrix>, CliError> {
        let GraphonSpec::Adjacency { path, format } = self else {
            return Ok(None);
        };
        let full = base.join(path);
        let text =
            fs::read_to_string(&full).map_err(|e| CliError::Input(format!("cannot read {}: {e}", full.display())))?;
        let parsed = match format {
            AdjacencyFormat::Edges => AdjacencyMatrix::parse_edge_list(&text, None),
            AdjacencyFormat::Dense => AdjacencyMatrix::parse_dense_csv(&text),
        };
        parsed
            .map(Some)
            .map_err(|e| CliError::Input(format!("{}: {e}", full.display())))
    }

    pub fn kernel(&self, base: &Path) -> Result<GraphonKernel<f64>, CliError> {
        Ok(match self {
            Self::Constant { p } => GraphonKernel::Constant(*p),
            Self::UniformAttachment => GraphonKernel::UniformAttachment,
            Self::SmallWorld { sigma, gamma } => {
                if !(*sigma > 0.0) || !(0.0..1.0).contains(gamma) {
                    return Err(CliError::Config(
                        "small-world needs sigma > 0 and gamma in [0, 1)".into(),
                    ));
                }
                GraphonKernel::SmallWorld {
                    sigma: *sigma,
                    gamma: *gamma,
                }
            }
            Self::Cosine => GraphonKernel::Cosine,
            Self::RankOne => GraphonKernel::quadratic_rank_one(),
            Self::Separable { coefficients } => {
                if coefficients.is_empty() {
                    return Err(CliError::Config("separable graphon needs coefficients".into()));
                }
                GraphonKernel::SeparableRankOne(coefficients.clone())
            }
            Self::Adjacency { .. } => {
                let adj = self.adjacency(base)?.expect("adjacency variant");
                let op = adj.step_embed::<f64>().map_err(|e| CliError::Input(e.to_string()))?;
                GraphonKernel::Step(op.kernel().clone())
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CostSpec {
    Scalar(f64),
    Graphon(GraphonCost),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphonCost {
    pub graphon: GraphonSpec,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub shift: f64,
}

fn one() -> f64 {
    1.0
}

impl CostSpec {
    fn build(&self, base: &Path) -> Result<OperatorSpec, CliError> {
        Ok(match self {
            Self::Scalar(c) => OperatorSpec::Scalar(*c),
            Self::Graphon(g) => OperatorSpec::Graphon {
                graphon: g.graphon.kernel(base)?,
                scale: g.scale,
                shift: g.shift,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    pub m: Option<CostSpec>,
    pub m_t: Option<CostSpec>,
    pub r: Option<CostSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSection {
    Zero,
    WorstCase,
    Mode {
        k: usize,
        #[serde(default = "one")]
        variance: f64,
    },
    Graphon {
        graphon: GraphonSpec,
        #[serde(default = "one")]
        scale: f64,
    },
    Independent {
        variance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum X0Spec {
    Constant(f64),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub graphon: Option<GraphonSpec>,
    /// Replace the graphon by a W-random sample drawn from the first seed.
    pub sample: Option<bool>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub costs: Option<CostsSection>,
    pub noise: Option<NoiseSection>,
    pub n: Option<usize>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub rho: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub x0: Option<X0Spec>,
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedGraphon {
    pub name: String,
    pub graphon: GraphonSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Section {
    pub n: Option<usize>,
    pub rho: Option<f64>,
    pub graphons: Option<Vec<NamedGraphon>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceSpec {
    WRandom,
    Discretized,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub graphon: Option<GraphonSpec>,
    pub n_list: Option<Vec<usize>>,
    pub reference_n: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub source: Option<SourceSpec>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub m: Option<f64>,
    pub m_t: Option<f64>,
    pub r: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub x0: Option<f64>,
    pub noise_mode: Option<usize>,
    pub noise_variance: Option<f64>,
    pub record_every: Option<usize>,
    pub max_rmd_threshold: Option<f64>,
    pub pass_fraction: Option<f64>,
    pub check_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowRankSection {
    pub graphon: Option<GraphonSpec>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub m: Option<f64>,
    pub m_t: Option<f64>,
    pub r: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub x0: Option<f64>,
    pub use_limit: Option<bool>,
    pub max_rmd_threshold: Option<f64>,
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfHorizonSection {
    pub graphon: Option<GraphonSpec>,
    pub a: Option<f64>,
    pub n: Option<usize>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub fit_until: Option<f64>,
    pub r2_threshold: Option<f64>,
    pub record_every: Option<usize>,
    pub seed: Option<u64>,
    pub x0: Option<f64>,
}

/// The whole configuration file.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub out: Option<PathBuf>,
    pub scenario: Option<ScenarioSection>,
    pub table1: Option<Table1Section>,
    pub convergence: Option<ConvergenceSection>,
    pub lowrank: Option<LowRankSection>,
    pub infhorizon: Option<InfHorizonSection>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

/// A parsed configuration with the directory that relative paths resolve
/// against.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub file: ConfigFile,
    pub base: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base: PathBuf) -> Result<Self, CliError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self { file, base })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

/// A seed list of length `k` becomes `s, s+1, …, s+k−1`.
fn shift_seeds(seeds: Vec<u64>, seed: Option<u64>) -> Vec<u64> {
    match seed {
        Some(s) => (0..seeds.len().max(1) as u64).map(|k| s.wrapping_add(k)).collect(),
        None => seeds,
    }
}

pub fn scenario(cfg: &Config, ov: &Overrides) -> Result<Scenario, CliError> {
    let sec = cfg.file.scenario.clone().unwrap_or_default();
    let mut s = Scenario::default();
    let base = &cfg.base;
    if let Some(g) = &sec.graphon {
        s.coupling = match g.adjacency(base)? {
            Some(adj) => {
                if sec.n.is_some() || ov.n.is_some() {
                    return Err(CliError::Config("n is fixed by the adjacency file".into()));
                }
                s.n = adj.n();
                CouplingSpec::Adjacency(adj)
            }
            None if sec.sample == Some(true) => CouplingSpec::WRandom(g.kernel(base)?),
            None => CouplingSpec::Graphon(g.kernel(base)?),
        };
    } else if sec.sample == Some(true) {
        s.coupling = CouplingSpec::WRandom(GraphonKernel::quadratic_rank_one());
    }
    if let Some(v) = sec.a {
        s.a = v;
    }
    if let Some(v) = sec.b {
        s.b = v;
    }
    if let Some(c) = &sec.costs {
        if let Some(m) = &c.m {
            s.m = m.build(base)?;
        }
        if let Some(m) = &c.m_t {
            s.mt = m.build(base)?;
        }
        if let Some(m) = &c.r {
            s.r = m.build(base)?;
        }
    }
    if let Some(noise) = &sec.noise {
        s.noise = match noise {
            NoiseSection::Zero => NoiseSpec::Zero,
            NoiseSection::WorstCase => NoiseSpec::WorstCase,
            NoiseSection::Mode { k, variance } => NoiseSpec::Mode {
                k: *k,
                variance: *variance,
            },
            NoiseSection::Graphon { graphon, scale } => NoiseSpec::Graphon {
                graphon: graphon.kernel(base)?,
                scale: *scale,
            },
            NoiseSection::Independent { variance } => NoiseSpec::IndependentNodes { variance: *variance },
        };
    }
    if let Some(v) = ov.n.or(sec.n) {
        s.n = v;
    }
    s.horizon = positive("horizon", ov.horizon.or(sec.horizon).unwrap_or(s.horizon))?;
    s.dt = positive("dt", ov.dt.or(sec.dt).unwrap_or(s.dt))?;
    s.rho = sec.rho;
    if let Some(r) = s.rho {
        positive("rho", r)?;
    }
    s.seeds = shift_seeds(sec.seeds.unwrap_or(s.seeds), ov.seed);
    if s.seeds.is_empty() {
        return Err(CliError::Config("seeds must not be empty".into()));
    }
    if let Some(x0) = sec.x0 {
        s.x0 = match x0 {
            X0Spec::Constant(c) => InitialState::Constant(c),
            X0Spec::Values(v) => InitialState::Values(v),
        };
    }
    if let Some(v) = sec.record_every {
        s.record_every = v.max(1);
    }
    if s.n == 0 {
        return Err(CliError::Config("n must be positive".into()));
    }
    Ok(s)
}

pub fn table1(cfg: &Config, ov: &Overrides) -> Result<Table1Config, CliError> {
    let sec = cfg.file.table1.clone().unwrap_or_default();
    let mut t = Table1Config::default();
    if let Some(v) = ov.n.or(sec.n) {
        t.n = v;
    }
    if t.n < 100 {
        return Err(CliError::Config(format!("table1 needs n ≥ 100, got {}", t.n)));
    }
    if let Some(r) = sec.rho {
        t.rho = positive("rho", r)?;
    }
    if let Some(list) = sec.graphons {
        if list.is_empty() {
            return Err(CliError::Config("table1.graphons must not be empty".into()));
        }
        t.graphons = list
            .iter()
            .map(|g| Ok((g.name.clone(), g.graphon.kernel(&cfg.base)?)))
            .collect::<Result<_, CliError>>()?;
    }
    Ok(t)
}

pub fn convergence(cfg: &Config, ov: &Overrides) -> Result<ConvergenceConfig, CliError> {
    let sec = cfg.file.convergence.clone().unwrap_or_default();
    let mut c = ConvergenceConfig::default();
    if let Some(g) = &sec.graphon {
        c.graphon = g.kernel(&cfg.base)?;
    }
    if let Some(v) = sec.n_list {
        c.n_list = v;
    }
    if let Some(v) = sec.reference_n {
        c.reference_n = v;
    }
    if let Some(n) = ov.n {
        c.reference_n = n;
        c.n_list.retain(|k| *k <= n && *k > 0 && n % *k == 0);
    }
    if c.n_list.is_empty() {
        return Err(CliError::Config("convergence.n_list must not be empty".into()));
    }
    if c.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("convergence.n_list must be strictly ascending".into()));
    }
    if let Some(n) = c.n_list.iter().find(|n| **n == 0 || c.reference_n % **n != 0) {
        return Err(CliError::Config(format!(
            "n = {n} does not divide reference_n = {}",
            c.reference_n
        )));
    }
    c.seeds = shift_seeds(sec.seeds.unwrap_or(c.seeds), ov.seed);
    if c.seeds.is_empty() {
        return Err(CliError::Config("convergence.seeds must not be empty".into()));
    }
    if let Some(s) = sec.source {
        c.source = match s {
            SourceSpec::WRandom => FiniteSource::WRandom,
            SourceSpec::Discretized => FiniteSource::Discretized,
        };
    }
    macro_rules! set {
        ($($field:ident <- $key:ident),*) => {$( if let Some(v) = sec.$key { c.$field = v; } )*};
    }
    set!(a <- a, b <- b, m <- m, mt <- m_t, r <- r, x0 <- x0, noise_mode <- noise_mode,
         noise_variance <- noise_variance, record_every <- record_every,
         max_rmd_threshold <- max_rmd_threshold, pass_fraction <- pass_fraction, check_n <- check_n);
    c.horizon = positive("horizon", ov.horizon.or(sec.horizon).unwrap_or(c.horizon))?;
    c.dt = positive("dt", ov.dt.or(sec.dt).unwrap_or(c.dt))?;
    Ok(c)
}

pub fn lowrank(cfg: &Config, ov: &Overrides) -> Result<LowRankDemoConfig, CliError> {
    let sec = cfg.file.lowrank.clone().unwrap_or_default();
    let mut c = LowRankDemoConfig::default();
    if let Some(g) = &sec.graphon {
        c.graphon = g.kernel(&cfg.base)?;
        if !matches!(c.graphon, GraphonKernel::SeparableRankOne(_)) {
            return Err(CliError::Config("lowrank.graphon must be rank-one or separable".into()));
        }
    }
    macro_rules! set {
        ($($field:ident <- $key:ident),*) => {$( if let Some(v) = sec.$key { c.$field = v; } )*};
    }
    set!(seed <- seed, n <- n, a <- a, b <- b, m <- m, mt <- m_t, r <- r, x0 <- x0,
         use_limit <- use_limit, max_rmd_threshold <- max_rmd_threshold, record_every <- record_every);
    if let Some(s) = ov.seed {
        c.seed = s;
    }
    if let Some(n) = ov.n {
        c.n = n;
    }
    if c.n < 2 {
        return Err(CliError::Config("lowrank.n must be at least 2".into()));
    }
    c.horizon = positive("horizon", ov.horizon.or(sec.horizon).unwrap_or(c.horizon))?;
    c.dt = positive("dt", ov.dt.or(sec.dt).unwrap_or(c.dt))?;
    Ok(c)
}

pub fn infhorizon(cfg: &Config, ov: &Overrides) -> Result<InfHorizonConfig, CliError> {
    let sec = cfg.file.infhorizon.clone().unwrap_or_default();
    let mut c = InfHorizonConfig::default();
    if let Some(g) = &sec.graphon {
        c.graphon = g.kernel(&cfg.base)?;
    }
    macro_rules! set {
        ($($field:ident <- $key:ident),*) => {$( if let Some(v) = sec.$key { c.$field = v; } )*};
    }
    set!(a <- a, n <- n, fit_until <- fit_until, r2_threshold <- r2_threshold,
         record_every <- record_every, seed <- seed, x0 <- x0);
    if let Some(s) = ov.seed {
        c.seed = s;
    }
    if let Some(n) = ov.n {
        c.n = n;
    }
    if c.n == 0 {
        return Err(CliError::Config("infhorizon.n must be positive".into()));
    }
    c.horizon = positive("horizon", ov.horizon.or(sec.horizon).unwrap_or(c.horizon))?;
    c.dt = positive("dt", ov.dt.or(sec.dt).unwrap_or(c.dt))?;
    if c.fit_until > c.horizon {
        return Err(CliError::Config("infhorizon.fit_until exceeds the horizon".into()));
    }
    Ok(c)
}
