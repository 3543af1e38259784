//! Q-noise: trace-class spatial covariances, Karhunen–Loève path sampling and
//! the sample statistics used to check the noise axioms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid_ops::{Grid, GridField, KernelMatrix, OperatorKps, SpectralDecomposition};
use crate::rng::standard_normals;
use crate::scalar::Scalar;
use crate::table::{CsvTable, CsvValue};

/// KL modes with eigenvalue below this are dropped.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Uniform time grid `0, dt, …, steps·dt = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T: Scalar> {
    horizon: T,
    dt: T,
    steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(horizon: T, dt: T) -> Result<Self> {
        if !(horizon > T::zero()) || !(dt > T::zero()) {
            return Err(Error::TimeGrid(format!(
                "horizon {horizon} and step {dt} must be positive"
            )));
        }
        let steps = (horizon / dt).round().as_f64() as usize;
        let mismatch = (T::of_usize(steps) * dt - horizon).abs();
        if steps == 0 || mismatch > T::tol(1e-12) * horizon.max(T::one()) {
            return Err(Error::TimeGrid(format!("step {dt} does not divide horizon {horizon}")));
        }
        Ok(Self { horizon, dt, steps })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Time of grid index `s` (`0 ≤ s ≤ steps`).
    pub fn time(&self, s: usize) -> T {
        if s == self.steps {
            self.horizon
        } else {
            T::of_usize(s) * self.dt
        }
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.steps).map(|s| self.time(s)).collect()
    }

    /// Grid index of `t`, which must lie on the grid up to rounding.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let s = (t / self.dt).round();
        let off = (s * self.dt - t).abs() > T::tol(1e-9) * self.dt;
        if off || s < T::zero() || s.as_f64() as usize > self.steps {
            return Err(Error::OffGrid { t: t.as_f64() });
        }
        Ok(s.as_f64() as usize)
    }
}

/// Validated trace-class, positive semidefinite covariance `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QCovariance<T: Scalar> {
    op: OperatorKps<T>,
    spectrum: SpectralDecomposition<T>,
    /// Eigenvalues clamped at zero, descending.
    eigenvalues: Vec<T>,
    rank: usize,
}

/// Checks symmetry, trace class and positivity of `op`.
pub fn validate_covariance<T: Scalar>(op: &OperatorKps<T>) -> Result<QCovariance<T>> {
    QCovariance::new(op)
}

impl<T: Scalar> QCovariance<T> {
    pub fn new(op: &OperatorKps<T>) -> Result<Self> {
        if op.scalar() != T::zero() {
            return Err(Error::NotTraceClass {
                scalar: op.scalar().as_f64(),
            });
        }
        let op = op.symmetrize();
        let spectrum = op.spectral_decompose()?;
        let floor = -T::tol(1e-10);
        let mut eigenvalues = Vec::with_capacity(spectrum.len());
        for &l in spectrum.eigenvalues() {
            if l < floor {
                return Err(Error::NegativeSpectrum { eigenvalue: l.as_f64() });
            }
            eigenvalues.push(l.max(T::zero()));
        }
        let cutoff = T::of(RANK_CUTOFF);
        let rank = eigenvalues.iter().take_while(|l| **l >= cutoff).count();
        Ok(Self {
            op,
            spectrum,
            eigenvalues,
            rank,
        })
    }

    pub fn zero(grid: Grid) -> Self {
        Self::new(&OperatorKps::zero(grid)).expect("zero is a covariance")
    }

    /// Unit rank-one covariance `⟨·, φ⟩ φ` on `φ` normalised to unit norm.
    pub fn rank_one(phi: &GridField<T>) -> Result<Self> {
        let norm = phi.l2_norm();
        if norm == T::zero() {
            return Err(Error::Domain("rank-one covariance on the zero function".into()));
        }
        Self::new(&OperatorKps::rank_one(&phi.scale(T::one() / norm), T::one()))
    }

    /// Independent noise of variance `variance·dt` per cell and step: the
    /// diagonal kernel `variance·δ_ij`, whose operator eigenvalues
    /// `variance/n` vanish as the grid is refined. It has no graphon limit.
    pub fn independent_nodes(grid: Grid, variance: T) -> Result<Self> {
        Self::new(&OperatorKps::from_kernel(KernelMatrix::from_fn(grid, |i, j| {
            if i == j {
                variance
            } else {
                T::zero()
            }
        })))
    }

    pub fn grid(&self) -> Grid {
        self.op.grid()
    }

    pub fn op(&self) -> &OperatorKps<T> {
        &self.op
    }

    pub fn spectrum(&self) -> &SpectralDecomposition<T> {
        &self.spectrum
    }

    /// Clamped eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Number of eigenvalues at or above the KL cutoff.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn trace(&self) -> T {
        self.eigenvalues.iter().fold(T::zero(), |a, l| a + *l)
    }

    /// Retained KL eigenvalues and eigenfunctions (as columns).
    pub fn kl_modes(&self) -> (Vec<T>, DMatrix<T>) {
        let r = self.rank;
        (
            self.eigenvalues[..r].to_vec(),
            self.spectrum.eigenfunction_matrix().columns(0, r).into_owned(),
        )
    }
}

/// `M Q M*`, validated.
pub fn pushforward_covariance<T: Scalar>(m: &OperatorKps<T>, q: &QCovariance<T>) -> Result<QCovariance<T>> {
    let mq = m.compose(q.op())?;
    QCovariance::new(&mq.compose(&m.adjoint())?)
}

/// Sampled Q-noise increments on a time grid; row `s` is `Δw` over
/// `[t_s, t_{s+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QNoisePath<T: Scalar> {
    timegrid: TimeGrid<T>,
    grid: Grid,
    increments: DMatrix<T>,
    seed: Option<u64>,
}

/// Draws a KL path `Δw_s = Σ_r √(λ_r dt) φ_r ξ_{s,r}`.
pub fn sample_path<T: Scalar>(q: &QCovariance<T>, tg: TimeGrid<T>, seed: u64) -> QNoisePath<T> {
    let xi = standard_normals(seed, tg.steps(), q.rank());
    let (eigenvalues, functions) = q.kl_modes();
    let mut path =
        QNoisePath::from_kl(tg, q.grid(), &eigenvalues, &functions, &xi).expect("shapes agree by construction");
    path.seed = Some(seed);
    path
}

impl<T: Scalar> QNoisePath<T> {
    pub fn zeros(tg: TimeGrid<T>, grid: Grid) -> Self {
        Self {
            timegrid: tg,
            grid,
            increments: DMatrix::zeros(tg.steps(), grid.n()),
            seed: None,
        }
    }

    /// Increments `Σ_r √(λ_r dt) ξ_{s,r} f_r` from explicit modes `f_r`
    /// (columns of `functions`) and draws `xi` (`steps × modes`).
    pub fn from_kl(
        tg: TimeGrid<T>,
        grid: Grid,
        eigenvalues: &[T],
        functions: &DMatrix<T>,
        xi: &DMatrix<T>,
    ) -> Result<Self> {
        let r = eigenvalues.len();
        if functions.nrows() != grid.n() || functions.ncols() != r {
            return Err(Error::Length {
                expected: grid.n() * r,
                got: functions.nrows() * functions.ncols(),
            });
        }
        if xi.nrows() != tg.steps() || xi.ncols() < r {
            return Err(Error::Length {
                expected: tg.steps() * r,
                got: xi.nrows() * xi.ncols(),
            });
        }
        let sdt = tg.dt().sqrt();
        let mut scaled = functions.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= eigenvalues[k].max(T::zero()).sqrt() * sdt;
        }
        let increments = xi.columns(0, r) * scaled.transpose();
        Ok(Self {
            timegrid: tg,
            grid,
            increments,
            seed: None,
        })
    }

    /// Wraps precomputed increments (`steps × n`).
    pub fn from_increments(tg: TimeGrid<T>, grid: Grid, increments: DMatrix<T>) -> Result<Self> {
        if increments.nrows() != tg.steps() || increments.ncols() != grid.n() {
            return Err(Error::Length {
                expected: tg.steps() * grid.n(),
                got: increments.nrows() * increments.ncols(),
            });
        }
        Ok(Self {
            timegrid: tg,
            grid,
            increments,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn timegrid(&self) -> TimeGrid<T> {
        self.timegrid
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn increments(&self) -> &DMatrix<T> {
        &self.increments
    }

    pub fn increment(&self, s: usize) -> GridField<T> {
        GridField::from_vector(self.grid, self.increments.row(s).transpose()).expect("row length equals grid size")
    }

    /// `w` at grid index `s`: the sum of the first `s` increments.
    pub fn cumulative(&self, s: usize) -> GridField<T> {
        self.window(0, s)
    }

    /// `w(t_b) − w(t_a)` for grid indices `a ≤ b`.
    pub fn window(&self, a: usize, b: usize) -> GridField<T> {
        let mut v = DVector::zeros(self.grid.n());
        for s in a..b {
            v += self.increments.row(s).transpose();
        }
        GridField::from_vector(self.grid, v).expect("length equals grid size")
    }

    /// Cumulative path as a table: `t` then one column per cell midpoint.
    pub fn to_table(&self) -> CsvTable {
        let mids: Vec<f64> = self.grid.midpoints();
        let mut header = vec!["t".to_string()];
        header.extend(mids.iter().map(|m| format!("{m}")));
        let mut table = CsvTable::new(header);
        let mut w = DVector::<T>::zeros(self.grid.n());
        for s in 0..=self.timegrid.steps() {
            if s > 0 {
                w += self.increments.row(s - 1).transpose();
            }
            let mut row = vec![CsvValue::Float(self.timegrid.time(s).as_f64())];
            row.extend(w.iter().map(|v| CsvValue::Float(v.as_f64())));
            table.push(row);
        }
        table
    }
}

/// Streaming sample cross-covariance `Cov(x, y)` of paired vectors.
#[derive(Debug, Clone)]
pub struct CrossCovariance<T: Scalar> {
    count: usize,
    mean_x: DVector<T>,
    mean_y: DVector<T>,
    comoment: DMatrix<T>,
}

impl<T: Scalar> CrossCovariance<T> {
    pub fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean_x: DVector::zeros(n),
            mean_y: DVector::zeros(n),
            comoment: DMatrix::zeros(n, n),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: &DVector<T>, y: &DVector<T>) {
        self.count += 1;
        let k = T::of_usize(self.count);
        let dx = x - &self.mean_x;
        self.mean_x += &dx / k;
        let dy_new = y - &self.mean_y;
        self.mean_y += &dy_new / k;
        let dy = y - &self.mean_y;
        self.comoment.ger(T::one(), &dx, &dy, T::one());
    }

    pub fn mean_x(&self) -> &DVector<T> {
        &self.mean_x
    }

    /// Unbiased covariance matrix `E[(x−x̄)(y−ȳ)ᵀ]`.
    pub fn covariance(&self) -> Result<DMatrix<T>> {
        if self.count < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: self.count,
            });
        }
        Ok(&self.comoment / T::of_usize(self.count - 1))
    }
}

fn ensure_compatible<T: Scalar>(paths: &[QNoisePath<T>]) -> Result<()> {
    if paths.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: paths.len(),
        });
    }
    for p in &paths[1..] {
        paths[0].grid.ensure_same(&p.grid)?;
        if p.timegrid != paths[0].timegrid {
            return Err(Error::TimeGrid("paths use different time grids".into()));
        }
    }
    Ok(())
}

/// Sample covariance of `w(t)` across paths, divided by `t`: an estimate of
/// the kernel of `Q`.
pub fn empirical_covariance<T: Scalar>(paths: &[QNoisePath<T>], t: T) -> Result<KernelMatrix<T>> {
    ensure_compatible(paths)?;
    if !(t > T::zero()) {
        return Err(Error::Domain(format!("covariance at time {t} needs t > 0")));
    }
    let s = paths[0].timegrid.index_of(t)?;
    let mut acc = CrossCovariance::new(paths[0].grid.n());
    for p in paths {
        let w = p.cumulative(s).into_vector();
        acc.push(&w, &w);
    }
    KernelMatrix::new(paths[0].grid, acc.covariance()? / t)
}

/// Sample cross-covariance of the increments over `[t0, t1]` and `[s0, s1]`;
/// its expectation is `|[t0,t1] ∩ [s0,s1]|` times the kernel of `Q`.
pub fn interval_cross_covariance<T: Scalar>(
    paths: &[QNoisePath<T>],
    first: (T, T),
    second: (T, T),
) -> Result<KernelMatrix<T>> {
    ensure_compatible(paths)?;
    let tg = paths[0].timegrid;
    let (a0, a1) = (tg.index_of(first.0)?, tg.index_of(first.1)?);
    let (b0, b1) = (tg.index_of(second.0)?, tg.index_of(second.1)?);
    if a0 > a1 || b0 > b1 {
        return Err(Error::Domain("interval endpoints out of order".into()));
    }
    let mut acc = CrossCovariance::new(paths[0].grid.n());
    for p in paths {
        acc.push(&p.window(a0, a1).into_vector(), &p.window(b0, b1).into_vector());
    }
    KernelMatrix::new(paths[0].grid, acc.covariance()?)
}
