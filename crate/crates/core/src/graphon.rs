//! Analytic graphons, W-random graph sampling and step embedding of
//! adjacency matrices.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid_ops::{Grid, KernelMatrix, OperatorKps};
use crate::scalar::Scalar;

/// Symmetric kernel on `[0,1]²`.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphonKernel<T: Scalar> {
    /// Erdős–Rényi limit: constant edge probability `p`.
    Constant(T),
    /// Uniform attachment: `1 − max(α, β)`.
    UniformAttachment,
    /// Sum of two shifted Gaussian ridges of width `sigma`, offset `gamma`
    /// from the diagonal.
    SmallWorld { sigma: T, gamma: T },
    /// `cos(2π(α − β))`.
    Cosine,
    /// `g(α) g(β)` with `g` a polynomial, coefficients in ascending powers.
    SeparableRankOne(Vec<T>),
    /// Piecewise-constant kernel on a grid.
    Step(KernelMatrix<T>),
}

fn polynomial<T: Scalar>(coefficients: &[T], x: T) -> T {
    coefficients.iter().rev().fold(T::zero(), |acc, c| acc * x + *c)
}

impl<T: Scalar> GraphonKernel<T> {
    /// The rank-one graphon `(α² − 1)(β² − 1)`.
    pub fn quadratic_rank_one() -> Self {
        Self::SeparableRankOne(vec![-T::one(), T::zero(), T::one()])
    }

    pub fn eval(&self, alpha: T, beta: T) -> Result<T> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        if !unit(alpha) || !unit(beta) {
            return Err(Error::Domain(format!(
                "graphon evaluated at ({alpha}, {beta}) outside [0,1]²"
            )));
        }
        Ok(self.eval_unchecked(alpha, beta))
    }

    fn eval_unchecked(&self, alpha: T, beta: T) -> T {
        match self {
            Self::Constant(p) => *p,
            Self::UniformAttachment => T::one() - alpha.max(beta),
            Self::SmallWorld { sigma, gamma } => {
                // d = α − β flips sign exactly under the swap, so the two
                // ridges trade places and the sum is exactly symmetric.
                let d = alpha - beta;
                let half = T::of(0.5);
                let ridge = |x: T| (-(x / *sigma) * (x / *sigma) * half).exp();
                half * (ridge(d - *gamma) + ridge(d + *gamma))
            }
            Self::Cosine => (T::two_pi() * (alpha - beta)).cos(),
            Self::SeparableRankOne(c) => polynomial(c, alpha) * polynomial(c, beta),
            Self::Step(k) => {
                let g = k.grid();
                k.get(g.cell_of(alpha), g.cell_of(beta))
            }
        }
    }

    /// The profile `g` of a separable rank-one graphon.
    pub fn profile(&self, alpha: T) -> Option<T> {
        match self {
            Self::SeparableRankOne(c) => Some(polynomial(c, alpha)),
            _ => None,
        }
    }

    /// Whether every value is an edge probability, so sampling needs no
    /// clipping.
    pub fn is_probability_valued(&self) -> bool {
        match self {
            Self::Constant(p) => *p >= T::zero() && *p <= T::one(),
            Self::UniformAttachment | Self::SmallWorld { .. } => true,
            Self::Cosine => false,
            Self::SeparableRankOne(_) | Self::Step(_) => false,
        }
    }

    /// Midpoint sampling of the kernel; the identity part is zero.
    pub fn discretize(&self, grid: Grid) -> OperatorKps<T> {
        let mids: Vec<T> = grid.midpoints();
        OperatorKps::from_kernel(KernelMatrix::from_fn(grid, |i, j| {
            self.eval_unchecked(mids[i], mids[j])
        }))
    }
}

/// Simple undirected graph: symmetric, hollow, binary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    entries: Vec<bool>,
    seed: Option<u64>,
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            entries: vec![false; n * n],
            seed: None,
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut a = Self::empty(n);
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Domain(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            if i == j {
                return Err(Error::Domain(format!("self-loop at node {i}")));
            }
            a.set(i, j);
        }
        Ok(a)
    }

    fn set(&mut self, i: usize, j: usize) {
        self.entries[i * self.n + j] = true;
        self.entries[j * self.n + i] = true;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Seed of the W-random draw that produced this graph, if any.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.n + j]
    }

    /// Edges `(i, j)` with `i < j`, row-major.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| ((i + 1)..self.n).filter_map(move |j| self.get(i, j).then_some((i, j))))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Fraction of the `n(n−1)/2` possible edges present.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.n * (self.n - 1) / 2) as f64
    }

    pub fn is_symmetric_and_hollow(&self) -> bool {
        (0..self.n).all(|i| !self.get(i, i) && (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Edge list, one `i j` pair per line (0-indexed, `i < j`), after a
    /// `# nodes <n>` comment.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Parses an edge list. The node count comes from `n`, else from a
    /// `# nodes <n>` comment, else from the largest index seen.
    pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<Self> {
        let mut declared = n;
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut words = comment.split_whitespace();
                if words.next() == Some("nodes") && declared.is_none() {
                    declared = words.next().and_then(|w| w.parse().ok());
                }
                continue;
            }
            let parse_err = |msg: &str| Error::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let mut parts = line.split_whitespace();
            let i: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("expected node index"))?;
            let j: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("expected second node index"))?;
            if parts.next().is_some() {
                return Err(parse_err("expected exactly two indices"));
            }
            edges.push((i, j));
        }
        let n = declared.unwrap_or_else(|| edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
        Self::from_edges(n, edges)
    }

    /// Dense 0/1 matrix, comma separated, one row per line.
    pub fn to_dense_csv(&self) -> String {
        let mut out = String::with_capacity(self.n * self.n * 2);
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(',');
                }
                out.push(if self.get(i, j) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_dense_csv(text: &str) -> Result<Self> {
        let rows: Vec<Vec<&str>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.split(',').map(str::trim).collect())
            .collect();
        let n = rows.len();
        let mut a = Self::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {n} columns, got {}", row.len()),
                });
            }
            for (j, cell) in row.iter().enumerate() {
                let v = match *cell {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Parse {
                            line: i + 1,
                            msg: format!("entry {other:?} is not 0 or 1"),
                        })
                    }
                };
                a.entries[i * n + j] = v;
            }
        }
        if !a.is_symmetric_and_hollow() {
            return Err(Error::Domain(
                "adjacency matrix must be symmetric with a zero diagonal".into(),
            ));
        }
        Ok(a)
    }

    /// Step-function embedding: kernel entries are the 0/1 adjacency values,
    /// so the operator acts as `A / n`.
    pub fn step_embed<T: Scalar>(&self) -> Result<OperatorKps<T>> {
        let grid = Grid::new(self.n)?;
        Ok(OperatorKps::from_kernel(KernelMatrix::from_fn(grid, |i, j| {
            if self.get(i, j) {
                T::one()
            } else {
                T::zero()
            }
        })))
    }

    /// Number of operator eigenvalues with magnitude above `tol`.
    pub fn numerical_rank(&self, tol: f64) -> Result<usize> {
        let spec = self.step_embed::<f64>()?.spectral_decompose()?;
        Ok(spec.eigenvalues().iter().filter(|l| l.abs() > tol).count())
    }
}

/// How edge probabilities outside `[0, 1]` are handled during sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbabilityRange {
    /// Reject the draw with a domain error.
    #[default]
    Strict,
    /// Clamp to `[0, 1]` and count the clamped pairs.
    Clip,
}

/// W-random graph on `n` nodes: for each pair `i < j` (row-major) one uniform
/// draw decides the edge with probability `g(α_i, α_j)` at the cell midpoints.
pub fn sample_w_random_graph<T: Scalar>(g: &GraphonKernel<T>, n: usize, seed: u64) -> Result<AdjacencyMatrix> {
    sample_with_range(g, n, seed, ProbabilityRange::Strict).map(|(a, _)| a)
}

/// Like [`sample_w_random_graph`], returning the number of pairs whose
/// probability had to be clipped under [`ProbabilityRange::Clip`].
pub fn sample_with_range<T: Scalar>(
    g: &GraphonKernel<T>,
    n: usize,
    seed: u64,
    range: ProbabilityRange,
) -> Result<(AdjacencyMatrix, usize)> {
    let grid = Grid::new(n)?;
    let mids: Vec<T> = grid.midpoints();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = AdjacencyMatrix::empty(n);
    a.seed = Some(seed);
    let mut clipped = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut p = g.eval_unchecked(mids[i], mids[j]).as_f64();
            if !(0.0..=1.0).contains(&p) {
                match range {
                    ProbabilityRange::Strict => {
                        return Err(Error::Domain(format!(
                            "edge probability {p} at cells ({i}, {j}) outside [0, 1]"
                        )))
                    }
                    ProbabilityRange::Clip => {
                        clipped += 1;
                        p = p.clamp(0.0, 1.0);
                    }
                }
            }
            let u: f64 = rng.random();
            if u < p {
                a.set(i, j);
            }
        }
    }
    Ok((a, clipped))
}
