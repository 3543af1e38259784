//! Reduction of Q-LQG problems whose operators are finite rank on a common
//! orthonormal subspace `span{f_1, …, f_N}`.
//!
//! The state splits into coordinates on the subspace, governed by an
//! `N`-dimensional LQG problem with matrices `A_ij = ⟨K_A f_j, f_i⟩`, and a
//! complement that only sees the identity parts `a, b, m, r, m_T`. The
//! complement has a scalar Riccati solution `p_t` and feedback
//! `ŭ = −(b/r) p_t x̆`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::dynamics::{FeedbackLaw, LinearSystem, Trajectory};
use crate::error::{Error, Result};
use crate::graphon::GraphonKernel;
use crate::grid_ops::{Grid, GridField, KernelMatrix, OperatorKps};
use crate::qnoise::{QNoisePath, TimeGrid};
use crate::riccati::CostOperators;
use crate::scalar::Scalar;
use crate::table::{CsvTable, CsvValue};

/// Residual below which an operator counts as exactly low rank, relative to
/// `1 + ‖K‖_HS`.
pub const LOW_RANK_TOL: f64 = 1e-8;

/// Orthonormal functions under the quadrature inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis<T: Scalar> {
    grid: Grid,
    /// Column `k` is `f_k`.
    functions: DMatrix<T>,
    gram_error: T,
}

impl<T: Scalar> OrthonormalBasis<T> {
    /// Modified Gram–Schmidt with one reorthogonalisation pass.
    pub fn new(fields: &[GridField<T>]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::Domain("a basis needs at least one function".into()))?;
        let grid = first.grid();
        let n = T::of_usize(grid.n());
        let mut functions = DMatrix::zeros(grid.n(), fields.len());
        for (k, f) in fields.iter().enumerate() {
            grid.ensure_same(&f.grid())?;
            let mut v = f.values().clone();
            let original = (v.norm_squared() / n).sqrt();
            for _ in 0..2 {
                for j in 0..k {
                    let fj = functions.column(j);
                    let c = fj.dot(&v) / n;
                    v.axpy(-c, &fj, T::one());
                }
            }
            let norm = (v.norm_squared() / n).sqrt();
            if !(norm > T::tol(1e-10) * original) || norm == T::zero() {
                return Err(Error::DependentBasis { index: k });
            }
            functions.set_column(k, &(v / norm));
        }
        let gram = functions.tr_mul(&functions) / n;
        let gram_error = (gram - DMatrix::identity(fields.len(), fields.len())).amax();
        Ok(Self {
            grid,
            functions,
            gram_error,
        })
    }

    /// The normalised profile `g` of a separable rank-one graphon `g(α)g(β)`.
    pub fn from_profile(graphon: &GraphonKernel<T>, grid: Grid) -> Result<Self> {
        let mids: Vec<T> = grid.midpoints();
        let values: Option<Vec<T>> = mids.iter().map(|a| graphon.profile(*a)).collect();
        let values =
            values.ok_or_else(|| Error::Domain("basis from a profile needs a separable rank-one graphon".into()))?;
        Self::new(&[GridField::new(grid, values)?])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.functions.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.ncols() == 0
    }

    pub fn function(&self, k: usize) -> GridField<T> {
        GridField::from_vector(self.grid, self.functions.column(k).into_owned()).expect("column length")
    }

    pub fn functions(&self) -> &DMatrix<T> {
        &self.functions
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn gram_error(&self) -> T {
        self.gram_error
    }

    fn coords_of(&self, v: &DVector<T>) -> DVector<T> {
        self.functions.tr_mul(v) / T::of_usize(self.grid.n())
    }

    /// Basis functions as a table: `alpha`, then `f_1, …, f_N`.
    pub fn to_table(&self) -> CsvTable {
        let mut header = vec!["alpha".to_string()];
        header.extend((1..=self.len()).map(|k| format!("f{k}")));
        let mut table = CsvTable::new(header);
        for i in 0..self.grid.n() {
            let mut row = vec![CsvValue::Float(self.grid.midpoint::<f64>(i))];
            row.extend(self.functions.row(i).iter().map(|v| CsvValue::Float(v.as_f64())));
            table.push(row);
        }
        table
    }
}

/// `(A, c)` with `A_ij = ⟨K f_j, f_i⟩` for the kernel part and `c` the
/// identity part.
pub fn project_operator<T: Scalar>(op: &OperatorKps<T>, basis: &OrthonormalBasis<T>) -> Result<(DMatrix<T>, T)> {
    op.grid().ensure_same(&basis.grid)?;
    let n = T::of_usize(basis.grid.n());
    let kf = op.kernel().entries() * &basis.functions;
    Ok((basis.functions.tr_mul(&kf) / (n * n), op.scalar()))
}

/// `‖K − P K P‖_HS` with `P` the orthogonal projection onto the basis span.
pub fn check_low_rank<T: Scalar>(op: &OperatorKps<T>, basis: &OrthonormalBasis<T>) -> Result<T> {
    let (c, _) = project_operator(op, basis)?;
    let f = &basis.functions;
    let residual = op.kernel().entries() - f * c * f.transpose();
    Ok(residual.norm() / T::of_usize(basis.grid.n()))
}

/// Coordinates `⟨x, f_k⟩` and the orthogonal complement of `x`.
pub fn decompose_field<T: Scalar>(x: &GridField<T>, basis: &OrthonormalBasis<T>) -> Result<(DVector<T>, GridField<T>)> {
    x.grid().ensure_same(&basis.grid)?;
    let coords = basis.coords_of(x.values());
    let complement = x.values() - &basis.functions * &coords;
    Ok((coords, GridField::from_vector(basis.grid, complement)?))
}

/// `Σ_k c_k f_k + ŭ`.
pub fn lift_control<T: Scalar>(
    coords: &DVector<T>,
    complement: &GridField<T>,
    basis: &OrthonormalBasis<T>,
) -> Result<GridField<T>> {
    complement.grid().ensure_same(&basis.grid)?;
    if coords.len() != basis.len() {
        return Err(Error::Length {
            expected: basis.len(),
            got: coords.len(),
        });
    }
    GridField::from_vector(basis.grid, &basis.functions * coords + complement.values())
}

/// Whether every operator must be exactly low rank, or only the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionMode {
    /// All kernels must lie in the subspace; the reduction is then exact.
    #[default]
    Exact,
    /// Kernels are projected regardless; the noise must still be low rank.
    Approximate,
}

/// Low-rank residuals `‖K − PKP‖_HS` of each operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResiduals<T: Scalar> {
    pub a: T,
    pub b: T,
    pub q: T,
    pub m: T,
    pub mt: T,
    pub r: T,
}

impl<T: Scalar> ProjectionResiduals<T> {
    pub fn max(&self) -> T {
        [self.a, self.b, self.q, self.m, self.mt, self.r]
            .into_iter()
            .fold(T::zero(), |acc, x| acc.max(x))
    }
}

/// `N`-dimensional LQG data on the subspace plus the identity parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSystem<T: Scalar> {
    basis: OrthonormalBasis<T>,
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub m: DMatrix<T>,
    pub mt: DMatrix<T>,
    pub r: DMatrix<T>,
    pub a_scalar: T,
    pub b_scalar: T,
    pub m_scalar: T,
    pub mt_scalar: T,
    pub r_scalar: T,
    /// `⟨Q f_j, f_i⟩`.
    pub q: DMatrix<T>,
    /// KL eigenvalues when `q` is diagonal in the basis.
    pub q_diag: Option<DVector<T>>,
    pub residuals: ProjectionResiduals<T>,
}

impl<T: Scalar> ProjectedSystem<T> {
    pub fn project(
        sys: &LinearSystem<T>,
        costs: &CostOperators<T>,
        basis: &OrthonormalBasis<T>,
        mode: ProjectionMode,
    ) -> Result<Self> {
        sys.grid().ensure_same(&costs.grid())?;
        sys.grid().ensure_same(&basis.grid)?;
        let limit = |op: &OperatorKps<T>| T::tol(LOW_RANK_TOL) * (T::one() + op.kernel_hs_norm());
        let residual = |op: &OperatorKps<T>| check_low_rank(op, basis);
        let residuals = ProjectionResiduals {
            a: residual(sys.a_op())?,
            b: residual(sys.b_op())?,
            q: residual(sys.q().op())?,
            m: residual(costs.m_op())?,
            mt: residual(costs.mt_op())?,
            r: residual(costs.r_op())?,
        };
        if residuals.q > limit(sys.q().op()) {
            return Err(Error::NotLowRank {
                what: "noise covariance",
                residual: residuals.q.as_f64(),
            });
        }
        if mode == ProjectionMode::Exact {
            let checks: [(&'static str, T, &OperatorKps<T>); 5] = [
                ("A", residuals.a, sys.a_op()),
                ("B", residuals.b, sys.b_op()),
                ("M", residuals.m, costs.m_op()),
                ("M_T", residuals.mt, costs.mt_op()),
                ("R", residuals.r, costs.r_op()),
            ];
            for (what, res, op) in checks {
                if res > limit(op) {
                    return Err(Error::NotLowRank {
                        what,
                        residual: res.as_f64(),
                    });
                }
            }
        }
        let (a, a_scalar) = project_operator(sys.a_op(), basis)?;
        let (b, b_scalar) = project_operator(sys.b_op(), basis)?;
        let (m, m_scalar) = project_operator(costs.m_op(), basis)?;
        let (mt, mt_scalar) = project_operator(costs.mt_op(), basis)?;
        let (r, r_scalar) = project_operator(costs.r_op(), basis)?;
        let (q, _) = project_operator(sys.q().op(), basis)?;
        let k = basis.len();
        let off_diag = (0..k)
            .flat_map(|i| (0..k).filter(move |j| *j != i).map(move |j| (i, j)))
            .fold(T::zero(), |acc, (i, j)| acc.max(q[(i, j)].abs()));
        let q_diag = (off_diag <= T::tol(1e-12)).then(|| q.diagonal());
        let proj = Self {
            basis: basis.clone(),
            a,
            b,
            m,
            mt,
            r,
            a_scalar,
            b_scalar,
            m_scalar,
            mt_scalar,
            r_scalar,
            q,
            q_diag,
            residuals,
        };
        proj.validate()?;
        Ok(proj)
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_scalar > T::zero()) {
            return Err(Error::NotInvertible {
                min: self.r_scalar.as_f64(),
            });
        }
        let r_bar = self.shifted(&self.r, self.r_scalar);
        let min_r = SymmetricEigen::new(r_bar).eigenvalues.min();
        if !(min_r > T::zero()) {
            return Err(Error::NotInvertible { min: min_r.as_f64() });
        }
        Ok(())
    }

    pub fn basis(&self) -> &OrthonormalBasis<T> {
        &self.basis
    }

    pub fn dims(&self) -> usize {
        self.basis.len()
    }

    fn shifted(&self, m: &DMatrix<T>, c: T) -> DMatrix<T> {
        m + DMatrix::identity(m.nrows(), m.ncols()) * c
    }

    /// `A + aI`.
    pub fn a_bar(&self) -> DMatrix<T> {
        self.shifted(&self.a, self.a_scalar)
    }

    pub fn b_bar(&self) -> DMatrix<T> {
        self.shifted(&self.b, self.b_scalar)
    }

    pub fn m_bar(&self) -> DMatrix<T> {
        self.shifted(&self.m, self.m_scalar)
    }

    pub fn mt_bar(&self) -> DMatrix<T> {
        self.shifted(&self.mt, self.mt_scalar)
    }

    pub fn r_bar(&self) -> DMatrix<T> {
        self.shifted(&self.r, self.r_scalar)
    }

    /// Projected matrices as a long table `matrix, i, j, value`.
    pub fn to_table(&self) -> CsvTable {
        let mut table = CsvTable::new(["matrix", "i", "j", "value"]);
        let named = [
            ("A", self.a_bar()),
            ("B", self.b_bar()),
            ("M", self.m_bar()),
            ("M_T", self.mt_bar()),
            ("R", self.r_bar()),
            ("Q", self.q.clone()),
        ];
        for (name, m) in named {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    table.push(vec![name.into(), i.into(), j.into(), m[(i, j)].as_f64().into()]);
                }
            }
        }
        table
    }
}

/// Scalar complement Riccati solution `p_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementSolution<T: Scalar> {
    pub p: Vec<T>,
    pub b: T,
    pub r: T,
}

impl<T: Scalar> ComplementSolution<T> {
    /// Feedback gain `(b/r) p_t`: the complement control is `−(b/r) p_t x̆`.
    pub fn gain(&self, s: usize) -> T {
        self.b / self.r * self.p[s]
    }

    /// Closed-loop drift reduction `(b²/r) p_t`.
    pub fn closed_loop_coefficient(&self, s: usize) -> T {
        self.b * self.b / self.r * self.p[s]
    }
}

/// Solutions of the subspace and complement Riccati equations.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSolution<T: Scalar> {
    pub timegrid: TimeGrid<T>,
    /// `P_t` at every grid index.
    pub p: Vec<DMatrix<T>>,
    pub complement: ComplementSolution<T>,
    /// `(R + rI)⁻¹(B + bI)*`.
    gain_left: DMatrix<T>,
}

impl<T: Scalar> LowRankSolution<T> {
    /// Subspace gain `(R + rI)⁻¹(B + bI)* P_t`.
    pub fn gain(&self, s: usize) -> DMatrix<T> {
        &self.gain_left * &self.p[s]
    }
}

fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::of(0.5)
}

fn spd_inverse<T: Scalar>(m: DMatrix<T>) -> Result<DMatrix<T>> {
    let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
    Cholesky::new(m)
        .map(|c| c.inverse())
        .ok_or(Error::NotInvertible { min: min.as_f64() })
}

/// Solves `−Ṗ = Ā*P + PĀ − P B̄ R̄⁻¹ B̄* P + M̄`, `P_T = M̄_T`, and
/// `−ṗ = 2ap − (b²/r)p² + m`, `p_T = m_T`, both by RK4 on `tg`.
pub fn solve_lowrank_lqg<T: Scalar>(proj: &ProjectedSystem<T>, tg: TimeGrid<T>) -> Result<LowRankSolution<T>> {
    let a_bar = proj.a_bar();
    let b_bar = proj.b_bar();
    let r_inv = spd_inverse(proj.r_bar())?;
    let gain_left = &r_inv * b_bar.transpose();
    let g = symmetrize(&(&b_bar * &gain_left));
    let m_bar = proj.m_bar();
    let f = |p: &DMatrix<T>| -> DMatrix<T> {
        let pa = p * &a_bar;
        &pa + pa.transpose() - p * &g * p + &m_bar
    };
    let h = tg.dt();
    let half = h * T::of(0.5);
    let tol = -T::tol(1e-8);
    let steps = tg.steps();

    let mut p = proj.mt_bar();
    let mut backward = vec![p.clone()];
    for idx in (0..steps).rev() {
        let k1 = f(&p);
        let k2 = f(&(&p + &k1 * half));
        let k3 = f(&(&p + &k2 * half));
        let k4 = f(&(&p + &k3 * h));
        p = symmetrize(&(&p + (k1 + k2 * T::of(2.0) + k3 * T::of(2.0) + k4) * (h / T::of(6.0))));
        let min = SymmetricEigen::new(p.clone()).eigenvalues.min();
        if min < tol || !min.is_finite() {
            return Err(Error::Instability {
                index: idx,
                eigenvalue: min.as_f64(),
            });
        }
        backward.push(p.clone());
    }
    backward.reverse();

    let (a, b, m, r) = (proj.a_scalar, proj.b_scalar, proj.m_scalar, proj.r_scalar);
    let g_c = b * b / r;
    let fc = |p: T| T::of(2.0) * a * p - g_c * p * p + m;
    let mut pc = proj.mt_scalar;
    let mut comp = vec![pc];
    for idx in (0..steps).rev() {
        let k1 = fc(pc);
        let k2 = fc(pc + half * k1);
        let k3 = fc(pc + half * k2);
        let k4 = fc(pc + h * k3);
        pc += h / T::of(6.0) * (k1 + T::of(2.0) * k2 + T::of(2.0) * k3 + k4);
        if pc < tol || !pc.is_finite() {
            return Err(Error::Instability {
                index: idx,
                eigenvalue: pc.as_f64(),
            });
        }
        comp.push(pc);
    }
    comp.reverse();

    Ok(LowRankSolution {
        timegrid: tg,
        p: backward,
        complement: ComplementSolution { p: comp, b, r },
        gain_left,
    })
}

/// Full-grid gain operators equivalent to the reduced feedback:
/// `K_t = (b/r)p_t 𝕀 + F[(R̄⁻¹B̄*P_t) − (b/r)p_t I]Fᵀ`.
pub fn lifted_feedback<T: Scalar>(proj: &ProjectedSystem<T>, sol: &LowRankSolution<T>) -> Result<FeedbackLaw<T>> {
    let f = proj.basis.functions();
    let grid = proj.basis.grid;
    let k = proj.dims();
    let gains = (0..=sol.timegrid.steps())
        .map(|s| {
            let c = sol.complement.gain(s);
            let inner = sol.gain(s) - DMatrix::identity(k, k) * c;
            let kernel = KernelMatrix::new(grid, f * inner * f.transpose())?;
            Ok(OperatorKps::new(kernel, c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeedbackLaw::TimeVarying {
        timegrid: sol.timegrid,
        gains,
    })
}

/// Output of [`simulate_projected`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedRun<T: Scalar> {
    /// Lifted states and controls on the full grid.
    pub trajectory: Trajectory<T>,
    /// Row `s` holds the subspace coordinates `x^f_{t_s}`.
    pub coordinates: DMatrix<T>,
    /// `J^f` on this path.
    pub projected_cost: T,
    /// `J̆` on this path.
    pub complement_cost: T,
}

/// Euler–Maruyama on the reduced system with coordinates of the shared noise
/// path, lifted back to the grid.
pub fn simulate_projected<T: Scalar>(
    proj: &ProjectedSystem<T>,
    sol: &LowRankSolution<T>,
    x0: &GridField<T>,
    noise: &QNoisePath<T>,
) -> Result<ProjectedRun<T>> {
    let basis = &proj.basis;
    let grid = basis.grid;
    grid.ensure_same(&noise.grid())?;
    let tg = noise.timegrid();
    if tg.steps() != sol.timegrid.steps() || tg.dt() != sol.timegrid.dt() {
        return Err(Error::TimeGrid(
            "noise and Riccati solution use different time grids".into(),
        ));
    }
    let n = T::of_usize(grid.n());
    let steps = tg.steps();
    let dt = tg.dt();
    let (a_bar, b_bar) = (proj.a_bar(), proj.b_bar());
    let (m_bar, r_bar, mt_bar) = (proj.m_bar(), proj.r_bar(), proj.mt_bar());
    let (a, b) = (proj.a_scalar, proj.b_scalar);
    let f = basis.functions();

    let (mut xf, comp) = decompose_field(x0, basis)?;
    let mut xc = comp.into_vector();
    let k = basis.len();
    let mut states = DMatrix::zeros(steps + 1, grid.n());
    let mut controls = DMatrix::zeros(steps, grid.n());
    let mut coordinates = DMatrix::zeros(steps + 1, k);
    let mut jf = T::zero();
    let mut jc = T::zero();
    let record = |s: usize, xf: &DVector<T>, xc: &DVector<T>, states: &mut DMatrix<T>, coords: &mut DMatrix<T>| {
        let x = f * xf + xc;
        states.set_row(s, &x.transpose());
        coords.set_row(s, &xf.transpose());
    };
    record(0, &xf, &xc, &mut states, &mut coordinates);
    for s in 0..steps {
        let uf = -(sol.gain(s) * &xf);
        let uc = &xc * (-sol.complement.gain(s));
        jf += dt * (xf.dot(&(&m_bar * &xf)) + uf.dot(&(&r_bar * &uf)));
        jc += dt * (proj.m_scalar * xc.norm_squared() / n + proj.r_scalar * uc.norm_squared() / n);
        controls.set_row(s, &(f * &uf + &uc).transpose());

        let dw = noise.increments().row(s).transpose();
        let dwf = basis.coords_of(&dw);
        let dwc = &dw - f * &dwf;
        let next_f = &xf + (&a_bar * &xf + &b_bar * &uf) * dt + dwf;
        let next_c = &xc + (&xc * a + &uc * b) * dt + dwc;
        xf = next_f;
        xc = next_c;
        if xf.iter().chain(xc.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: s + 1 });
        }
        record(s + 1, &xf, &xc, &mut states, &mut coordinates);
    }
    jf += xf.dot(&(&mt_bar * &xf));
    jc += proj.mt_scalar * xc.norm_squared() / n;
    let trajectory = Trajectory::from_parts(tg, grid, states, controls, noise.seed())?;
    Ok(ProjectedRun {
        trajectory,
        coordinates,
        projected_cost: jf,
        complement_cost: jc,
    })
}
