//! Operator Riccati equations of the Q-LQG problem.
//!
//! The finite-horizon solution `S_t` solves
//! `−Ṡ = 𝔸*S + S𝔸 − S𝔹ℝ⁻¹𝔹*S + 𝕄`, `S_T = 𝕄_T`, integrated backward with RK4.
//! Closed forms cover the long-range average and discounted problems with
//! `𝔹 = ℝ = 𝕀`.

mod algebraic;
mod differential;

use std::sync::Arc;

pub use algebraic::{
    algebraic_riccati_symmetric, best_case_q, discounted_algebraic_riccati, long_range_average_cost, trace_value,
    worst_case_q, TraceExtremum,
};
pub use differential::{
    riccati_rhs, solve_differential_riccati, solve_differential_riccati_with, solve_stationary_riccati, RiccatiMethod,
    RiccatiProblem, StationarySolution,
};

use crate::dynamics::FeedbackLaw;
use crate::error::{Error, Result};
use crate::grid_ops::{hs_inner, Grid, GridField, ModalBasis, ModalValues, OperatorKps};
use crate::qnoise::{QCovariance, TimeGrid};
use crate::scalar::Scalar;
use crate::table::{CsvTable, CsvValue};

/// Smallest admissible spectral value of ℝ.
pub const R_MIN: f64 = 1e-8;

/// State and terminal cost weights and the control weight.
#[derive(Debug, Clone, PartialEq)]
pub struct CostOperators<T: Scalar> {
    m_op: OperatorKps<T>,
    mt_op: OperatorKps<T>,
    r_op: OperatorKps<T>,
}

impl<T: Scalar> CostOperators<T> {
    pub fn new(m_op: OperatorKps<T>, mt_op: OperatorKps<T>, r_op: OperatorKps<T>) -> Result<Self> {
        m_op.grid().ensure_same(&mt_op.grid())?;
        m_op.grid().ensure_same(&r_op.grid())?;
        let psd_floor = -T::tol(1e-10);
        for op in [&m_op, &mt_op] {
            let min = op.min_spectral_value()?;
            if min < psd_floor {
                return Err(Error::NegativeSpectrum {
                    eigenvalue: min.as_f64(),
                });
            }
        }
        let rmin = r_op.min_spectral_value()?;
        if rmin < T::of(R_MIN) {
            return Err(Error::NotInvertible { min: rmin.as_f64() });
        }
        Ok(Self {
            m_op: m_op.symmetrize(),
            mt_op: mt_op.symmetrize(),
            r_op: r_op.symmetrize(),
        })
    }

    /// `𝕄 = m𝕀`, `𝕄_T = m_T𝕀`, `ℝ = r𝕀`.
    pub fn scalar(grid: Grid, m: T, mt: T, r: T) -> Result<Self> {
        Self::new(
            OperatorKps::scaled_identity(grid, m),
            OperatorKps::scaled_identity(grid, mt),
            OperatorKps::scaled_identity(grid, r),
        )
    }

    pub fn grid(&self) -> Grid {
        self.m_op.grid()
    }

    pub fn m_op(&self) -> &OperatorKps<T> {
        &self.m_op
    }

    pub fn mt_op(&self) -> &OperatorKps<T> {
        &self.mt_op
    }

    pub fn r_op(&self) -> &OperatorKps<T> {
        &self.r_op
    }
}

/// How the solution operators are stored.
#[derive(Debug, Clone, PartialEq)]
pub enum RiccatiStorage<T: Scalar> {
    /// One operator per grid time.
    Dense(Vec<OperatorKps<T>>),
    /// Spectral functions of 𝔸: modal values per grid time in 𝔸's eigenbasis.
    Modal {
        basis: Arc<ModalBasis<T>>,
        values: Vec<ModalValues<T>>,
    },
}

/// `S_t` at every point of a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution<T: Scalar> {
    timegrid: TimeGrid<T>,
    grid: Grid,
    storage: RiccatiStorage<T>,
    trace_integral: Option<Vec<T>>,
}

impl<T: Scalar> RiccatiSolution<T> {
    pub(crate) fn new(timegrid: TimeGrid<T>, grid: Grid, storage: RiccatiStorage<T>) -> Self {
        Self {
            timegrid,
            grid,
            storage,
            trace_integral: None,
        }
    }

    pub fn timegrid(&self) -> TimeGrid<T> {
        self.timegrid
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn storage(&self) -> &RiccatiStorage<T> {
        &self.storage
    }

    pub fn is_modal(&self) -> bool {
        matches!(self.storage, RiccatiStorage::Modal { .. })
    }

    /// `S` at grid index `s`.
    pub fn s_at(&self, s: usize) -> OperatorKps<T> {
        match &self.storage {
            RiccatiStorage::Dense(ops) => ops[s].clone(),
            RiccatiStorage::Modal { basis, values } => basis.materialize(&values[s]),
        }
    }

    /// `S` at time `t`, which must be on the grid.
    pub fn s_at_time(&self, t: T) -> Result<OperatorKps<T>> {
        Ok(self.s_at(self.timegrid.index_of(t)?))
    }

    pub fn apply_at(&self, s: usize, f: &GridField<T>) -> Result<GridField<T>> {
        match &self.storage {
            RiccatiStorage::Dense(ops) => ops[s].apply(f),
            RiccatiStorage::Modal { basis, values } => basis.apply(&values[s], f),
        }
    }

    /// HS norm of the kernel part of `S` at index `s`.
    pub fn kernel_hs_norm_at(&self, s: usize) -> T {
        match &self.storage {
            RiccatiStorage::Dense(ops) => ops[s].kernel_hs_norm(),
            RiccatiStorage::Modal { values, .. } => {
                let v = &values[s];
                v.modes
                    .iter()
                    .fold(T::zero(), |acc, x| acc + (*x - v.complement) * (*x - v.complement))
                    .sqrt()
            }
        }
    }

    pub fn scalar_at(&self, s: usize) -> T {
        match &self.storage {
            RiccatiStorage::Dense(ops) => ops[s].scalar(),
            RiccatiStorage::Modal { values, .. } => values[s].complement,
        }
    }

    /// `trace(S_{t_s} Q)` at every grid index.
    pub fn trace_samples(&self, q: &QCovariance<T>) -> Result<Vec<T>> {
        self.grid.ensure_same(&q.grid())?;
        match &self.storage {
            RiccatiStorage::Dense(ops) => ops.iter().map(|s| hs_inner(s, q.op())).collect(),
            RiccatiStorage::Modal { basis, values } => {
                let diag = basis.diagonal_of(q.op())?;
                let trace = q.op().kernel_trace();
                Ok(values
                    .iter()
                    .map(|v| {
                        diag.iter()
                            .zip(v.modes.iter())
                            .fold(v.complement * trace, |acc, (d, x)| acc + (*x - v.complement) * *d)
                    })
                    .collect())
            }
        }
    }

    /// `∫_{t_s}^T trace(S_r Q) dr` at every grid index, by the trapezoid rule.
    pub fn trace_integral(&self, q: &QCovariance<T>) -> Result<Vec<T>> {
        let h = self.trace_samples(q)?;
        let steps = self.timegrid.steps();
        let half = self.timegrid.dt() * T::of(0.5);
        let mut out = vec![T::zero(); steps + 1];
        for s in (0..steps).rev() {
            out[s] = out[s + 1] + half * (h[s] + h[s + 1]);
        }
        Ok(out)
    }

    /// Caches the trace integral for `q`; used by [`Self::value`] and the table.
    pub fn attach_noise(&mut self, q: &QCovariance<T>) -> Result<()> {
        self.trace_integral = Some(self.trace_integral(q)?);
        Ok(())
    }

    pub fn attached_trace_integral(&self) -> Option<&[T]> {
        self.trace_integral.as_deref()
    }

    /// Value function with the attached noise: `⟨S_t x, x⟩ + ∫_t^T trace(S_r Q)dr`.
    pub fn value(&self, x: &GridField<T>, t: T) -> Result<T> {
        let s = self.timegrid.index_of(t)?;
        let tail = match &self.trace_integral {
            Some(v) => v[s],
            None => T::zero(),
        };
        Ok(self.apply_at(s, x)?.inner(x)? + tail)
    }

    /// One row per grid time: `t`, HS norm of the kernel, identity part, and
    /// `trace(S_t Q)` when a covariance is given.
    pub fn to_table(&self, q: Option<&QCovariance<T>>) -> Result<CsvTable> {
        let traces = q.map(|q| self.trace_samples(q)).transpose()?;
        let mut header = vec!["t", "kernel_hs_norm", "scalar"];
        if traces.is_some() {
            header.push("trace_sq");
        }
        let mut table = CsvTable::new(header);
        for s in 0..=self.timegrid.steps() {
            let mut row: Vec<CsvValue> = vec![
                self.timegrid.time(s).as_f64().into(),
                self.kernel_hs_norm_at(s).as_f64().into(),
                self.scalar_at(s).as_f64().into(),
            ];
            if let Some(tr) = &traces {
                row.push(tr[s].as_f64().into());
            }
            table.push(row);
        }
        Ok(table)
    }
}

/// `V(x, t) = ⟨S_t x, x⟩ + ∫_t^T trace(S_r Q) dr`.
pub fn value_function<T: Scalar>(sol: &RiccatiSolution<T>, q: &QCovariance<T>, x: &GridField<T>, t: T) -> Result<T> {
    let s = sol.timegrid.index_of(t)?;
    let tail = sol.trace_integral(q)?[s];
    Ok(sol.apply_at(s, x)?.inner(x)? + tail)
}

/// Optimal feedback `K_t = ℝ⁻¹𝔹*S_t`.
pub fn feedback_gain<T: Scalar>(
    sol: &RiccatiSolution<T>,
    b_op: &OperatorKps<T>,
    r_op: &OperatorKps<T>,
) -> Result<FeedbackLaw<T>> {
    sol.grid.ensure_same(&b_op.grid())?;
    sol.grid.ensure_same(&r_op.grid())?;
    if let RiccatiStorage::Modal { basis, values } = &sol.storage {
        if b_op.has_zero_kernel() && r_op.has_zero_kernel() {
            if r_op.scalar() < T::of(R_MIN) {
                return Err(Error::NotInvertible {
                    min: r_op.scalar().as_f64(),
                });
            }
            let c = b_op.scalar() / r_op.scalar();
            return Ok(FeedbackLaw::Modal {
                timegrid: sol.timegrid,
                basis: Arc::clone(basis),
                values: values.iter().map(|v| v.scale(c)).collect(),
            });
        }
    }
    let left = r_op.spectral_inverse(T::of(R_MIN))?.compose(&b_op.adjoint())?;
    let gains = (0..=sol.timegrid.steps())
        .map(|s| left.compose(&sol.s_at(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeedbackLaw::TimeVarying {
        timegrid: sol.timegrid,
        gains,
    })
}

/// Stationary gain `ℝ⁻¹𝔹*S`.
pub fn stationary_gain<T: Scalar>(
    s: &OperatorKps<T>,
    b_op: &OperatorKps<T>,
    r_op: &OperatorKps<T>,
) -> Result<FeedbackLaw<T>> {
    let k = r_op
        .spectral_inverse(T::of(R_MIN))?
        .compose(&b_op.adjoint())?
        .compose(s)?;
    Ok(FeedbackLaw::Stationary(k))
}
