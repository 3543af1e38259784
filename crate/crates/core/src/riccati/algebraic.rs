use crate::error::{Error, Result};
use crate::grid_ops::{hs_inner, OperatorKps};
use crate::qnoise::QCovariance;
use crate::scalar::Scalar;

/// `SA + AS − S² + M − ρS`, measured as kernel HS norm plus identity part.
fn residual<T: Scalar>(a_op: &OperatorKps<T>, m_op: &OperatorKps<T>, s: &OperatorKps<T>, rho: T) -> Result<T> {
    let sa = s.compose(a_op)?;
    let r = sa
        .add(&sa.adjoint())?
        .sub(&s.compose(s)?)?
        .add(m_op)?
        .sub(&s.scale(rho))?;
    Ok(r.kernel_hs_norm() + r.scalar().abs())
}

fn closed_form<T: Scalar>(a_op: &OperatorKps<T>, m_op: &OperatorKps<T>, rho: T) -> Result<OperatorKps<T>> {
    a_op.grid().ensure_same(&m_op.grid())?;
    a_op.ensure_symmetric()?;
    m_op.ensure_symmetric()?;
    let shifted = a_op.symmetrize().shift(-rho * T::of(0.5));
    let root = shifted
        .compose(&shifted)?
        .add(&m_op.symmetrize())?
        .symmetrize()
        .sqrt()?;
    let s = shifted.add(&root)?;
    let size = s.kernel_hs_norm() + s.scalar().abs();
    let res = residual(a_op, m_op, &s, rho)?;
    if res > T::tol(1e-8) * (T::one() + size * size) {
        return Err(Error::Consistency(format!(
            "algebraic Riccati residual {res:e} too large"
        )));
    }
    Ok(s)
}

/// `S_∞ = 𝔸 + (𝔸² + 𝕄)^{1/2}`, the stationary solution for `𝔹 = ℝ = 𝕀`.
pub fn algebraic_riccati_symmetric<T: Scalar>(a_op: &OperatorKps<T>, m_op: &OperatorKps<T>) -> Result<OperatorKps<T>> {
    closed_form(a_op, m_op, T::zero())
}

/// Discounted stationary solution `(𝔸 − ρ/2) + ((𝔸 − ρ/2)² + 𝕄)^{1/2}`.
pub fn discounted_algebraic_riccati<T: Scalar>(
    a_op: &OperatorKps<T>,
    m_op: &OperatorKps<T>,
    rho: T,
) -> Result<OperatorKps<T>> {
    if !(rho > T::zero()) {
        return Err(Error::Domain(format!("discount rate {rho} must be positive")));
    }
    closed_form(a_op, m_op, rho)
}

/// Long-range average cost `trace(S_∞ Q)`.
pub fn long_range_average_cost<T: Scalar>(s_inf: &OperatorKps<T>, q: &QCovariance<T>) -> Result<T> {
    hs_inner(s_inf, q.op())
}

/// `μ + √(μ² + 1)`: the stationary value on a unit mode of `𝔸` with spectral
/// value `μ` when `𝕄 = ℝ = 𝔹 = 𝕀`.
pub fn trace_value<T: Scalar>(mu: T) -> T {
    mu + (mu * mu + T::one()).sqrt()
}

/// An extremal unit rank-one noise covariance for `trace(S_∞ Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceExtremum<T: Scalar> {
    /// Kernel eigenvalue of `𝔸` on the chosen mode.
    pub eigenvalue: T,
    /// `trace_value(eigenvalue + a)`.
    pub value: T,
    pub covariance: QCovariance<T>,
}

fn extremum<T: Scalar>(a_op: &OperatorKps<T>, top: bool) -> Result<TraceExtremum<T>> {
    let spec = a_op.spectral_decompose()?;
    let k = if top { 0 } else { spec.len() - 1 };
    let eigenvalue = spec.eigenvalues()[k];
    Ok(TraceExtremum {
        eigenvalue,
        value: trace_value(eigenvalue + spec.residual_scalar()),
        covariance: QCovariance::rank_one(&spec.eigenfunction(k))?,
    })
}

/// Worst-case noise: unit rank-one `Q` on the top eigenfunction of `𝔸`.
pub fn worst_case_q<T: Scalar>(a_op: &OperatorKps<T>) -> Result<TraceExtremum<T>> {
    extremum(a_op, true)
}

/// Best case: unit rank-one `Q` on the bottom eigenfunction of `𝔸`.
pub fn best_case_q<T: Scalar>(a_op: &OperatorKps<T>) -> Result<TraceExtremum<T>> {
    extremum(a_op, false)
}
