use std::sync::Arc;

use nalgebra::{Cholesky, DVector};

use super::{CostOperators, RiccatiSolution, RiccatiStorage, R_MIN};
use crate::error::{Error, Result};
use crate::grid_ops::{ModalBasis, ModalValues, OperatorKps};
use crate::qnoise::TimeGrid;
use crate::scalar::Scalar;

/// Spectral values of `S_t` may dip this far below zero before the solve fails.
const POSITIVITY_TOL: f64 = 1e-8;
/// Slack added to the uniform bound.
const BOUND_SLACK: f64 = 1e-8;
/// Stationarity threshold: HS change of `S` per unit time.
const STATIONARY_RATE: f64 = 1e-9;

/// Storage choice for the differential solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiccatiMethod {
    /// Modal when 𝔹, ℝ, 𝕄, 𝕄_T are multiples of the identity, else dense.
    #[default]
    Auto,
    Dense,
    /// Per-mode scalar equations in the eigenbasis of 𝔸.
    Modal,
}

/// The data of one Riccati equation with `G = 𝔹ℝ⁻¹𝔹*` precomputed.
#[derive(Debug, Clone)]
pub struct RiccatiProblem<T: Scalar> {
    a_op: OperatorKps<T>,
    b_op: OperatorKps<T>,
    costs: CostOperators<T>,
    g_op: OperatorKps<T>,
    a_norm: T,
    m_norm: T,
    mt_norm: T,
}

impl<T: Scalar> RiccatiProblem<T> {
    pub fn new(a_op: &OperatorKps<T>, b_op: &OperatorKps<T>, costs: &CostOperators<T>) -> Result<Self> {
        let grid = costs.grid();
        grid.ensure_same(&a_op.grid())?;
        grid.ensure_same(&b_op.grid())?;
        a_op.ensure_symmetric()?;
        b_op.ensure_symmetric()?;
        let r_inv = costs.r_op().spectral_inverse(T::of(R_MIN))?;
        let g_op = b_op.compose(&r_inv)?.compose(&b_op.adjoint())?.symmetrize();
        Ok(Self {
            a_norm: a_op.op_norm_estimate()?,
            m_norm: costs.m_op().op_norm_estimate()?,
            mt_norm: costs.mt_op().op_norm_estimate()?,
            a_op: a_op.symmetrize(),
            b_op: b_op.symmetrize(),
            costs: costs.clone(),
            g_op,
        })
    }

    pub fn a_op(&self) -> &OperatorKps<T> {
        &self.a_op
    }

    pub fn b_op(&self) -> &OperatorKps<T> {
        &self.b_op
    }

    pub fn costs(&self) -> &CostOperators<T> {
        &self.costs
    }

    /// `𝔹ℝ⁻¹𝔹*`.
    pub fn g_op(&self) -> &OperatorKps<T> {
        &self.g_op
    }

    /// Whether every operator except 𝔸 is a multiple of the identity.
    pub fn is_modal(&self) -> bool {
        self.b_op.has_zero_kernel()
            && self.costs.m_op().has_zero_kernel()
            && self.costs.mt_op().has_zero_kernel()
            && self.costs.r_op().has_zero_kernel()
    }

    /// `F(S) = 𝔸*S + S𝔸 − S G S + 𝕄`, so that `−Ṡ = F(S)`.
    pub fn rhs(&self, s: &OperatorKps<T>) -> Result<OperatorKps<T>> {
        let sa = s.compose(&self.a_op)?;
        let sgs = s.compose(&self.g_op)?.compose(s)?;
        sa.add(&sa.adjoint())?.sub(&sgs)?.add(self.costs.m_op())
    }

    /// Uniform bound on `‖S‖` at time-to-go `tau`:
    /// `(2‖𝕄_T‖ + 2τ‖𝕄‖)·exp(4τ‖𝔸‖)`.
    pub fn uniform_bound(&self, tau: T) -> T {
        let two = T::of(2.0);
        (two * self.mt_norm + two * tau * self.m_norm) * (T::of(4.0) * tau * self.a_norm).exp() + T::of(BOUND_SLACK)
    }

    fn rk4_dense(&self, s: &OperatorKps<T>, h: T) -> Result<OperatorKps<T>> {
        let half = h * T::of(0.5);
        let k1 = self.rhs(s)?;
        let k2 = self.rhs(&s.add(&k1.scale(half))?)?;
        let k3 = self.rhs(&s.add(&k2.scale(half))?)?;
        let k4 = self.rhs(&s.add(&k3.scale(h))?)?;
        let incr = k1.add(&k2.scale(T::of(2.0)))?.add(&k3.scale(T::of(2.0)))?.add(&k4)?;
        Ok(s.add(&incr.scale(h / T::of(6.0)))?.symmetrize())
    }

    fn check_dense(&self, s: &OperatorKps<T>, index: usize, tau: T) -> Result<()> {
        let tol = T::tol(POSITIVITY_TOL);
        let mut shifted = s.to_matrix();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += tol;
        }
        if Cholesky::new(shifted).is_none() {
            let min = s.min_spectral_value()?;
            if min < -tol {
                return Err(Error::Instability {
                    index,
                    eigenvalue: min.as_f64(),
                });
            }
        }
        let bound = self.uniform_bound(tau);
        // ‖K/n‖_F + |c| bounds the operator norm from above
        if s.kernel_hs_norm() + s.scalar().abs() > bound {
            let norm = s.op_norm_estimate()?;
            if norm > bound {
                return Err(Error::BoundViolation {
                    index,
                    norm: norm.as_f64(),
                    bound: bound.as_f64(),
                });
            }
        }
        Ok(())
    }

    fn solve_dense(&self, tg: TimeGrid<T>) -> Result<RiccatiSolution<T>> {
        let steps = tg.steps();
        let mut s = self.costs.mt_op().clone();
        self.check_dense(&s, steps, T::zero())?;
        let mut backward = Vec::with_capacity(steps + 1);
        backward.push(s.clone());
        for idx in (0..steps).rev() {
            s = self.rk4_dense(&s, tg.dt())?;
            self.check_dense(&s, idx, tg.horizon() - tg.time(idx))?;
            backward.push(s.clone());
        }
        backward.reverse();
        Ok(RiccatiSolution::new(
            tg,
            self.a_op.grid(),
            RiccatiStorage::Dense(backward),
        ))
    }

    fn modal_setup(&self) -> Result<ModalSetup<T>> {
        if !self.is_modal() {
            return Err(Error::Domain(
                "modal Riccati storage needs identity-only B, R, M and M_T".into(),
            ));
        }
        let spec = self.a_op.spectral_decompose()?;
        let a = spec.residual_scalar();
        Ok(ModalSetup {
            basis: Arc::new(spec.to_modal_basis()),
            mu: DVector::from_iterator(spec.len(), spec.spectral_values()),
            mu_complement: a,
            g: self.g_op.scalar(),
            m: self.costs.m_op().scalar(),
            terminal: self.costs.mt_op().scalar(),
        })
    }

    fn check_modal(&self, v: &ModalValues<T>, index: usize, tau: T) -> Result<()> {
        let min = v.min();
        if min < -T::tol(POSITIVITY_TOL) {
            return Err(Error::Instability {
                index,
                eigenvalue: min.as_f64(),
            });
        }
        let bound = self.uniform_bound(tau);
        let norm = v.max_abs();
        if norm > bound {
            return Err(Error::BoundViolation {
                index,
                norm: norm.as_f64(),
                bound: bound.as_f64(),
            });
        }
        Ok(())
    }

    fn solve_modal(&self, tg: TimeGrid<T>) -> Result<RiccatiSolution<T>> {
        let setup = self.modal_setup()?;
        let steps = tg.steps();
        let mut v = setup.terminal_values();
        self.check_modal(&v, steps, T::zero())?;
        let mut backward = Vec::with_capacity(steps + 1);
        backward.push(v.clone());
        for idx in (0..steps).rev() {
            v = setup.rk4(&v, tg.dt());
            self.check_modal(&v, idx, tg.horizon() - tg.time(idx))?;
            backward.push(v.clone());
        }
        backward.reverse();
        Ok(RiccatiSolution::new(
            tg,
            self.a_op.grid(),
            RiccatiStorage::Modal {
                basis: setup.basis,
                values: backward,
            },
        ))
    }

    pub fn solve(&self, tg: TimeGrid<T>) -> Result<RiccatiSolution<T>> {
        self.solve_with(tg, RiccatiMethod::Auto)
    }

    pub fn solve_with(&self, tg: TimeGrid<T>, method: RiccatiMethod) -> Result<RiccatiSolution<T>> {
        match method {
            RiccatiMethod::Dense => self.solve_dense(tg),
            RiccatiMethod::Modal => self.solve_modal(tg),
            RiccatiMethod::Auto if self.is_modal() => self.solve_modal(tg),
            RiccatiMethod::Auto => self.solve_dense(tg),
        }
    }

    /// Integrates backward from `𝕄_T` until `‖S(τ+dt) − S(τ)‖/dt` drops below
    /// `1e-9`, or fails once `τ` exceeds `max_horizon`.
    pub fn solve_stationary(&self, dt: T, max_horizon: T) -> Result<StationarySolution<T>> {
        let rate_tol = T::of(STATIONARY_RATE);
        let mut tau = T::zero();
        if self.is_modal() {
            let setup = self.modal_setup()?;
            let mut v = setup.terminal_values();
            while tau <= max_horizon {
                let next = setup.rk4(&v, dt);
                tau += dt;
                let dc = next.complement - v.complement;
                let hs = (&next.modes - &v.modes)
                    .iter()
                    .fold(T::zero(), |acc, x| acc + (*x - dc) * (*x - dc))
                    .sqrt();
                v = next;
                if (hs + dc.abs()) / dt < rate_tol {
                    return Ok(StationarySolution {
                        s: setup.basis.materialize(&v),
                        horizon: tau,
                    });
                }
            }
        } else {
            let mut s = self.costs.mt_op().clone();
            while tau <= max_horizon {
                let next = self.rk4_dense(&s, dt)?;
                tau += dt;
                let change = next.hs_scalar_distance(&s)?;
                s = next;
                if change / dt < rate_tol {
                    return Ok(StationarySolution { s, horizon: tau });
                }
            }
        }
        Err(Error::Consistency(format!(
            "Riccati flow not stationary after integrating to {max_horizon}"
        )))
    }
}

/// Stationary point of the backward Riccati flow.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution<T: Scalar> {
    pub s: OperatorKps<T>,
    /// Time-to-go at which stationarity was detected.
    pub horizon: T,
}

struct ModalSetup<T: Scalar> {
    basis: Arc<ModalBasis<T>>,
    mu: DVector<T>,
    mu_complement: T,
    g: T,
    m: T,
    terminal: T,
}

impl<T: Scalar> ModalSetup<T> {
    fn terminal_values(&self) -> ModalValues<T> {
        ModalValues {
            modes: DVector::from_element(self.mu.len(), self.terminal),
            complement: self.terminal,
        }
    }

    fn f(&self, mu: T, s: T) -> T {
        T::of(2.0) * mu * s - self.g * s * s + self.m
    }

    fn rk4_scalar(&self, mu: T, s: T, h: T) -> T {
        let half = h * T::of(0.5);
        let k1 = self.f(mu, s);
        let k2 = self.f(mu, s + half * k1);
        let k3 = self.f(mu, s + half * k2);
        let k4 = self.f(mu, s + h * k3);
        s + h / T::of(6.0) * (k1 + T::of(2.0) * k2 + T::of(2.0) * k3 + k4)
    }

    fn rk4(&self, v: &ModalValues<T>, h: T) -> ModalValues<T> {
        ModalValues {
            modes: DVector::from_iterator(
                self.mu.len(),
                self.mu
                    .iter()
                    .zip(v.modes.iter())
                    .map(|(mu, s)| self.rk4_scalar(*mu, *s, h)),
            ),
            complement: self.rk4_scalar(self.mu_complement, v.complement, h),
        }
    }
}

pub fn solve_differential_riccati<T: Scalar>(
    a_op: &OperatorKps<T>,
    b_op: &OperatorKps<T>,
    costs: &CostOperators<T>,
    tg: TimeGrid<T>,
) -> Result<RiccatiSolution<T>> {
    RiccatiProblem::new(a_op, b_op, costs)?.solve(tg)
}

pub fn solve_differential_riccati_with<T: Scalar>(
    a_op: &OperatorKps<T>,
    b_op: &OperatorKps<T>,
    costs: &CostOperators<T>,
    tg: TimeGrid<T>,
    method: RiccatiMethod,
) -> Result<RiccatiSolution<T>> {
    RiccatiProblem::new(a_op, b_op, costs)?.solve_with(tg, method)
}

/// Right-hand side `F(S)` of `−Ṡ = F(S)`.
pub fn riccati_rhs<T: Scalar>(
    a_op: &OperatorKps<T>,
    b_op: &OperatorKps<T>,
    costs: &CostOperators<T>,
    s: &OperatorKps<T>,
) -> Result<OperatorKps<T>> {
    RiccatiProblem::new(a_op, b_op, costs)?.rhs(s)
}

/// Stationary solution of a general infinite-horizon problem, by running the
/// backward flow to stationarity.
pub fn solve_stationary_riccati<T: Scalar>(
    a_op: &OperatorKps<T>,
    b_op: &OperatorKps<T>,
    costs: &CostOperators<T>,
    dt: T,
    max_horizon: T,
) -> Result<StationarySolution<T>> {
    RiccatiProblem::new(a_op, b_op, costs)?.solve_stationary(dt, max_horizon)
}
