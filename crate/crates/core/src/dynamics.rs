//! Controlled linear Q-noise systems `dx = (𝔸x + 𝔹u)dt + dw`: Euler–Maruyama
//! simulation, the deterministic mild solution and trajectory metrics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid_ops::{Grid, GridField, ModalBasis, ModalValues, OperatorKps};
use crate::qnoise::{QCovariance, QNoisePath, TimeGrid};
use crate::scalar::Scalar;
use crate::table::{CsvTable, CsvValue};

/// States beyond this magnitude abort a simulation.
pub const DIVERGENCE_BOUND: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<T: Scalar> {
    a_op: OperatorKps<T>,
    b_op: OperatorKps<T>,
    q: QCovariance<T>,
}

impl<T: Scalar> LinearSystem<T> {
    pub fn new(a_op: OperatorKps<T>, b_op: OperatorKps<T>, q: QCovariance<T>) -> Result<Self> {
        a_op.grid().ensure_same(&b_op.grid())?;
        a_op.grid().ensure_same(&q.grid())?;
        a_op.ensure_symmetric()?;
        b_op.ensure_symmetric()?;
        Ok(Self { a_op, b_op, q })
    }

    pub fn grid(&self) -> Grid {
        self.a_op.grid()
    }

    pub fn a_op(&self) -> &OperatorKps<T> {
        &self.a_op
    }

    pub fn b_op(&self) -> &OperatorKps<T> {
        &self.b_op
    }

    pub fn q(&self) -> &QCovariance<T> {
        &self.q
    }
}

/// Linear state feedback `u_t = −K_t x_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackLaw<T: Scalar> {
    Zero,
    Stationary(OperatorKps<T>),
    /// One gain per time-grid point; step `s` uses the gain at `t_s`.
    TimeVarying {
        timegrid: TimeGrid<T>,
        gains: Vec<OperatorKps<T>>,
    },
    /// Gains that are spectral functions of one eigenbasis, stored by their
    /// modal values.
    Modal {
        timegrid: TimeGrid<T>,
        basis: Arc<ModalBasis<T>>,
        values: Vec<ModalValues<T>>,
    },
}

impl<T: Scalar> FeedbackLaw<T> {
    fn check(&self, grid: Grid, tg: &TimeGrid<T>) -> Result<()> {
        let covers = |own: &TimeGrid<T>, len: usize| -> Result<()> {
            let same_dt = (own.dt() - tg.dt()).abs() <= T::tol(1e-12) * tg.dt();
            if !same_dt || own.steps() < tg.steps() || len < tg.steps() {
                return Err(Error::TimeGrid(
                    "feedback gains do not cover the simulation grid".into(),
                ));
            }
            Ok(())
        };
        match self {
            Self::Zero => Ok(()),
            Self::Stationary(k) => grid.ensure_same(&k.grid()),
            Self::TimeVarying { timegrid, gains } => {
                covers(timegrid, gains.len())?;
                gains.iter().try_for_each(|k| grid.ensure_same(&k.grid()))
            }
            Self::Modal {
                timegrid,
                basis,
                values,
            } => {
                covers(timegrid, values.len())?;
                grid.ensure_same(&basis.grid())
            }
        }
    }

    fn gain_times(&self, s: usize, x: &DVector<T>) -> Option<DVector<T>> {
        match self {
            Self::Zero => None,
            Self::Stationary(k) => Some(k.apply_vector(x)),
            Self::TimeVarying { gains, .. } => Some(gains[s].apply_vector(x)),
            Self::Modal { basis, values, .. } => Some(basis.apply_vector(&values[s], x)),
        }
    }

    /// Control `−K_{t_s} x` at step `s`.
    pub fn control(&self, s: usize, x: &GridField<T>) -> GridField<T> {
        let v = self
            .gain_times(s, x.values())
            .map(|v| -v)
            .unwrap_or_else(|| DVector::zeros(x.grid().n()));
        GridField::from_vector(x.grid(), v).expect("gain preserves the grid")
    }
}

/// States at every grid time and the controls applied on each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    timegrid: TimeGrid<T>,
    grid: Grid,
    /// Row `s` is `x_{t_s}`.
    states: DMatrix<T>,
    /// Row `s` is `u_{t_s}`.
    controls: DMatrix<T>,
    seed: Option<u64>,
}

/// Euler–Maruyama: `x_{s+1} = x_s + dt(𝔸x_s + 𝔹u_s) + Δw_s` with
/// `u_s = −K_{t_s} x_s`.
pub fn simulate<T: Scalar>(
    sys: &LinearSystem<T>,
    law: &FeedbackLaw<T>,
    x0: &GridField<T>,
    tg: TimeGrid<T>,
    noise: &QNoisePath<T>,
) -> Result<Trajectory<T>> {
    let grid = sys.grid();
    grid.ensure_same(&x0.grid())?;
    grid.ensure_same(&noise.grid())?;
    if noise.timegrid() != tg {
        return Err(Error::TimeGrid("noise path uses a different time grid".into()));
    }
    law.check(grid, &tg)?;

    let n = grid.n();
    let steps = tg.steps();
    let dt = tg.dt();
    let bound = T::of(DIVERGENCE_BOUND);
    let mut states = DMatrix::zeros(steps + 1, n);
    let mut controls = DMatrix::zeros(steps, n);
    let mut x = x0.values().clone();
    states.set_row(0, &x.transpose());
    for s in 0..steps {
        let mut drift = sys.a_op.apply_vector(&x);
        if let Some(kx) = law.gain_times(s, &x) {
            let u = -kx;
            drift += sys.b_op.apply_vector(&u);
            controls.set_row(s, &u.transpose());
        }
        x.axpy(dt, &drift, T::one());
        x += noise.increments().row(s).transpose();
        if x.iter().any(|v| !v.is_finite() || v.abs() > bound) {
            return Err(Error::Divergence { step: s + 1 });
        }
        states.set_row(s + 1, &x.transpose());
    }
    Ok(Trajectory {
        timegrid: tg,
        grid,
        states,
        controls,
        seed: noise.seed(),
    })
}

impl<T: Scalar> Trajectory<T> {
    /// States are `(steps + 1) × n`, controls `steps × n`.
    pub fn from_parts(
        timegrid: TimeGrid<T>,
        grid: Grid,
        states: DMatrix<T>,
        controls: DMatrix<T>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let steps = timegrid.steps();
        if states.nrows() != steps + 1 || controls.nrows() != steps {
            return Err(Error::Length {
                expected: steps + 1,
                got: states.nrows(),
            });
        }
        if states.ncols() != grid.n() || controls.ncols() != grid.n() {
            return Err(Error::Length {
                expected: grid.n(),
                got: states.ncols().min(controls.ncols()),
            });
        }
        Ok(Self {
            timegrid,
            grid,
            states,
            controls,
            seed,
        })
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

    pub fn states(&self) -> &DMatrix<T> {
        &self.states
    }

    pub fn controls(&self) -> &DMatrix<T> {
        &self.controls
    }

    pub fn state(&self, s: usize) -> GridField<T> {
        GridField::from_vector(self.grid, self.states.row(s).transpose()).expect("row length")
    }

    pub fn control(&self, s: usize) -> GridField<T> {
        GridField::from_vector(self.grid, self.controls.row(s).transpose()).expect("row length")
    }

    pub fn final_state(&self) -> GridField<T> {
        self.state(self.timegrid.steps())
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|v| v.is_finite())
    }

    /// `rmd(x_t, y_t)` at every grid time.
    pub fn rmd_series(&self, other: &Self) -> Result<Vec<T>> {
        self.grid.ensure_same(&other.grid)?;
        if self.timegrid.steps() != other.timegrid.steps() {
            return Err(Error::TimeGrid("trajectories have different lengths".into()));
        }
        let n = T::of_usize(self.grid.n());
        Ok((0..=self.timegrid.steps())
            .map(|s| {
                let d = self.states.row(s) - other.states.row(s);
                (d.norm_squared() / n).sqrt()
            })
            .collect())
    }

    fn wide(&self, rows: &DMatrix<T>) -> CsvTable {
        let mids: Vec<f64> = self.grid.midpoints();
        let mut header = vec!["t".to_string()];
        header.extend(mids.iter().map(|m| format!("{m}")));
        let mut table = CsvTable::new(header);
        for s in 0..rows.nrows() {
            let mut row = vec![CsvValue::Float(self.timegrid.time(s).as_f64())];
            row.extend(rows.row(s).iter().map(|v| CsvValue::Float(v.as_f64())));
            table.push(row);
        }
        table
    }

    /// Rows are times, columns cell midpoints.
    pub fn state_table(&self) -> CsvTable {
        self.wide(&self.states)
    }

    pub fn control_table(&self) -> CsvTable {
        self.wide(&self.controls)
    }

    /// Long format `t, alpha, value` of the states.
    pub fn long_table(&self) -> CsvTable {
        self.long_table_every(1)
    }

    /// [`Self::long_table`] restricted to every `every`-th time and the last.
    pub fn long_table_every(&self, every: usize) -> CsvTable {
        let mids: Vec<f64> = self.grid.midpoints();
        let mut table = CsvTable::new(["t", "alpha", "value"]);
        let last = self.states.nrows() - 1;
        let every = every.max(1);
        for s in (0..=last).filter(|s| s % every == 0 || *s == last) {
            let t = self.timegrid.time(s).as_f64();
            for (i, m) in mids.iter().enumerate() {
                table.push(vec![t.into(), (*m).into(), self.states[(s, i)].as_f64().into()]);
            }
        }
        table
    }
}

/// `e^{𝔸t} x0`, evaluated mode by mode in the eigenbasis of 𝔸; the part of
/// `x0` orthogonal to every mode evolves with the identity part alone.
pub fn mild_solution_deterministic<T: Scalar>(sys: &LinearSystem<T>, x0: &GridField<T>, t: T) -> Result<GridField<T>> {
    let spec = sys.a_op.spectral_decompose()?;
    let a = spec.residual_scalar();
    let coeffs = spec.coefficients(x0)?;
    let phi = spec.eigenfunction_matrix();
    let base = (a * t).exp();
    let mut out = x0.values() * base;
    let weights = DVector::from_iterator(
        coeffs.len(),
        spec.spectral_values()
            .zip(coeffs.iter())
            .map(|(v, c)| ((v * t).exp() - base) * *c),
    );
    out.gemv(T::one(), phi, &weights, T::one());
    GridField::from_vector(x0.grid(), out)
}

/// Root mean square distance `√⟨x−y, x−y⟩`.
pub fn rmd<T: Scalar>(x: &GridField<T>, y: &GridField<T>) -> Result<T> {
    Ok(x.sub(y)?.l2_norm())
}

/// Left-point quadratic cost `Σ_s dt(⟨𝕄x_s,x_s⟩ + ⟨ℝu_s,u_s⟩) + ⟨𝕄_T x_T, x_T⟩`.
pub fn quadratic_cost<T: Scalar>(
    traj: &Trajectory<T>,
    m: &OperatorKps<T>,
    r: &OperatorKps<T>,
    mt: &OperatorKps<T>,
) -> Result<T> {
    let grid = traj.grid;
    grid.ensure_same(&m.grid())?;
    grid.ensure_same(&r.grid())?;
    grid.ensure_same(&mt.grid())?;
    let n = T::of_usize(grid.n());
    let form = |op: &OperatorKps<T>, v: DVector<T>| op.apply_vector(&v).dot(&v) / n;
    let steps = traj.timegrid.steps();
    let mut running = T::zero();
    for s in 0..steps {
        running += form(m, traj.states.row(s).transpose()) + form(r, traj.controls.row(s).transpose());
    }
    Ok(running * traj.timegrid.dt() + form(mt, traj.states.row(steps).transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::GraphonKernel;
    use crate::qnoise::sample_path;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    fn scalar_system(n: usize, a: f64, b: f64) -> LinearSystem<f64> {
        let g = grid(n);
        LinearSystem::new(
            OperatorKps::scaled_identity(g, a),
            OperatorKps::scaled_identity(g, b),
            QCovariance::zero(g),
        )
        .unwrap()
    }

    #[test]
    fn frozen_system_stays_put() {
        let sys = scalar_system(6, 0.0, 0.0);
        let tg = TimeGrid::new(1.0, 0.01).unwrap();
        let x0 = GridField::from_fn(grid(6), |a: f64| a.sin());
        let traj = simulate(&sys, &FeedbackLaw::Zero, &x0, tg, &QNoisePath::zeros(tg, grid(6))).unwrap();
        assert_eq!(traj.final_state(), x0);
        assert_eq!(traj.states().nrows(), 101);
    }

    #[test]
    fn scalar_growth_matches_exponential() {
        let sys = scalar_system(3, 0.1, 0.0);
        let tg = TimeGrid::new(1.0, 0.001).unwrap();
        let x0 = GridField::constant(grid(3), 1.0);
        let traj = simulate(&sys, &FeedbackLaw::Zero, &x0, tg, &QNoisePath::zeros(tg, grid(3))).unwrap();
        let xt = traj.final_state().values()[0];
        assert!((xt - 1.0001f64.powi(1000)).abs() < 1e-12);
        assert!((xt - 0.1f64.exp()).abs() < 1e-4);
    }

    #[test]
    fn mild_solution_examples() {
        let g = grid(20);
        let er = GraphonKernel::Constant(0.5).discretize(g).shift(0.1);
        let sys = LinearSystem::new(er, OperatorKps::zero(g), QCovariance::zero(g)).unwrap();
        let x0 = GridField::constant(g, 1.0);
        let x1 = mild_solution_deterministic(&sys, &x0, 1.0).unwrap();
        assert!(x1.values().iter().all(|v| (v - 0.6f64.exp()).abs() < 1e-12));
        let y0 = GridField::from_fn(g, |a: f64| a * a);
        let same = mild_solution_deterministic(&sys, &y0, 0.0).unwrap();
        assert!(same.sub(&y0).unwrap().max_abs() < 1e-12);

        let scalar = scalar_system(20, -0.3, 0.0);
        let z = mild_solution_deterministic(&scalar, &y0, 2.0).unwrap();
        assert!(z.sub(&y0.scale((-0.6f64).exp())).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn rmd_examples() {
        let g = grid(1000);
        let one = GridField::constant(g, 1.0);
        assert_eq!(rmd(&one, &one).unwrap(), 0.0);
        assert_eq!(rmd(&one, &GridField::zeros(g)).unwrap(), 1.0);
        let three = GridField::constant(g, 3.0);
        let y = GridField::from_fn(g, |a: f64| 1.0 + 2.0 * a);
        assert!((rmd(&three, &y).unwrap() - 2.0 / 3f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn divergence_is_reported() {
        let sys = scalar_system(2, 50.0, 0.0);
        let tg = TimeGrid::new(1.0, 0.01).unwrap();
        let x0 = GridField::constant(grid(2), 1.0);
        let err = simulate(&sys, &FeedbackLaw::Zero, &x0, tg, &QNoisePath::zeros(tg, grid(2)));
        assert!(matches!(err, Err(Error::Divergence { .. })));
    }

    #[test]
    fn mismatched_gain_grid_is_rejected() {
        let sys = scalar_system(4, 0.0, 1.0);
        let short = TimeGrid::new(0.5, 0.01).unwrap();
        let tg = TimeGrid::new(1.0, 0.01).unwrap();
        let law = FeedbackLaw::TimeVarying {
            timegrid: short,
            gains: vec![OperatorKps::identity(grid(4)); 51],
        };
        let x0 = GridField::constant(grid(4), 1.0);
        assert!(matches!(
            simulate(&sys, &law, &x0, tg, &QNoisePath::zeros(tg, grid(4))),
            Err(Error::TimeGrid(_))
        ));
    }

    #[test]
    fn noise_driven_state_is_spatially_smooth() {
        // cosine coupling with UAG-correlated noise, as in the motivating example
        let g = grid(300);
        let q = QCovariance::new(&GraphonKernel::<f64>::UniformAttachment.discretize(g)).unwrap();
        let sys = LinearSystem::new(
            GraphonKernel::<f64>::Cosine.discretize(g),
            OperatorKps::zero(g),
            q.clone(),
        )
        .unwrap();
        let tg = TimeGrid::new(1.0, 0.001).unwrap();
        let x0 = GridField::constant(g, 1.0);
        let traj = simulate(&sys, &FeedbackLaw::Zero, &x0, tg, &sample_path(&q, tg, 9)).unwrap();
        let amplitude = (q.eigenvalues()[0] * tg.horizon()).sqrt();
        let xt = traj.final_state();
        let v = xt.as_slice();
        let jump = v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(jump < 5.0 * amplitude, "jump {jump} vs amplitude {amplitude}");

        let rough_q = QCovariance::independent_nodes(g, q.trace()).unwrap();
        let rough_sys = LinearSystem::new(sys.a_op().clone(), OperatorKps::zero(g), rough_q.clone()).unwrap();
        let rough = simulate(&rough_sys, &FeedbackLaw::Zero, &x0, tg, &sample_path(&rough_q, tg, 9)).unwrap();
        let rv = rough.final_state();
        let rjump = rv
            .as_slice()
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        assert!(rjump > 5.0 * jump);
    }
}
