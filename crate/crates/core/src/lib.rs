//! Linear-quadratic-Gaussian control of graphon systems driven by Q-noise.
//!
//! States and controls are functions on `[0, 1]`, discretised as
//! piecewise-constant fields on a uniform grid. Network couplings are
//! integral operators with graphon kernels, stored as [`OperatorKps`]
//! (kernel plus identity). The crate covers:
//!
//! * [`grid_ops`]: quadrature operator algebra, spectral functions, traces and norms;
//! * [`graphon`]: analytic graphons, W-random graph sampling, step embedding;
//! * [`qnoise`]: Q-noise covariances, Karhunen–Loève path sampling, statistics;
//! * [`dynamics`]: Euler–Maruyama simulation and mild-solution checks;
//! * [`riccati`]: differential and algebraic operator Riccati solutions;
//! * [`lowrank`]: invariant-subspace reduction of low-rank problems;
//! * [`experiments`]: seeded reproductions producing CSV reports.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to the common choices.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod graphon;
pub mod grid_ops;
pub mod lowrank;
pub mod qnoise;
pub mod riccati;
pub mod rng;
pub mod scalar;
pub mod table;

pub use error::{Error, Result};
pub use grid_ops::{hs_inner, inner_product, Grid, GridField, KernelMatrix, OperatorKps};
pub use scalar::Scalar;

pub type Field = GridField<f64>;
pub type Kernel = KernelMatrix<f64>;
pub type Operator = OperatorKps<f64>;
pub type Graphon = graphon::GraphonKernel<f64>;
pub type Covariance = qnoise::QCovariance<f64>;
pub type NoisePath = qnoise::QNoisePath<f64>;
pub type Times = qnoise::TimeGrid<f64>;
pub type System = dynamics::LinearSystem<f64>;
pub type Path = dynamics::Trajectory<f64>;
pub type Riccati = riccati::RiccatiSolution<f64>;

pub type Field32 = GridField<f32>;
pub type Operator32 = OperatorKps<f32>;
pub type Graphon32 = graphon::GraphonKernel<f32>;
