use nalgebra::{DMatrix, DVector};

use super::{Grid, GridField, KernelMatrix, SpectralDecomposition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Operator `K + c·I` on `L²[0,1]`: an integral kernel plus a multiple of the
/// identity.
///
/// The identity part is carried symbolically and never folded into the
/// kernel, so trace-class violations stay detectable and the representation
/// is consistent under grid refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorKps<T: Scalar> {
    kernel: KernelMatrix<T>,
    scalar: T,
}

impl<T: Scalar> OperatorKps<T> {
    pub fn new(kernel: KernelMatrix<T>, scalar: T) -> Self {
        Self { kernel, scalar }
    }

    pub fn from_kernel(kernel: KernelMatrix<T>) -> Self {
        Self::new(kernel, T::zero())
    }

    pub fn zero(grid: Grid) -> Self {
        Self::scaled_identity(grid, T::zero())
    }

    pub fn identity(grid: Grid) -> Self {
        Self::scaled_identity(grid, T::one())
    }

    pub fn scaled_identity(grid: Grid, c: T) -> Self {
        Self::new(KernelMatrix::zeros(grid), c)
    }

    /// Rank-one kernel `weight · φ ⊗ φ`, i.e. `f ↦ weight·⟨f, φ⟩ φ`.
    pub fn rank_one(phi: &GridField<T>, weight: T) -> Self {
        let v = phi.values();
        let entries = v * v.transpose() * weight;
        Self::from_kernel(KernelMatrix::new(phi.grid(), entries).expect("square by construction"))
    }

    pub fn grid(&self) -> Grid {
        self.kernel.grid()
    }

    pub fn kernel(&self) -> &KernelMatrix<T> {
        &self.kernel
    }

    pub fn scalar(&self) -> T {
        self.scalar
    }

    pub fn has_zero_kernel(&self) -> bool {
        self.kernel.is_zero()
    }

    fn n(&self) -> T {
        T::of_usize(self.grid().n())
    }

    /// `(1/n) Σ_j K_ij f_j + c f_i`.
    pub fn apply(&self, f: &GridField<T>) -> Result<GridField<T>> {
        self.grid().ensure_same(&f.grid())?;
        GridField::from_vector(self.grid(), self.apply_vector(f.values()))
    }

    pub(crate) fn apply_vector(&self, f: &DVector<T>) -> DVector<T> {
        let mut out = f * self.scalar;
        out.gemv(T::one() / self.n(), self.kernel.entries(), f, T::one());
        out
    }

    /// `self ∘ other`; kernel `(1/n) K_a K_b + c_a K_b + c_b K_a`, scalar `c_a c_b`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.grid().ensure_same(&other.grid())?;
        let ka = self.kernel.entries();
        let kb = other.kernel.entries();
        let mut k = kb * self.scalar + ka * other.scalar;
        k.gemm(T::one() / self.n(), ka, kb, T::one());
        Ok(Self::new(
            KernelMatrix::new(self.grid(), k)?,
            self.scalar * other.scalar,
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid().ensure_same(&other.grid())?;
        Ok(Self::new(
            KernelMatrix::new(self.grid(), self.kernel.entries() + other.kernel.entries())?,
            self.scalar + other.scalar,
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-T::one()))
    }

    pub fn scale(&self, c: T) -> Self {
        Self::new(
            KernelMatrix::new(self.grid(), self.kernel.entries() * c).expect("shape preserved"),
            self.scalar * c,
        )
    }

    /// `self + c·I`.
    pub fn shift(&self, c: T) -> Self {
        Self::new(self.kernel.clone(), self.scalar + c)
    }

    pub fn kernel_only(&self) -> Self {
        Self::from_kernel(self.kernel.clone())
    }

    pub fn adjoint(&self) -> Self {
        Self::new(
            KernelMatrix::new(self.grid(), self.kernel.entries().transpose()).expect("square"),
            self.scalar,
        )
    }

    /// `(self + self*) / 2`.
    pub fn symmetrize(&self) -> Self {
        let k = self.kernel.entries();
        let half = T::of(0.5);
        Self::new(
            KernelMatrix::new(self.grid(), (k + k.transpose()) * half).expect("square"),
            self.scalar,
        )
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.kernel.asymmetry() <= tol
    }

    pub(crate) fn ensure_symmetric(&self) -> Result<()> {
        let deviation = self.kernel.asymmetry();
        if deviation > T::tol(1e-9) {
            return Err(Error::Asymmetric {
                deviation: deviation.as_f64(),
            });
        }
        Ok(())
    }

    /// Dense `n × n` matrix of the operator acting on cell values.
    pub fn to_matrix(&self) -> DMatrix<T> {
        let n = self.grid().n();
        let mut m = self.kernel.entries() / self.n();
        for i in 0..n {
            m[(i, i)] += self.scalar;
        }
        m
    }

    /// Kernel trace `(1/n) Σ K_ii`. With `trace_class_only` a nonzero identity
    /// part is an error; otherwise it is ignored.
    pub fn trace(&self, trace_class_only: bool) -> Result<T> {
        if trace_class_only && self.scalar != T::zero() {
            return Err(Error::NotTraceClass {
                scalar: self.scalar.as_f64(),
            });
        }
        Ok(self.kernel.entries().trace() / self.n())
    }

    pub(crate) fn kernel_trace(&self) -> T {
        self.kernel.entries().trace() / self.n()
    }

    /// Hilbert–Schmidt norm `√∬K²` of a pure kernel operator.
    pub fn hs_norm(&self) -> Result<T> {
        if self.scalar != T::zero() {
            return Err(Error::NotTraceClass {
                scalar: self.scalar.as_f64(),
            });
        }
        Ok(self.kernel_hs_norm())
    }

    /// HS norm of the kernel part, ignoring any identity part.
    pub fn kernel_hs_norm(&self) -> T {
        self.kernel.entries().norm() / self.n()
    }

    /// HS distance of the kernels plus the distance of the identity parts.
    pub fn hs_scalar_distance(&self, other: &Self) -> Result<T> {
        let d = self.sub(other)?;
        Ok(d.kernel_hs_norm() + d.scalar.abs())
    }

    pub fn spectral_decompose(&self) -> Result<SpectralDecomposition<T>> {
        SpectralDecomposition::of(self)
    }

    /// `max_k |λ_k + c|`.
    pub fn op_norm_estimate(&self) -> Result<T> {
        let spec = self.spectral_decompose()?;
        Ok(spec.spectral_values().fold(self.scalar.abs(), |m, v| m.max(v.abs())))
    }

    /// Positive square root through the spectral decomposition. Spectral
    /// values down to `-1e-10` are treated as rounding and clamped to zero.
    pub fn sqrt(&self) -> Result<Self> {
        let tol = T::tol(1e-10);
        self.spectral_decompose()?.map(|v| {
            if v < -tol {
                Err(Error::NegativeSpectrum { eigenvalue: v.as_f64() })
            } else {
                Ok(v.max(T::zero()).sqrt())
            }
        })
    }

    /// Inverse through the spectral decomposition; every spectral value,
    /// including the identity part, must be at least `min_spectrum`.
    pub fn spectral_inverse(&self, min_spectrum: T) -> Result<Self> {
        self.spectral_decompose()?.map(|v| {
            if v < min_spectrum {
                Err(Error::NotInvertible { min: v.as_f64() })
            } else {
                Ok(T::one() / v)
            }
        })
    }

    /// Smallest spectral value, including the identity part on its own.
    pub fn min_spectral_value(&self) -> Result<T> {
        let spec = self.spectral_decompose()?;
        Ok(spec.spectral_values().fold(self.scalar, |m, v| m.min(v)))
    }
}

/// Hilbert–Schmidt inner product `trace(a ∘ b)`. At least one operand must be
/// trace-class (zero identity part).
pub fn hs_inner<T: Scalar>(a: &OperatorKps<T>, b: &OperatorKps<T>) -> Result<T> {
    a.grid().ensure_same(&b.grid())?;
    if a.scalar != T::zero() && b.scalar != T::zero() {
        return Err(Error::NotTraceClass {
            scalar: a.scalar.as_f64(),
        });
    }
    let n = a.n();
    let ka = a.kernel.entries();
    let kb = b.kernel.entries();
    // Σ_ij Ka_ij Kb_ji = ⟨Ka, Kb^T⟩_F
    let cross = ka.zip_fold(&kb.transpose(), T::zero(), |acc, x, y| acc + x * y) / (n * n);
    Ok(cross + a.scalar * b.kernel_trace() + b.scalar * a.kernel_trace())
}
