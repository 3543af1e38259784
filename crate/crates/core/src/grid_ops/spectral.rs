use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{Grid, GridField, KernelMatrix, OperatorKps};
use crate::error::Result;
use crate::scalar::Scalar;

/// Eigenpairs of the kernel part of an [`OperatorKps`], as an integral
/// operator: eigenvalues of `K/n`, eigenfunctions normalised under the
/// quadrature inner product.
///
/// Eigenvalues are sorted descending. Each eigenfunction's first non-negligible
/// component is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T: Scalar> {
    grid: Grid,
    eigenvalues: Vec<T>,
    /// Column `k` holds `φ_k` at the cell midpoints.
    eigenfunctions: DMatrix<T>,
    residual_scalar: T,
}

impl<T: Scalar> SpectralDecomposition<T> {
    pub(crate) fn of(op: &OperatorKps<T>) -> Result<Self> {
        op.ensure_symmetric()?;
        let grid = op.grid();
        let n = grid.n();
        let nf = T::of_usize(n);
        let sym = op.symmetrize();
        let eig = SymmetricEigen::new(sym.kernel().entries() / nf);

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let scale = nf.sqrt();
        let mut eigenfunctions = DMatrix::zeros(n, n);
        let mut eigenvalues = Vec::with_capacity(n);
        for (k, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src) * scale;
            let cutoff = col.amax() * T::tol(1e-8);
            if let Some(first) = col.iter().find(|v| v.abs() > cutoff) {
                if *first < T::zero() {
                    col.neg_mut();
                }
            }
            eigenfunctions.set_column(k, &col);
            eigenvalues.push(eig.eigenvalues[src]);
        }

        Ok(Self {
            grid,
            eigenvalues,
            eigenfunctions,
            residual_scalar: op.scalar(),
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Kernel eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn residual_scalar(&self) -> T {
        self.residual_scalar
    }

    /// `λ_k + c` for each mode.
    pub fn spectral_values(&self) -> impl Iterator<Item = T> + '_ {
        self.eigenvalues.iter().map(move |l| *l + self.residual_scalar)
    }

    pub fn eigenfunction(&self, k: usize) -> GridField<T> {
        GridField::from_vector(self.grid, self.eigenfunctions.column(k).into_owned())
            .expect("column length equals grid size")
    }

    pub fn eigenfunction_matrix(&self) -> &DMatrix<T> {
        &self.eigenfunctions
    }

    /// Coefficients `⟨f, φ_k⟩` for every mode.
    pub fn coefficients(&self, f: &GridField<T>) -> Result<DVector<T>> {
        self.grid.ensure_same(&f.grid())?;
        Ok(self.eigenfunctions.tr_mul(f.values()) / T::of_usize(self.grid.n()))
    }

    /// `Σ_k λ_k φ_k ⊗ φ_k + c·I`.
    pub fn reconstruct(&self) -> OperatorKps<T> {
        let weights = DVector::from_column_slice(&self.eigenvalues);
        OperatorKps::new(self.outer(&weights), self.residual_scalar)
    }

    /// Spectral function `f(op)`: each mode's value `λ_k + c` goes to
    /// `f(λ_k + c)` and the identity part to `f(c)`.
    pub fn map(&self, mut f: impl FnMut(T) -> Result<T>) -> Result<OperatorKps<T>> {
        let base = f(self.residual_scalar)?;
        let mut weights = DVector::zeros(self.len());
        for (k, v) in self.spectral_values().enumerate() {
            weights[k] = f(v)? - base;
        }
        Ok(OperatorKps::new(self.outer(&weights), base))
    }

    fn outer(&self, weights: &DVector<T>) -> KernelMatrix<T> {
        let mut scaled = self.eigenfunctions.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= weights[k];
        }
        let k = scaled * self.eigenfunctions.transpose();
        KernelMatrix::new(self.grid, k).expect("square by construction")
    }

    /// Shares this eigenbasis for operators that are spectral functions of
    /// the decomposed one.
    pub fn to_modal_basis(&self) -> ModalBasis<T> {
        ModalBasis {
            grid: self.grid,
            functions: self.eigenfunctions.clone(),
        }
    }
}

/// Orthonormal eigenbasis on which operators are stored by their modal values.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis<T: Scalar> {
    grid: Grid,
    functions: DMatrix<T>,
}

/// Modal values of an operator `Σ_k (v_k − v_⊥) φ_k ⊗ φ_k + v_⊥·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalValues<T: Scalar> {
    pub modes: DVector<T>,
    pub complement: T,
}

impl<T: Scalar> ModalValues<T> {
    pub fn scale(&self, c: T) -> Self {
        Self {
            modes: &self.modes * c,
            complement: self.complement * c,
        }
    }

    pub fn max_abs(&self) -> T {
        self.modes.iter().fold(self.complement.abs(), |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> T {
        self.modes.iter().fold(self.complement, |m, v| m.min(*v))
    }
}

impl<T: Scalar> ModalBasis<T> {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.functions.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.ncols() == 0
    }

    pub fn apply(&self, values: &ModalValues<T>, f: &GridField<T>) -> Result<GridField<T>> {
        self.grid.ensure_same(&f.grid())?;
        GridField::from_vector(self.grid, self.apply_vector(values, f.values()))
    }

    pub(crate) fn apply_vector(&self, values: &ModalValues<T>, f: &DVector<T>) -> DVector<T> {
        let mut coeffs = self.functions.tr_mul(f) / T::of_usize(self.grid.n());
        for (c, v) in coeffs.iter_mut().zip(values.modes.iter()) {
            *c *= *v - values.complement;
        }
        let mut out = f * values.complement;
        out.gemv(T::one(), &self.functions, &coeffs, T::one());
        out
    }

    pub fn materialize(&self, values: &ModalValues<T>) -> OperatorKps<T> {
        let mut scaled = self.functions.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= values.modes[k] - values.complement;
        }
        let k = scaled * self.functions.transpose();
        OperatorKps::new(KernelMatrix::new(self.grid, k).expect("square"), values.complement)
    }

    /// `⟨Q φ_k, φ_k⟩` for each basis function.
    pub fn diagonal_of(&self, op: &OperatorKps<T>) -> Result<DVector<T>> {
        self.grid.ensure_same(&op.grid())?;
        let n = self.grid.n();
        let mut out = DVector::zeros(self.len());
        for k in 0..self.len() {
            let phi = self.functions.column(k).into_owned();
            let q_phi = op.apply_vector(&phi);
            out[k] = phi.dot(&q_phi) / T::of_usize(n);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_ops::hs_inner;

    fn analytic(n: usize, f: impl Fn(f64, f64) -> f64) -> OperatorKps<f64> {
        let g = Grid::new(n).unwrap();
        OperatorKps::from_kernel(KernelMatrix::from_fn(g, |i, j| f(g.midpoint(i), g.midpoint(j))))
    }

    #[test]
    fn erdos_renyi_spectrum() {
        let spec = analytic(50, |_, _| 0.5).spectral_decompose().unwrap();
        assert!((spec.eigenvalues()[0] - 0.5).abs() < 1e-12);
        assert!(spec.eigenvalues()[1..].iter().all(|l| l.abs() < 1e-12));
        let phi = spec.eigenfunction(0);
        assert!(phi.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn cosine_has_two_half_eigenvalues() {
        let spec = analytic(200, |a, b| (2.0 * std::f64::consts::PI * (a - b)).cos())
            .spectral_decompose()
            .unwrap();
        assert!((spec.eigenvalues()[0] - 0.5).abs() < 1e-3);
        assert!((spec.eigenvalues()[1] - 0.5).abs() < 1e-3);
        assert!(spec.eigenvalues()[2].abs() < 1e-10);
    }

    #[test]
    fn rank_one_profile_eigenvalue() {
        let spec = analytic(200, |a, b| (a * a - 1.0) * (b * b - 1.0))
            .spectral_decompose()
            .unwrap();
        assert!((spec.eigenvalues()[0] - 8.0 / 15.0).abs() < 1e-3);
        assert!(spec.eigenvalues()[1].abs() < 1e-10);
    }

    #[test]
    fn eigenfunctions_are_orthonormal_and_reconstruct() {
        let op = analytic(60, |a, b| 1.0 - a.max(b)).shift(0.25);
        let spec = op.spectral_decompose().unwrap();
        let phi = spec.eigenfunction_matrix();
        let gram = phi.tr_mul(phi) / 60.0;
        let dev = (gram - DMatrix::<f64>::identity(60, 60)).amax();
        assert!(dev < 1e-10, "gram deviation {dev}");
        let back = spec.reconstruct();
        assert!(back.hs_scalar_distance(&op).unwrap() < 1e-8);
    }

    #[test]
    fn uag_leading_mode_is_an_eigenfunction() {
        let op = analytic(200, |a, b| 1.0 - a.max(b));
        let spec = op.spectral_decompose().unwrap();
        let phi = spec.eigenfunction(0);
        let image = op.apply(&phi).unwrap();
        let expected = phi.scale(4.0 / std::f64::consts::PI.powi(2));
        assert!(image.sub(&expected).unwrap().l2_norm() < 1e-3);
    }

    #[test]
    fn asymmetric_kernel_is_rejected() {
        let g = Grid::new(4).unwrap();
        let op = OperatorKps::from_kernel(KernelMatrix::from_fn(g, |i, j| (i as f64) - (j as f64)));
        assert!(matches!(op.spectral_decompose(), Err(crate::Error::Asymmetric { .. })));
        assert!(op.op_norm_estimate().is_err());
    }

    #[test]
    fn modal_basis_matches_materialized_operator() {
        let op = analytic(30, |a, b| (a * b).sin() + 0.2);
        let spec = op.spectral_decompose().unwrap();
        let basis = spec.to_modal_basis();
        let values = ModalValues {
            modes: DVector::from_fn(30, |k, _| 1.0 / (k as f64 + 1.0)),
            complement: 0.3,
        };
        let dense = basis.materialize(&values);
        let f = GridField::from_fn(Grid::new(30).unwrap(), |a: f64| (5.0 * a).cos());
        let via_modes = basis.apply(&values, &f).unwrap();
        let via_dense = dense.apply(&f).unwrap();
        assert!(via_modes.sub(&via_dense).unwrap().max_abs() < 1e-12);
        let q = OperatorKps::rank_one(&f, 1.0);
        let diag = basis.diagonal_of(&q).unwrap();
        let expected = hs_inner(&dense.kernel_only(), &q).unwrap() + values.complement * q.trace(true).unwrap();
        let modal = diag
            .iter()
            .zip(values.modes.iter())
            .map(|(d, v)| d * (v - values.complement))
            .sum::<f64>()
            + values.complement * q.trace(true).unwrap();
        assert!((modal - expected).abs() < 1e-12);
    }
}
