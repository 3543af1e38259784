//! Discretised operator algebra on the uniform partition of `[0, 1]`.
//!
//! Every `L²[0,1]` integral uses the midpoint rule with weight `1/n`: the
//! inner product is `(1/n) Σ u_i v_i` and applying a kernel carries one factor
//! of `1/n`. Under this convention the step embedding of an adjacency matrix
//! acts exactly like `A / n`.

mod field;
mod operator;
mod spectral;

pub use field::{GridField, KernelMatrix};
pub use operator::{hs_inner, OperatorKps};
pub use spectral::{ModalBasis, ModalValues, SpectralDecomposition};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform partition of the unit interval into `n` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGrid);
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cell_width<T: Scalar>(&self) -> T {
        T::one() / T::of_usize(self.n)
    }

    /// Midpoint `(i + 1/2) / n` of cell `i` (zero-based).
    pub fn midpoint<T: Scalar>(&self, i: usize) -> T {
        T::of_usize(2 * i + 1) / T::of_usize(2 * self.n)
    }

    pub fn midpoints<T: Scalar>(&self) -> Vec<T> {
        (0..self.n).map(|i| self.midpoint(i)).collect()
    }

    /// Index of the cell containing `alpha`; the right endpoint belongs to the
    /// last cell.
    pub fn cell_of<T: Scalar>(&self, alpha: T) -> usize {
        let idx = (alpha * T::of_usize(self.n)).floor().as_f64();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.n - 1)
        }
    }

    /// Number of fine cells per coarse cell when `self` refines `coarse`.
    pub fn refinement_factor(&self, coarse: Grid) -> Option<usize> {
        self.n.is_multiple_of(coarse.n).then_some(self.n / coarse.n)
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }
}

/// Inner product under the quadrature rule.
pub fn inner_product<T: Scalar>(u: &GridField<T>, v: &GridField<T>) -> Result<T> {
    u.inner(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_grid() {
        assert_eq!(Grid::new(0), Err(Error::EmptyGrid));
    }

    #[test]
    fn midpoints_are_interior_and_increasing() {
        for n in [1, 2, 7, 64] {
            let g = Grid::new(n).unwrap();
            let m: Vec<f64> = g.midpoints();
            assert!(m.windows(2).all(|w| w[0] < w[1]));
            assert!(m[0] > 0.0 && m[n - 1] < 1.0);
            assert!((g.cell_width::<f64>() * n as f64 - 1.0).abs() < 1e-15);
        }
        let g = Grid::new(4).unwrap();
        assert_eq!(g.midpoint::<f64>(0), 0.125);
        assert_eq!(g.midpoint::<f64>(3), 0.875);
    }

    #[test]
    fn cell_lookup_covers_endpoints() {
        let g = Grid::new(10).unwrap();
        assert_eq!(g.cell_of(0.0), 0);
        assert_eq!(g.cell_of(1.0), 9);
        assert_eq!(g.cell_of(0.35), 3);
        for i in 0..10 {
            assert_eq!(g.cell_of(g.midpoint::<f64>(i)), i);
        }
    }

    #[test]
    fn midpoint_rule_integrates_linear_function() {
        let g = Grid::new(1000).unwrap();
        let one = GridField::constant(g, 1.0);
        let two_alpha = GridField::from_fn(g, |a: f64| 2.0 * a);
        let v = inner_product(&one, &two_alpha).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        assert_eq!(inner_product(&one, &one).unwrap(), 1.0);
    }
}
