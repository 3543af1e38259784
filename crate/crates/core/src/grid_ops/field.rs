use nalgebra::{DMatrix, DVector};

use super::Grid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Piecewise-constant function on a [`Grid`]: one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T: Scalar> {
    grid: Grid,
    values: DVector<T>,
}

impl<T: Scalar> GridField<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> Result<Self> {
        Self::from_vector(grid, DVector::from_vec(values))
    }

    pub fn from_vector(grid: Grid, values: DVector<T>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::Length {
                expected: grid.n(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: Grid, c: T) -> Self {
        Self {
            grid,
            values: DVector::from_element(grid.n(), c),
        }
    }

    /// Samples `f` at the cell midpoints.
    pub fn from_fn(grid: Grid, f: impl Fn(T) -> T) -> Self {
        let values = DVector::from_iterator(grid.n(), (0..grid.n()).map(|i| f(grid.midpoint(i))));
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DVector<T> {
        &mut self.values
    }

    pub fn into_vector(self) -> DVector<T> {
        self.values
    }

    pub fn as_slice(&self) -> &[T] {
        self.values.as_slice()
    }

    pub fn inner(&self, other: &Self) -> Result<T> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self.values.dot(&other.values) / T::of_usize(self.grid.n()))
    }

    pub fn l2_norm(&self) -> T {
        (self.values.norm_squared() / T::of_usize(self.grid.n())).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: &self.values + &other.values,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: &self.values - &other.values,
        })
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            grid: self.grid,
            values: &self.values * c,
        }
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: T, other: &Self) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        self.values.axpy(c, &other.values, T::one());
        Ok(())
    }

    /// Piecewise-constant prolongation onto a finer grid whose cell count is a
    /// multiple of this one.
    pub fn refine(&self, fine: Grid) -> Result<Self> {
        let factor = fine
            .refinement_factor(self.grid)
            .ok_or_else(|| Error::Domain(format!("{} cells do not refine {} cells", fine.n(), self.grid.n())))?;
        let values = DVector::from_iterator(fine.n(), (0..fine.n()).map(|i| self.values[i / factor]));
        Ok(Self { grid: fine, values })
    }

    /// Cell averages onto a coarser grid (the `L²` projection onto coarse
    /// step functions).
    pub fn coarsen(&self, coarse: Grid) -> Result<Self> {
        let factor = self.grid.refinement_factor(coarse).ok_or_else(|| {
            Error::Domain(format!(
                "{} cells do not coarsen to {} cells",
                self.grid.n(),
                coarse.n()
            ))
        })?;
        let w = T::of_usize(factor);
        let values = DVector::from_iterator(
            coarse.n(),
            (0..coarse.n()).map(|c| (0..factor).fold(T::zero(), |acc, k| acc + self.values[c * factor + k]) / w),
        );
        Ok(Self { grid: coarse, values })
    }
}

/// Kernel values `K_ij` on cell pairs `(P_i, P_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<T: Scalar> {
    grid: Grid,
    entries: DMatrix<T>,
}

impl<T: Scalar> KernelMatrix<T> {
    pub fn new(grid: Grid, entries: DMatrix<T>) -> Result<Self> {
        if entries.nrows() != grid.n() || entries.ncols() != grid.n() {
            return Err(Error::Length {
                expected: grid.n() * grid.n(),
                got: entries.nrows() * entries.ncols(),
            });
        }
        Ok(Self { grid, entries })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            entries: DMatrix::zeros(grid.n(), grid.n()),
        }
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(usize, usize) -> T) -> Self {
        Self {
            grid,
            entries: DMatrix::from_fn(grid.n(), grid.n(), f),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<T> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[(i, j)]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|v| *v == T::zero())
    }

    /// Largest `|K_ij - K_ji|`.
    pub fn asymmetry(&self) -> T {
        let n = self.grid.n();
        let mut worst = T::zero();
        for j in 0..n {
            for i in (j + 1)..n {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .entries
            .iter()
            .zip(other.entries.iter())
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_is_checked() {
        let g = Grid::new(3).unwrap();
        assert!(matches!(
            GridField::new(g, vec![1.0, 2.0]),
            Err(Error::Length { expected: 3, got: 2 })
        ));
        assert!(KernelMatrix::new(g, DMatrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn field_arithmetic_rejects_grid_mismatch() {
        let a = GridField::<f64>::zeros(Grid::new(3).unwrap());
        let b = GridField::<f64>::zeros(Grid::new(4).unwrap());
        assert_eq!(a.inner(&b), Err(Error::GridMismatch { left: 3, right: 4 }));
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn refine_then_coarsen_is_identity() {
        let coarse = Grid::new(5).unwrap();
        let fine = Grid::new(20).unwrap();
        let f = GridField::from_fn(coarse, |a: f64| a * a - 0.3);
        let back = f.refine(fine).unwrap().coarsen(coarse).unwrap();
        assert!((back.sub(&f).unwrap()).max_abs() < 1e-15);
        // refinement preserves the L2 norm of step functions
        assert!((f.refine(fine).unwrap().l2_norm() - f.l2_norm()).abs() < 1e-14);
        assert!(f.refine(Grid::new(7).unwrap()).is_err());
    }

    #[test]
    fn asymmetry_measures_largest_mismatch() {
        let g = Grid::new(3).unwrap();
        let k = KernelMatrix::from_fn(g, |i, j| if (i, j) == (0, 2) { 1.5 } else { 1.0 });
        assert_eq!(k.asymmetry(), 0.5);
    }
}
