use serde::{Deserialize, Serialize};

use super::TorusGrid;
use crate::error::{Error, Result};
use crate::scalar::{max_of, min_of, sup_norm, Real};

/// A point of the torus; the second coordinate is unused in 1D.
pub type Point<T> = [T; 2];

/// A gradient slot `p`; the second component is zero in 1D.
pub type VectorSample<T> = [T; 2];

#[inline]
pub fn norm<T: Real>(p: &VectorSample<T>) -> T {
    p[0].hypot(p[1])
}

/// Real values on every node of a [`TorusGrid`], stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField<T> {
    grid: TorusGrid,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(grid: TorusGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without the finiteness scan. Used on solver output
    /// that is checked elsewhere.
    pub(crate) fn from_vec_unchecked(grid: TorusGrid, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, value: T) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, T::zero())
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(Point<T>) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, flat: usize) -> T {
        self.values[flat]
    }

    #[inline]
    pub fn get(&self, idx: super::MultiIndex) -> T {
        self.values[self.grid.ravel(idx)]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sup_norm(&self) -> T {
        sup_norm(&self.values)
    }

    pub fn max(&self) -> T {
        max_of(self.values.iter().copied())
    }

    pub fn min(&self) -> T {
        min_of(self.values.iter().copied())
    }

    /// First node attaining the minimum.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    /// `sup |self - other|`; grids must match.
    pub fn sup_distance(&self, other: &Self) -> T {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    /// Subtracts the value at the anchor node so that the result vanishes there.
    pub fn anchored(&self, anchor: usize) -> Self {
        let a = self.values[anchor];
        self.map(|v| v - a)
    }

    /// Injection onto a coarser grid that `self.grid` refines.
    pub fn restrict_to(&self, coarse: &TorusGrid) -> Result<Self> {
        let f = self
            .grid
            .refinement_factor(coarse)
            .ok_or_else(|| Error::InvalidGrid("target grid is not an integer coarsening".into()))?;
        let values = (0..coarse.len())
            .map(|c| {
                let idx = coarse.unravel(c);
                self.values[self.grid.ravel([idx[0] * f, idx[1] * f])]
            })
            .collect();
        Ok(Self {
            grid: *coarse,
            values,
        })
    }
}

/// Backward and forward difference quotients at a node, with wrap.
pub fn one_sided_gradients<T: Real>(
    field: &ScalarField<T>,
    flat: usize,
) -> (VectorSample<T>, VectorSample<T>) {
    one_sided_from_slice(field.grid(), field.values(), flat)
}

#[inline]
pub(crate) fn one_sided_from_slice<T: Real>(
    grid: &TorusGrid,
    v: &[T],
    flat: usize,
) -> (VectorSample<T>, VectorSample<T>) {
    let mut pm = [T::zero(); 2];
    let mut pp = [T::zero(); 2];
    for k in 0..grid.dim() {
        let inv_h = T::of_usize(grid.count(k));
        let vi = v[flat];
        pm[k] = (vi - v[grid.shift(flat, k, -1)]) * inv_h;
        pp[k] = (v[grid.shift(flat, k, 1)] - vi) * inv_h;
    }
    (pm, pp)
}

/// Centered difference gradient at a node.
pub fn centered_gradient<T: Real>(field: &ScalarField<T>, flat: usize) -> VectorSample<T> {
    let (pm, pp) = one_sided_gradients(field, flat);
    [(pm[0] + pp[0]) * T::half(), (pm[1] + pp[1]) * T::half()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_has_zero_gradients() {
        let g = TorusGrid::square(9).unwrap();
        let f = ScalarField::constant(g, 3.5f64);
        for i in 0..g.len() {
            assert_eq!(one_sided_gradients(&f, i), ([0.0; 2], [0.0; 2]));
        }
    }

    #[test]
    fn ramp_gradients_and_seam() {
        let g = TorusGrid::line(8).unwrap();
        let f = ScalarField::from_fn(g, |x: Point<f64>| x[0]);
        let (pm, pp) = one_sided_gradients(&f, 3);
        assert!((pm[0] - 1.0).abs() < 1e-12 && (pp[0] - 1.0).abs() < 1e-12);
        // Wrap crossing at node 0: (0 - 7/8) * 8.
        let (pm, _) = one_sided_gradients(&f, 0);
        assert!((pm[0] + 7.0).abs() < 1e-12);
    }

    #[test]
    fn sawtooth_slope_away_from_seam() {
        let g = TorusGrid::new(&[16, 8]).unwrap();
        let f = ScalarField::from_fn(g, |x: Point<f64>| 3.0 * x[0] - 2.0 * x[1]);
        for i in 0..g.len() {
            let idx = g.unravel(i);
            let (pm, pp) = one_sided_gradients(&f, i);
            if idx[0] != 0 && idx[0] != 15 {
                assert!((pm[0] - 3.0).abs() < 1e-12 && (pp[0] - 3.0).abs() < 1e-12);
            }
            if idx[1] != 0 && idx[1] != 7 {
                assert!((pm[1] + 2.0).abs() < 1e-12 && (pp[1] + 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_difference_of_sine_is_first_order_accurate() {
        let g = TorusGrid::line(256).unwrap();
        let tau = std::f64::consts::TAU;
        let f = ScalarField::from_fn(g, |x: Point<f64>| (tau * x[0]).sin());
        let err = (0..g.len())
            .map(|i| {
                let (_, pp) = one_sided_gradients(&f, i);
                (pp[0] - tau * (tau * g.point::<f64>(i)[0]).cos()).abs()
            })
            .fold(0.0, f64::max);
        // Taylor remainder: h/2 * max|v''| = 4π²/512 ≈ 0.077.
        assert!(err <= 0.1, "err = {err}");
        assert!(err <= 0.5 * tau * tau / 256.0 + 1e-9);
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = TorusGrid::line(8).unwrap();
        let mut v = vec![0.0f64; 8];
        v[5] = f64::NAN;
        assert!(ScalarField::new(g, v).is_err());
        assert!(ScalarField::new(g, vec![0.0f64; 7]).is_err());
    }

    #[test]
    fn restriction_is_injection() {
        let coarse = TorusGrid::line(8).unwrap();
        let fine = coarse.refined(4).unwrap();
        let f = ScalarField::from_fn(fine, |x: Point<f64>| x[0] * x[0]);
        let r = f.restrict_to(&coarse).unwrap();
        let expected = ScalarField::from_fn(coarse, |x: Point<f64>| x[0] * x[0]);
        assert!(r.sup_distance(&expected) < 1e-15);
        assert!(f.restrict_to(&TorusGrid::line(12).unwrap()).is_err());
    }
}
