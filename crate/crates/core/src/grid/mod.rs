//! Periodic lattice geometry on the flat torus `[0,1)^d`, `d ∈ {1, 2}`.
//!
//! Nodes are addressed either by a multi-index `[i0, i1]` (with `i1 = 0` in
//! one dimension) or by the row-major flat index `i0 * n1 + i1`. All index
//! arithmetic wraps; the lattice has no boundary.

pub(crate) mod field;
pub mod io;
mod stencil;

pub use field::{centered_gradient, norm, one_sided_gradients, Point, ScalarField, VectorSample};
pub use stencil::{diffusion_term, DiffusionOperator, StencilRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest admissible number of cells per axis.
pub const MIN_CELLS: usize = 8;

pub type MultiIndex = [usize; 2];

/// Uniform periodic lattice with `counts[k]` cells on axis `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct TorusGrid {
    dim: usize,
    counts: [usize; 2],
}

/// Serialized form `{dim, counts}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub counts: Vec<usize>,
}

impl TryFrom<GridSpec> for TorusGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        if spec.counts.len() != spec.dim {
            return Err(Error::InvalidGrid(format!(
                "dim {} does not match {} axis counts",
                spec.dim,
                spec.counts.len()
            )));
        }
        TorusGrid::new(&spec.counts)
    }
}

impl From<TorusGrid> for GridSpec {
    fn from(g: TorusGrid) -> Self {
        GridSpec {
            dim: g.dim,
            counts: g.counts().to_vec(),
        }
    }
}

impl TorusGrid {
    pub fn new(counts: &[usize]) -> Result<Self> {
        match counts {
            [n] => Self::checked(1, [*n, 1]),
            [n0, n1] => Self::checked(2, [*n0, *n1]),
            _ => Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                counts.len()
            ))),
        }
    }

    fn checked(dim: usize, counts: [usize; 2]) -> Result<Self> {
        for &n in &counts[..dim] {
            if n < MIN_CELLS {
                return Err(Error::InvalidGrid(format!(
                    "each axis needs at least {MIN_CELLS} cells, got {n}"
                )));
            }
        }
        Ok(Self { dim, counts })
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(&[n])
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(&[n, n])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    #[inline]
    pub fn count(&self, axis: usize) -> usize {
        self.counts[axis]
    }

    /// Total number of nodes.
    #[inline]
    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing<T: Real>(&self, axis: usize) -> T {
        T::one() / T::of_usize(self.counts[axis])
    }

    /// Smallest spacing over the active axes.
    pub fn min_spacing<T: Real>(&self) -> T {
        (0..self.dim)
            .map(|k| self.spacing::<T>(k))
            .fold(T::infinity(), T::min)
    }

    #[inline]
    pub fn ravel(&self, idx: MultiIndex) -> usize {
        (idx[0] % self.counts[0]) * self.counts[1] + idx[1] % self.counts[1]
    }

    #[inline]
    pub fn unravel(&self, flat: usize) -> MultiIndex {
        [flat / self.counts[1], flat % self.counts[1]]
    }

    /// Flat index of the node `offset` cells away along `axis`, wrapping.
    #[inline]
    pub fn shift(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let mut idx = self.unravel(flat);
        let n = self.counts[axis] as isize;
        idx[axis] = (idx[axis] as isize + offset).rem_euclid(n) as usize;
        self.ravel(idx)
    }

    /// Coordinates of a node in `[0,1)^2` (second coordinate zero in 1D).
    #[inline]
    pub fn point<T: Real>(&self, flat: usize) -> Point<T> {
        let idx = self.unravel(flat);
        let mut x = [T::zero(); 2];
        for k in 0..self.dim {
            x[k] = T::of_usize(idx[k]) * self.spacing::<T>(k);
        }
        x
    }

    /// Number of cells between two indices along `axis`, the short way round.
    #[inline]
    pub fn wrapped_offset(&self, i: usize, j: usize, axis: usize) -> usize {
        let n = self.counts[axis];
        let d = i.abs_diff(j) % n;
        d.min(n - d)
    }

    /// Flat-torus distance between two lattice points.
    pub fn periodic_distance<T: Real>(&self, i: MultiIndex, j: MultiIndex) -> T {
        let mut s = T::zero();
        for k in 0..self.dim {
            let cells = self.wrapped_offset(i[k] % self.counts[k], j[k] % self.counts[k], k);
            let dk = T::of_usize(cells) * self.spacing::<T>(k);
            s += dk * dk;
        }
        s.sqrt()
    }

    #[inline]
    pub fn distance_flat<T: Real>(&self, a: usize, b: usize) -> T {
        self.periodic_distance(self.unravel(a), self.unravel(b))
    }

    /// Whether `self` is obtained from `coarse` by refining every axis by the same integer factor.
    pub fn refinement_factor(&self, coarse: &TorusGrid) -> Option<usize> {
        if self.dim != coarse.dim || !self.counts[0].is_multiple_of(coarse.counts[0]) {
            return None;
        }
        let f = self.counts[0] / coarse.counts[0];
        (0..self.dim)
            .all(|k| self.counts[k] == f * coarse.counts[k])
            .then_some(f)
    }

    /// Same grid with every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Result<TorusGrid> {
        let counts: Vec<usize> = self.counts().iter().map(|n| n * factor).collect();
        TorusGrid::new(&counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_small_or_bad_dimension() {
        assert!(TorusGrid::line(7).is_err());
        assert!(TorusGrid::new(&[8, 8, 8]).is_err());
        assert!(TorusGrid::new(&[16, 4]).is_err());
        assert!(TorusGrid::new(&[16, 8]).is_ok());
    }

    #[test]
    fn distance_examples() {
        let g = TorusGrid::line(10).unwrap();
        let d: f64 = g.periodic_distance([0, 0], [9, 0]);
        assert!((d - 0.1).abs() < 1e-15);
        let d: f64 = g.periodic_distance([0, 0], [5, 0]);
        assert!((d - 0.5).abs() < 1e-15);
        let g2 = TorusGrid::square(10).unwrap();
        let d: f64 = g2.periodic_distance([0, 0], [9, 9]);
        assert!((d - 2f64.sqrt() * 0.1).abs() < 1e-12);
        let d32: f32 = g2.periodic_distance([0, 0], [9, 9]);
        assert!((d32 - 0.141_421_36).abs() < 1e-6);
    }

    #[test]
    fn shift_wraps_both_ways() {
        let g = TorusGrid::new(&[8, 12]).unwrap();
        let f = g.ravel([0, 11]);
        assert_eq!(g.unravel(g.shift(f, 1, 1)), [0, 0]);
        assert_eq!(g.unravel(g.shift(f, 0, -1)), [7, 11]);
        assert_eq!(g.shift(g.shift(f, 0, 3), 0, -3), f);
    }

    #[test]
    fn grid_json_shape() {
        let g = TorusGrid::new(&[16, 32]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"dim":2,"counts":[16,32]}"#);
        let back: TorusGrid = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<TorusGrid>(r#"{"dim":1,"counts":[4]}"#).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            n0 in 8usize..40, n1 in 8usize..40,
            a in (0usize..1000, 0usize..1000),
            b in (0usize..1000, 0usize..1000),
            c in (0usize..1000, 0usize..1000),
        ) {
            let g = TorusGrid::new(&[n0, n1]).unwrap();
            let (i, j, k) = ([a.0 % n0, a.1 % n1], [b.0 % n0, b.1 % n1], [c.0 % n0, c.1 % n1]);
            let dij: f64 = g.periodic_distance(i, j);
            let dji: f64 = g.periodic_distance(j, i);
            let djk: f64 = g.periodic_distance(j, k);
            let dik: f64 = g.periodic_distance(i, k);
            prop_assert_eq!(dij, dji);
            prop_assert!(dik <= dij + djk + 1e-12);
            prop_assert_eq!(dij == 0.0, i == j);
            prop_assert!(dij <= 0.5f64.hypot(0.5) + 1e-12);
        }
    }
}
