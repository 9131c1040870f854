//! Monotone finite-difference surrogate of `trace(A(x) D²v)`.
//!
//! One dimension uses the three-point second difference. Two dimensions use
//! the seven-point stencil: axis second differences plus the mixed term
//! discretized along the diagonal matching the sign of `a12`, which keeps
//! every off-center weight nonnegative as long as
//! `|a12| <= min(a11 h1/h0, a22 h0/h1)`.

use super::{ScalarField, TorusGrid};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::problem::DiffusionSpec;
use crate::scalar::Real;

/// Weights of one stencil row; `neighbors[..len]` are the off-center entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StencilRow<T> {
    pub center: T,
    neighbors: [(usize, T); 6],
    len: usize,
}

impl<T: Real> StencilRow<T> {
    fn empty() -> Self {
        Self {
            center: T::zero(),
            neighbors: [(0, T::zero()); 6],
            len: 0,
        }
    }

    fn push(&mut self, node: usize, w: T) {
        self.neighbors[self.len] = (node, w);
        self.len += 1;
        self.center -= w;
    }

    pub fn neighbors(&self) -> &[(usize, T)] {
        &self.neighbors[..self.len]
    }

    #[inline]
    pub fn apply(&self, v: &[T], node: usize) -> T {
        let mut acc = self.center * v[node];
        for &(j, w) in self.neighbors() {
            acc += w * v[j];
        }
        acc
    }
}

fn build_row<T: Real>(grid: &TorusGrid, a: [[T; 2]; 2], node: usize) -> Result<StencilRow<T>> {
    let mut row = StencilRow::empty();
    let h0 = grid.spacing::<T>(0);
    if grid.dim() == 1 {
        let w = a[0][0] / (h0 * h0);
        row.push(grid.shift(node, 0, -1), w);
        row.push(grid.shift(node, 0, 1), w);
        return Ok(row);
    }
    let h1 = grid.spacing::<T>(1);
    let a12 = a[0][1];
    let cross = a12.abs() / (h0 * h1);
    let w0 = a[0][0] / (h0 * h0) - cross;
    let w1 = a[1][1] / (h1 * h1) - cross;
    if w0 < T::zero() || w1 < T::zero() {
        let bound = (a[0][0] * h1 / h0).min(a[1][1] * h0 / h1);
        return Err(Error::StencilNotMonotone {
            node,
            a12: a12.as_f64(),
            bound: bound.as_f64(),
        });
    }
    for (axis, w) in [(0, w0), (1, w1)] {
        if w > T::zero() {
            row.push(grid.shift(node, axis, -1), w);
            row.push(grid.shift(node, axis, 1), w);
        }
    }
    if cross > T::zero() {
        let s: isize = if a12 > T::zero() { 1 } else { -1 };
        let pp = grid.shift(grid.shift(node, 0, 1), 1, s);
        let mm = grid.shift(grid.shift(node, 0, -1), 1, -s);
        row.push(pp, cross);
        row.push(mm, cross);
    }
    Ok(row)
}

/// `trace(A(x_i) D²v)` at one node, assembling only that row.
pub fn diffusion_term<T: Real>(
    field: &ScalarField<T>,
    diff: &DiffusionSpec<T>,
    node: usize,
) -> Result<T> {
    let grid = field.grid();
    let row = build_row(grid, diff.matrix_at(grid.point(node)), node)?;
    Ok(row.apply(field.values(), node))
}

/// The diffusion stencil assembled on every node of a grid.
#[derive(Clone, Debug)]
pub struct DiffusionOperator<T> {
    grid: TorusGrid,
    rows: Vec<StencilRow<T>>,
    diag_sup: [T; 2],
}

impl<T: Real> DiffusionOperator<T> {
    pub fn assemble(grid: &TorusGrid, diff: &DiffusionSpec<T>) -> Result<Self> {
        let mut rows = Vec::with_capacity(grid.len());
        let mut diag_sup = [T::zero(); 2];
        for node in 0..grid.len() {
            let a = diff.matrix_at(grid.point(node));
            for k in 0..grid.dim() {
                diag_sup[k] = diag_sup[k].max(a[k][k]);
            }
            rows.push(build_row(grid, a, node)?);
        }
        Ok(Self {
            grid: *grid,
            rows,
            diag_sup,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn row(&self, node: usize) -> &StencilRow<T> {
        &self.rows[node]
    }

    /// `max_x a_kk(x)` per axis.
    pub fn diag_sup(&self) -> [T; 2] {
        self.diag_sup
    }

    /// `Σ_k 2 a_kk,sup / h_k²`, the explicit stability weight of the stencil.
    pub fn explicit_weight(&self) -> T {
        (0..self.grid.dim())
            .map(|k| {
                let h = self.grid.spacing::<T>(k);
                T::two() * self.diag_sup[k] / (h * h)
            })
            .sum()
    }

    #[inline]
    pub fn apply_at(&self, v: &[T], node: usize) -> T {
        self.rows[node].apply(v, node)
    }

    pub fn apply(&self, v: &[T], out: &mut [T]) {
        for (node, o) in out.iter_mut().enumerate() {
            *o = self.rows[node].apply(v, node);
        }
    }

    /// Sparse matrix of `alpha·I + beta·D`.
    pub fn affine_matrix(&self, alpha: T, beta: T) -> CsrMatrix<T> {
        let n = self.grid.len();
        CsrMatrix::from_rows(
            n,
            (0..n).map(|i| {
                let r = &self.rows[i];
                let mut entries = vec![(i, alpha + beta * r.center)];
                entries.extend(r.neighbors().iter().map(|&(j, w)| (j, beta * w)));
                entries
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;

    const TAU: f64 = std::f64::consts::TAU;

    #[test]
    fn annihilates_constants() {
        let g = TorusGrid::square(12).unwrap();
        let d = DiffusionSpec::constant_matrix(2, [[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let f = ScalarField::constant(g, 7.0);
        for i in 0..g.len() {
            assert_eq!(diffusion_term(&f, &d, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn cosine_second_derivative_1d() {
        let g = TorusGrid::line(256).unwrap();
        let d = DiffusionSpec::identity(1);
        let f = ScalarField::from_fn(g, |x: Point<f64>| (TAU * x[0]).cos());
        let val = diffusion_term(&f, &d, 0).unwrap();
        let exact = -TAU * TAU;
        assert!((val - exact).abs() <= 0.01 * exact.abs(), "{val}");
    }

    #[test]
    fn separable_hessian_2d() {
        let g = TorusGrid::square(128).unwrap();
        let d = DiffusionSpec::constant_matrix(2, [[2.0, 0.0], [0.0, 1.0]]).unwrap();
        let f = ScalarField::from_fn(g, |x: Point<f64>| (TAU * x[0]).cos());
        let val = diffusion_term(&f, &d, 0).unwrap();
        let exact = -2.0 * TAU * TAU;
        assert!((val - exact).abs() <= 0.01 * exact.abs(), "{val}");
    }

    #[test]
    fn mixed_term_is_consistent_for_both_signs() {
        let g = TorusGrid::square(200).unwrap();
        for a12 in [0.4, -0.4] {
            let d = DiffusionSpec::constant_matrix(2, [[1.0, a12], [a12, 1.0]]).unwrap();
            let f =
                ScalarField::from_fn(g, |x: Point<f64>| (TAU * x[0]).sin() * (TAU * x[1]).sin());
            let node = g.ravel([25, 25]);
            let x = g.point::<f64>(node);
            // v = sin sin: v_xx = v_yy = -τ² v, v_xy = τ² cos cos.
            let v = (TAU * x[0]).sin() * (TAU * x[1]).sin();
            let vxy = TAU * TAU * (TAU * x[0]).cos() * (TAU * x[1]).cos();
            let exact = -2.0 * TAU * TAU * v + 2.0 * a12 * vxy;
            let val = diffusion_term(&f, &d, node).unwrap();
            assert!(
                (val - exact).abs() < 1e-2 * TAU * TAU,
                "{a12}: {val} vs {exact}"
            );
        }
    }

    #[test]
    fn weights_are_monotone_and_affine_fields_vanish() {
        let g = TorusGrid::new(&[16, 16]).unwrap();
        let d = DiffusionSpec::constant_matrix(2, [[1.5, -0.7], [-0.7, 0.9]]).unwrap();
        let op = DiffusionOperator::assemble(&g, &d).unwrap();
        for i in 0..g.len() {
            let r = op.row(i);
            assert!(r.neighbors().iter().all(|&(_, w)| w >= 0.0));
            assert!(r.center <= 0.0);
        }
        let f = ScalarField::from_fn(g, |x: Point<f64>| 2.0 * x[0] - 3.0 * x[1] + 1.0);
        for i in 0..g.len() {
            let idx = g.unravel(i);
            if (1..15).contains(&idx[0]) && (1..15).contains(&idx[1]) {
                assert!(op.apply_at(f.values(), i).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_dominant_cross_term() {
        let g = TorusGrid::square(16).unwrap();
        let d = DiffusionSpec::constant_matrix(2, [[1.0, 0.9], [0.9, 0.85]]).unwrap();
        let err = DiffusionOperator::assemble(&g, &d).unwrap_err();
        assert!(matches!(err, Error::StencilNotMonotone { .. }));
    }
}
