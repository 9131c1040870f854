//! Diffusion matrices `A(x) = σ(x)σ(x)ᵀ (+ δI)` with their ellipticity data.

use serde::{Deserialize, Serialize};

use super::coefficient::{mat_mul_transpose, operator_norm, sym_eigen_range, MatrixField};
use crate::error::{Error, Result};
use crate::grid::{Point, TorusGrid};
use crate::scalar::Real;

/// Samples per axis used to measure `ν` and `|σ|∞` for variable coefficients.
const PROBE_CELLS: usize = 64;

/// Config-file description of a diffusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionConfig<T> {
    /// `A = I`.
    Identity,
    /// `A = ν I`.
    Scaled { nu: T },
    /// `A = 0`, the degenerate case.
    Zero,
    /// Constant symmetric positive semidefinite `A`.
    Constant { a: [[T; 2]; 2] },
    /// Variable `σ(x)`.
    Sigma { sigma: MatrixField<T> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSpec<T> {
    dim: usize,
    sigma: MatrixField<T>,
    extra: T,
    nu: T,
    sigma_sup: T,
    sigma_lip: T,
}

fn cholesky<T: Real>(a: [[T; 2]; 2], dim: usize) -> Result<[[T; 2]; 2]> {
    let (lo, _) = sym_eigen_range(&a, dim);
    if lo < -T::of(1e-12) * (T::one() + a[0][0].abs() + a[1][1].abs()) {
        return Err(Error::InvalidInput(
            "diffusion matrix is not positive semidefinite".into(),
        ));
    }
    if (a[0][1] - a[1][0]).abs() > T::of(1e-12) * (T::one() + a[0][1].abs()) && dim == 2 {
        return Err(Error::InvalidInput(
            "diffusion matrix is not symmetric".into(),
        ));
    }
    let l00 = a[0][0].max(T::zero()).sqrt();
    if dim == 1 {
        return Ok([[l00, T::zero()], [T::zero(), T::zero()]]);
    }
    let l10 = if l00 > T::zero() {
        a[1][0] / l00
    } else {
        T::zero()
    };
    let l11 = (a[1][1] - l10 * l10).max(T::zero()).sqrt();
    Ok([[l00, T::zero()], [l10, l11]])
}

impl<T: Real> DiffusionSpec<T> {
    pub fn identity(dim: usize) -> Self {
        Self::scaled(dim, T::one())
    }

    /// `A = ν I` (`σ = √ν I`).
    pub fn scaled(dim: usize, nu: T) -> Self {
        let s = nu.max(T::zero()).sqrt();
        Self {
            dim,
            sigma: MatrixField::Constant([[s, T::zero()], [T::zero(), s]]),
            extra: T::zero(),
            nu,
            sigma_sup: s,
            sigma_lip: T::zero(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::scaled(dim, T::zero())
    }

    /// Constant `A`, stored through its Cholesky factor.
    pub fn constant_matrix(dim: usize, a: [[T; 2]; 2]) -> Result<Self> {
        let sigma = cholesky(a, dim)?;
        let (lo, _) = sym_eigen_range(&a, dim);
        Ok(Self {
            dim,
            sigma: MatrixField::Constant(sigma),
            extra: T::zero(),
            nu: lo.max(T::zero()),
            sigma_sup: operator_norm(&sigma, dim),
            sigma_lip: T::zero(),
        })
    }

    /// Variable `σ(x)`; `ν` and `|σ|∞` are measured on a probe lattice,
    /// `|σ_x|∞` is the closed-form Lipschitz bound of the entries.
    pub fn from_sigma(dim: usize, sigma: MatrixField<T>) -> Result<Self> {
        let probe = TorusGrid::new(&vec![PROBE_CELLS; dim])?;
        let mut nu = T::infinity();
        let mut sup = T::zero();
        for i in 0..probe.len() {
            let s = sigma.eval(&probe.point(i));
            let a = mat_mul_transpose(&s, dim);
            nu = nu.min(sym_eigen_range(&a, dim).0);
            sup = sup.max(operator_norm(&s, dim));
        }
        let sigma_lip = sigma.lipschitz_bound(dim);
        Ok(Self {
            dim,
            sigma,
            extra: T::zero(),
            nu: nu.max(T::zero()),
            sigma_sup: sup,
            sigma_lip,
        })
    }

    pub fn from_config(config: &DiffusionConfig<T>, dim: usize) -> Result<Self> {
        match config {
            DiffusionConfig::Identity => Ok(Self::identity(dim)),
            DiffusionConfig::Scaled { nu } => Ok(Self::scaled(dim, *nu)),
            DiffusionConfig::Zero => Ok(Self::zero(dim)),
            DiffusionConfig::Constant { a } => Self::constant_matrix(dim, *a),
            DiffusionConfig::Sigma { sigma } => Self::from_sigma(dim, sigma.clone()),
        }
    }

    /// `A + δ I`, the vanishing-viscosity regularization.
    pub fn regularized(&self, delta: T) -> Self {
        let mut out = self.clone();
        out.extra += delta;
        out.nu += delta;
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn sigma_sup(&self) -> T {
        self.sigma_sup
    }

    pub fn sigma_lip(&self) -> T {
        self.sigma_lip
    }

    pub fn sigma_at(&self, x: Point<T>) -> [[T; 2]; 2] {
        self.sigma.eval(&x)
    }

    pub fn matrix_at(&self, x: Point<T>) -> [[T; 2]; 2] {
        let mut a = mat_mul_transpose(&self.sigma.eval(&x), self.dim);
        for k in 0..self.dim {
            a[k][k] += self.extra;
        }
        a
    }

    pub fn is_degenerate(&self) -> bool {
        self.nu <= T::zero()
    }

    /// Checks `A(x) ⪰ (ν − tol) I` at every node of `grid`.
    pub fn check_ellipticity(&self, grid: &TorusGrid, tol: T) -> Result<()> {
        for i in 0..grid.len() {
            let (lo, _) = sym_eigen_range(&self.matrix_at(grid.point(i)), self.dim);
            if lo < self.nu - tol {
                return Err(Error::InvalidInput(format!(
                    "ellipticity fails at node {i}: smallest eigenvalue {lo} < nu = {}",
                    self.nu
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Coefficient;

    #[test]
    fn constant_matrix_round_trips_through_cholesky() {
        let a = [[2.0f64, 0.6], [0.6, 1.0]];
        let d = DiffusionSpec::constant_matrix(2, a).unwrap();
        let back = d.matrix_at([0.3, 0.7]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((back[i][j] - a[i][j]).abs() < 1e-14);
            }
        }
        let (lo, _) = sym_eigen_range(&a, 2);
        assert!((d.nu() - lo).abs() < 1e-14);
        assert!(DiffusionSpec::constant_matrix(2, [[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn variable_sigma_measures_ellipticity() {
        let s = Coefficient::cosine(&[1], 0.5, 1.0);
        let z = Coefficient::Constant(0.0);
        let sigma: MatrixField<f64> = MatrixField::Entries([[s.clone(), z.clone()], [z, s]]);
        let d = DiffusionSpec::from_sigma(2, sigma).unwrap();
        // σ ranges over [0.5, 1.5] I, so A ⪰ 0.25 I.
        assert!((d.nu() - 0.25).abs() < 1e-12);
        assert!((d.sigma_sup() - 1.5).abs() < 1e-12);
        assert!(d.sigma_lip() > 0.0);
        d.check_ellipticity(&TorusGrid::square(16).unwrap(), 1e-12)
            .unwrap();
    }

    #[test]
    fn regularization_shifts_nu() {
        let d = DiffusionSpec::<f64>::zero(1).regularized(0.01);
        assert!(!d.is_degenerate());
        assert!((d.matrix_at([0.0, 0.0])[0][0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn config_parses() {
        let c: DiffusionConfig<f64> = toml::from_str("kind = \"scaled\"\nnu = 0.5").unwrap();
        let d = DiffusionSpec::from_config(&c, 1).unwrap();
        assert!((d.nu() - 0.5).abs() < 1e-15);
    }
}
