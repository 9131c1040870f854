//! Scalar and matrix coefficient fields `x ↦ a(x)` on the torus.

use serde::{Deserialize, Serialize};

use crate::grid::{Point, ScalarField};
use crate::scalar::Real;

/// One mode `cos·cos(2π k·x) + sin·sin(2π k·x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FourierTerm<T> {
    /// Integer frequencies per axis; a single entry means axis 0 only.
    pub freq: Vec<i32>,
    #[serde(default)]
    pub cos: T,
    #[serde(default)]
    pub sin: T,
}

impl<T: Real> FourierTerm<T> {
    fn phase(&self, x: &Point<T>) -> T {
        let mut s = T::zero();
        for (k, f) in self.freq.iter().take(2).enumerate() {
            s += T::of(*f as f64) * x[k];
        }
        T::TAU() * s
    }

    fn wavenumber(&self) -> T {
        let s: f64 = self.freq.iter().map(|f| (*f as f64).powi(2)).sum();
        T::TAU() * T::of(s.sqrt())
    }
}

/// A closed-form coefficient: a constant, a truncated Fourier series, or
/// grid samples interpolated multilinearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(untagged)]
pub enum Coefficient<T> {
    Constant(T),
    Fourier(Vec<FourierTerm<T>>),
    #[serde(skip)]
    Sampled(ScalarField<T>),
}

impl<T: Real> Default for Coefficient<T> {
    fn default() -> Self {
        Coefficient::Constant(T::zero())
    }
}

impl<T: Real> Coefficient<T> {
    pub fn constant(c: T) -> Self {
        Coefficient::Constant(c)
    }

    /// `amp · cos(2π k x_axis)` plus an optional constant.
    pub fn cosine(axis_freq: &[i32], amp: T, mean: T) -> Self {
        let mut terms = vec![FourierTerm {
            freq: axis_freq.to_vec(),
            cos: amp,
            sin: T::zero(),
        }];
        if mean != T::zero() {
            terms.push(FourierTerm {
                freq: vec![0],
                cos: mean,
                sin: T::zero(),
            });
        }
        Coefficient::Fourier(terms)
    }

    pub fn sine(axis_freq: &[i32], amp: T, mean: T) -> Self {
        let mut c = Self::cosine(axis_freq, T::zero(), mean);
        if let Coefficient::Fourier(t) = &mut c {
            t[0].sin = amp;
        }
        c
    }

    pub fn eval(&self, x: &Point<T>) -> T {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Fourier(terms) => terms
                .iter()
                .map(|t| {
                    let ph = t.phase(x);
                    t.cos * ph.cos() + t.sin * ph.sin()
                })
                .sum(),
            Coefficient::Sampled(f) => interpolate(f, x),
        }
    }

    /// A Lipschitz bound: exact for constants and Fourier series
    /// (`Σ 2π|k| √(a²+b²)`), the neighbor difference quotient for samples.
    pub fn lipschitz_bound(&self) -> T {
        match self {
            Coefficient::Constant(_) => T::zero(),
            Coefficient::Fourier(terms) => terms
                .iter()
                .map(|t| t.wavenumber() * t.cos.hypot(t.sin))
                .sum(),
            Coefficient::Sampled(f) => {
                let g = f.grid();
                let mut m = T::zero();
                for i in 0..g.len() {
                    for k in 0..g.dim() {
                        let d = (f.at(g.shift(i, k, 1)) - f.at(i)).abs() * T::of_usize(g.count(k));
                        m = m.max(d);
                    }
                }
                m
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Coefficient::Constant(_) => true,
            Coefficient::Fourier(terms) => terms.iter().all(|t| {
                t.freq.iter().all(|f| *f == 0) || (t.cos == T::zero() && t.sin == T::zero())
            }),
            Coefficient::Sampled(f) => f.max() == f.min(),
        }
    }

    /// The same coefficient plus a constant.
    pub fn plus(&self, c: T) -> Self {
        match self {
            Coefficient::Constant(v) => Coefficient::Constant(*v + c),
            Coefficient::Fourier(terms) => {
                let mut t = terms.clone();
                t.push(FourierTerm {
                    freq: vec![0],
                    cos: c,
                    sin: T::zero(),
                });
                Coefficient::Fourier(t)
            }
            Coefficient::Sampled(f) => Coefficient::Sampled(f.map(|v| v + c)),
        }
    }
}

fn interpolate<T: Real>(f: &ScalarField<T>, x: &Point<T>) -> T {
    let g = f.grid();
    let mut base = [0usize; 2];
    let mut frac = [T::zero(); 2];
    for k in 0..g.dim() {
        let n = g.count(k);
        let s = (x[k] - x[k].floor()) * T::of_usize(n);
        let i = s.floor();
        frac[k] = s - i;
        base[k] = i.to_usize().unwrap_or(0) % n;
    }
    let corner = |d0: usize, d1: usize| {
        let i0 = (base[0] + d0) % g.count(0);
        let i1 = (base[1] + d1) % g.count(1);
        f.get([i0, i1])
    };
    if g.dim() == 1 {
        return corner(0, 0) * (T::one() - frac[0]) + corner(1, 0) * frac[0];
    }
    let lo = corner(0, 0) * (T::one() - frac[0]) + corner(1, 0) * frac[0];
    let hi = corner(0, 1) * (T::one() - frac[0]) + corner(1, 1) * frac[0];
    lo * (T::one() - frac[1]) + hi * frac[1]
}

/// A `2×2` matrix-valued coefficient (only the leading `d×d` block is used).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(untagged)]
pub enum MatrixField<T> {
    Constant([[T; 2]; 2]),
    Entries([[Coefficient<T>; 2]; 2]),
}

impl<T: Real> MatrixField<T> {
    pub fn identity() -> Self {
        MatrixField::Constant([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    pub fn eval(&self, x: &Point<T>) -> [[T; 2]; 2] {
        match self {
            MatrixField::Constant(m) => *m,
            MatrixField::Entries(e) => [
                [e[0][0].eval(x), e[0][1].eval(x)],
                [e[1][0].eval(x), e[1][1].eval(x)],
            ],
        }
    }

    /// Frobenius-type Lipschitz bound over the active `d×d` block.
    pub fn lipschitz_bound(&self, dim: usize) -> T {
        match self {
            MatrixField::Constant(_) => T::zero(),
            MatrixField::Entries(e) => {
                let mut s = T::zero();
                for row in e.iter().take(dim) {
                    for c in row.iter().take(dim) {
                        let l = c.lipschitz_bound();
                        s += l * l;
                    }
                }
                s.sqrt()
            }
        }
    }
}

/// `M p` restricted to the active block.
pub fn mat_vec<T: Real>(m: &[[T; 2]; 2], p: &[T; 2], dim: usize) -> [T; 2] {
    let mut out = [T::zero(); 2];
    for i in 0..dim {
        for j in 0..dim {
            out[i] += m[i][j] * p[j];
        }
    }
    out
}

/// `M Mᵀ` restricted to the active block.
pub fn mat_mul_transpose<T: Real>(m: &[[T; 2]; 2], dim: usize) -> [[T; 2]; 2] {
    let mut out = [[T::zero(); 2]; 2];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                out[i][j] += m[i][k] * m[j][k];
            }
        }
    }
    out
}

/// Eigenvalues `(min, max)` of the symmetric part of the active block.
pub fn sym_eigen_range<T: Real>(a: &[[T; 2]; 2], dim: usize) -> (T, T) {
    if dim == 1 {
        return (a[0][0], a[0][0]);
    }
    let off = (a[0][1] + a[1][0]) * T::half();
    let mean = (a[0][0] + a[1][1]) * T::half();
    let rad = ((a[0][0] - a[1][1]) * T::half()).hypot(off);
    (mean - rad, mean + rad)
}

/// Spectral norm of the active block.
pub fn operator_norm<T: Real>(m: &[[T; 2]; 2], dim: usize) -> T {
    let (_, hi) = sym_eigen_range(&mat_mul_transpose(m, dim), dim);
    hi.max(T::zero()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn fourier_eval_and_bounds() {
        let c = Coefficient::<f64>::cosine(&[1], 1.0, 2.0);
        assert!((c.eval(&[0.0, 0.0]) - 3.0).abs() < 1e-15);
        assert!((c.eval(&[0.5, 0.0]) - 1.0).abs() < 1e-15);
        assert!((c.lipschitz_bound() - std::f64::consts::TAU).abs() < 1e-12);
        let s = Coefficient::<f64>::sine(&[0, 2], 0.5, 0.0);
        assert!((s.eval(&[0.3, 0.125]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sampled_coefficient_interpolates_nodes() {
        let g = TorusGrid::line(16).unwrap();
        let f = ScalarField::from_fn(g, |x: Point<f64>| (std::f64::consts::TAU * x[0]).sin());
        let c = Coefficient::Sampled(f.clone());
        for i in 0..16 {
            assert!((c.eval(&g.point(i)) - f.at(i)).abs() < 1e-12);
        }
        let mid = c.eval(&[1.0 / 32.0, 0.0]);
        assert!((mid - 0.5 * (f.at(0) + f.at(1))).abs() < 1e-12);
    }

    #[test]
    fn config_forms_parse() {
        let c: Coefficient<f64> = serde_json::from_str("2.5").unwrap();
        assert_eq!(c, Coefficient::Constant(2.5));
        let c: Coefficient<f64> = serde_json::from_str(r#"[{"freq":[1],"cos":1.0}]"#).unwrap();
        assert!((c.eval(&[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_range_of_symmetric_matrix() {
        let (lo, hi) = sym_eigen_range(&[[2.0f64, 1.0], [1.0, 2.0]], 2);
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
        assert!((operator_norm(&[[3.0, 0.0], [0.0, -4.0]], 2) - 4.0f64).abs() < 1e-12);
    }
}
