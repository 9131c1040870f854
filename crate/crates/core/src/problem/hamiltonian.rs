//! Hamiltonian families `H(x, p)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::coefficient::{mat_vec, Coefficient, MatrixField};
use crate::grid::{norm, Point, TorusGrid, VectorSample};
use crate::scalar::Real;

type Evaluator<T> = dyn Fn(&Point<T>, &VectorSample<T>) -> T + Send + Sync;

/// A user-supplied evaluator `(x, p) ↦ H(x, p)`.
#[derive(Clone)]
pub struct CustomHamiltonian<T>(pub Arc<Evaluator<T>>);

impl<T> fmt::Debug for CustomHamiltonian<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomHamiltonian(..)")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family<T> {
    /// `a(x)|p|^k + ℓ(x)`.
    PowerCoercive {
        #[serde(default = "unit")]
        a: Coefficient<T>,
        k: T,
        #[serde(default)]
        ell: Coefficient<T>,
    },
    /// `|Σ(x)p|^m + G(x, p)`.
    SigmaPower {
        sigma: MatrixField<T>,
        m: T,
        g: Box<HamiltonianSpec<T>>,
    },
    /// `⟨b(x), p⟩ + ℓ(x)`.
    Sublinear {
        b: Vec<Coefficient<T>>,
        #[serde(default)]
        ell: Coefficient<T>,
    },
    /// `K(x, p) + α|p|^e`.
    PerturbedPower {
        inner: Box<HamiltonianSpec<T>>,
        alpha_coef: T,
        exponent: T,
    },
    /// `H(x, p)` for `|p| ≤ n`, `H(x, n p/|p|)` beyond.
    Truncated {
        inner: Box<HamiltonianSpec<T>>,
        n_trunc: T,
    },
    /// `(1/q)|p|^e + H(x, p)`.
    Regularized {
        inner: Box<HamiltonianSpec<T>>,
        q: T,
        exponent: T,
    },
    /// `H(x, p) + offset`.
    Shifted {
        inner: Box<HamiltonianSpec<T>>,
        offset: T,
    },
    #[serde(skip)]
    Custom(CustomHamiltonian<T>),
}

fn unit<T: Real>() -> Coefficient<T> {
    Coefficient::Constant(T::one())
}

/// Declared structure constants. All optional: they feed diagnostics and
/// manifests, never the solvers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GrowthMeta<T> {
    /// Coercivity exponent `k` in `H ≥ |p|^k/C − C`.
    pub k: Option<T>,
    /// Coercivity constant `C`.
    #[serde(rename = "C")]
    pub c: Option<T>,
    pub alpha: Option<T>,
    pub beta: Option<T>,
    /// Upper growth exponent `M` in `H ≤ C(|p|^M + 1)`.
    #[serde(rename = "M")]
    pub growth_m: Option<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HamiltonianSpec<T> {
    pub family: Family<T>,
    #[serde(default = "GrowthMeta::default")]
    pub meta: GrowthMeta<T>,
}

#[inline]
fn pow_norm<T: Real>(p: &VectorSample<T>, e: T) -> T {
    let r = norm(p);
    if r == T::zero() {
        T::zero()
    } else {
        r.powf(e)
    }
}

impl<T: Real> HamiltonianSpec<T> {
    pub fn new(family: Family<T>) -> Self {
        Self {
            family,
            meta: GrowthMeta::default(),
        }
    }

    pub fn with_meta(mut self, meta: GrowthMeta<T>) -> Self {
        self.meta = meta;
        self
    }

    /// `a(x)|p|^k + ℓ(x)`.
    pub fn power_coercive(a: Coefficient<T>, k: T, ell: Coefficient<T>) -> Self {
        Self::new(Family::PowerCoercive { a, k, ell }).with_meta(GrowthMeta {
            k: Some(k),
            growth_m: Some(k),
            ..Default::default()
        })
    }

    /// `|p|^k + ℓ(x)`.
    pub fn power_plus(k: T, ell: Coefficient<T>) -> Self {
        Self::power_coercive(Coefficient::Constant(T::one()), k, ell)
    }

    /// `|p|^k`.
    pub fn power(k: T) -> Self {
        Self::power_plus(k, Coefficient::Constant(T::zero()))
    }

    pub fn sublinear(b: Vec<Coefficient<T>>, ell: Coefficient<T>) -> Self {
        Self::new(Family::Sublinear { b, ell })
    }

    pub fn sigma_power(sigma: MatrixField<T>, m: T, g: HamiltonianSpec<T>) -> Self {
        Self::new(Family::SigmaPower {
            sigma,
            m,
            g: Box::new(g),
        })
    }

    pub fn custom(f: impl Fn(&Point<T>, &VectorSample<T>) -> T + Send + Sync + 'static) -> Self {
        Self::new(Family::Custom(CustomHamiltonian(Arc::new(f))))
    }

    pub fn perturbed(self, alpha_coef: T, exponent: T) -> Self {
        let meta = self.meta.clone();
        Self::new(Family::PerturbedPower {
            inner: Box::new(self),
            alpha_coef,
            exponent,
        })
        .with_meta(meta)
    }

    pub fn truncated(self, n_trunc: T) -> Self {
        let meta = self.meta.clone();
        Self::new(Family::Truncated {
            inner: Box::new(self),
            n_trunc,
        })
        .with_meta(meta)
    }

    pub fn regularized(self, q: T, exponent: T) -> Self {
        let meta = GrowthMeta {
            growth_m: Some(exponent),
            ..self.meta.clone()
        };
        Self::new(Family::Regularized {
            inner: Box::new(self),
            q,
            exponent,
        })
        .with_meta(meta)
    }

    pub fn shifted(self, offset: T) -> Self {
        let meta = self.meta.clone();
        Self::new(Family::Shifted {
            inner: Box::new(self),
            offset,
        })
        .with_meta(meta)
    }

    pub fn eval(&self, x: &Point<T>, p: &VectorSample<T>) -> T {
        match &self.family {
            Family::PowerCoercive { a, k, ell } => a.eval(x) * pow_norm(p, *k) + ell.eval(x),
            Family::SigmaPower { sigma, m, g } => {
                let sp = mat_vec(&sigma.eval(x), p, 2);
                pow_norm(&sp, *m) + g.eval(x, p)
            }
            Family::Sublinear { b, ell } => {
                let mut s = ell.eval(x);
                for (bk, pk) in b.iter().zip(p.iter()) {
                    s += bk.eval(x) * *pk;
                }
                s
            }
            Family::PerturbedPower {
                inner,
                alpha_coef,
                exponent,
            } => inner.eval(x, p) + *alpha_coef * pow_norm(p, *exponent),
            Family::Truncated { inner, n_trunc } => {
                let r = norm(p);
                if r <= *n_trunc {
                    inner.eval(x, p)
                } else {
                    let s = *n_trunc / r;
                    inner.eval(x, &[p[0] * s, p[1] * s])
                }
            }
            Family::Regularized { inner, q, exponent } => {
                pow_norm(p, *exponent) / *q + inner.eval(x, p)
            }
            Family::Shifted { inner, offset } => inner.eval(x, p) + *offset,
            Family::Custom(f) => (f.0)(x, p),
        }
    }

    /// Whether `H` does not depend on `x` (checked structurally).
    pub fn is_x_independent(&self) -> bool {
        match &self.family {
            Family::PowerCoercive { a, ell, .. } => a.is_constant() && ell.is_constant(),
            Family::SigmaPower { sigma, g, .. } => {
                matches!(sigma, MatrixField::Constant(_)) && g.is_x_independent()
            }
            Family::Sublinear { b, ell } => {
                b.iter().all(Coefficient::is_constant) && ell.is_constant()
            }
            Family::PerturbedPower { inner, .. }
            | Family::Truncated { inner, .. }
            | Family::Regularized { inner, .. }
            | Family::Shifted { inner, .. } => inner.is_x_independent(),
            Family::Custom(_) => false,
        }
    }

    /// `∂H/∂p_k` by central differencing in `p`.
    pub fn dh_dp(&self, x: &Point<T>, p: &VectorSample<T>, axis: usize) -> T {
        let step = T::epsilon().cbrt() * (T::one() + norm(p));
        let mut hi = *p;
        let mut lo = *p;
        hi[axis] += step;
        lo[axis] -= step;
        (self.eval(x, &hi) - self.eval(x, &lo)) / (step + step)
    }

    /// `|H(·, 0)|∞` over the nodes of `grid`.
    pub fn h0_sup(&self, grid: &TorusGrid) -> T {
        let zero = [T::zero(); 2];
        (0..grid.len()).fold(T::zero(), |m, i| {
            m.max(self.eval(&grid.point(i), &zero).abs())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cos_ell() -> Coefficient<f64> {
        Coefficient::cosine(&[1], 1.0, 0.0)
    }

    #[test]
    fn eval_examples() {
        let h = HamiltonianSpec::<f64>::power(3.0);
        assert!((h.eval(&[0.2, 0.0], &[2.0, 0.0]) - 8.0).abs() < 1e-12);
        assert!((h.eval(&[0.2, 0.0], &[0.0, -2.0]) - 8.0).abs() < 1e-12);
        let t = HamiltonianSpec::<f64>::power(3.0).truncated(2.0);
        assert!((t.eval(&[0.0, 0.0], &[3.0, 0.0]) - 8.0).abs() < 1e-12);
        let r = HamiltonianSpec::<f64>::power(3.0).regularized(4.0, 5.0);
        assert!((r.eval(&[0.0, 0.0], &[1.0, 0.0]) - 1.25).abs() < 1e-12);
        let s = HamiltonianSpec::sublinear(vec![Coefficient::Constant(2.0)], cos_ell());
        assert!((s.eval(&[0.5, 0.0], &[1.5, 0.0]) - 2.0).abs() < 1e-12);
        let sp = HamiltonianSpec::<f64>::sigma_power(
            MatrixField::Constant([[2.0, 0.0], [0.0, 1.0]]),
            2.0,
            HamiltonianSpec::sublinear(vec![], Coefficient::Constant(1.0)),
        );
        assert!((sp.eval(&[0.0, 0.0], &[1.0, 0.0]) - 5.0).abs() < 1e-12);
        let pp = HamiltonianSpec::<f64>::power(2.0).perturbed(0.5, 3.5);
        assert!((pp.eval(&[0.0, 0.0], &[1.0, 0.0]) - 1.5).abs() < 1e-12);
        let c = HamiltonianSpec::custom(|x: &Point<f64>, p: &VectorSample<f64>| x[0] + p[0]);
        assert_eq!(c.eval(&[1.0, 0.0], &[2.0, 0.0]), 3.0);
        assert!(!c.is_x_independent());
        assert!(HamiltonianSpec::<f64>::power(2.0)
            .shifted(1.0)
            .is_x_independent());
    }

    #[test]
    fn derivative_by_differencing() {
        let h = HamiltonianSpec::<f64>::power(3.0);
        let d = h.dh_dp(&[0.0, 0.0], &[2.0, 0.0], 0);
        assert!((d - 12.0).abs() < 1e-6);
    }

    #[test]
    fn h0_sup_over_grid() {
        let g = TorusGrid::line(16).unwrap();
        let h = HamiltonianSpec::power_plus(2.0, cos_ell()).shifted(0.5);
        assert!((h.h0_sup(&g) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn config_parses() {
        let text = r#"
            [family]
            kind = "regularized"
            q = 10.0
            exponent = 4.0
            [family.inner.family]
            kind = "power_coercive"
            k = 3.0
            ell = [{ freq = [1], cos = 1.0 }]
        "#;
        let h: HamiltonianSpec<f64> = toml::from_str(text).unwrap();
        assert!((h.eval(&[0.0, 0.0], &[1.0, 0.0]) - (0.1 + 1.0 + 1.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn truncation_laws(x in 0.0f64..1.0, p0 in -6.0f64..6.0, p1 in -6.0f64..6.0, n in 0.5f64..4.0) {
            let inner = HamiltonianSpec::power_coercive(
                Coefficient::cosine(&[1], 0.5, 2.0), 3.0, cos_ell());
            let t = inner.clone().truncated(n);
            let p = [p0, p1];
            let r = norm(&p);
            let xp = [x, 0.3];
            if r <= n {
                prop_assert_eq!(t.eval(&xp, &p), inner.eval(&xp, &p));
            }
            // Bounded by the sup of |H| over the ball of radius n.
            let bound = 2.5 * n.powi(3) + 1.0;
            prop_assert!(t.eval(&xp, &p).abs() <= bound + 1e-9);
            let reg = t.clone().regularized(7.0, 5.0);
            let diff = reg.eval(&xp, &p) - t.eval(&xp, &p);
            let expect = if r == 0.0 { 0.0 } else { r.powf(5.0) / 7.0 };
            prop_assert!((diff - expect).abs() <= 1e-12 * (1.0 + expect));
        }
    }
}
