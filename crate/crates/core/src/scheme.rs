//! The monotone discrete operator shared by every solver:
//!
//! `F_h(v)_i = ε v_i − D_h(v)_i + Ĥ(x_i, p⁻_i, p⁺_i)`
//!
//! where `D_h` is the monotone diffusion stencil and `Ĥ` the Lax–Friedrichs
//! numerical Hamiltonian `H(x, (p⁻+p⁺)/2) − Σ θ_k (p⁺_k − p⁻_k)/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::field::one_sided_from_slice;
use crate::grid::{DiffusionOperator, Point, ScalarField, TorusGrid, VectorSample};
use crate::linalg::CsrMatrix;
use crate::problem::{DiffusionSpec, HamiltonianSpec};
use crate::scalar::{sup_norm, Real};

/// Safety factor applied on top of the sampled `max |∂H/∂p_k|`.
const THETA_SAFETY: f64 = 1.05;

/// Lattice points per axis used to sample `∂H/∂p` inside the gradient box.
const THETA_LATTICE_1D: usize = 41;
const THETA_LATTICE_2D: usize = 11;

/// Nodes beyond which theta sampling strides through the grid.
const THETA_NODE_CAP: usize = 2048;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SchemeConfig<T> {
    /// Artificial viscosity per axis.
    pub theta: [T; 2],
    /// Bound `P_k` on `|p_k|` over which `theta` is certified.
    pub gradient_box: [T; 2],
    pub tol_residual: T,
    pub max_newton: usize,
    /// Backtracking factor of the Newton line search.
    pub damping: T,
    /// Re-solve with a doubled box when the solution's differences leave it.
    pub adapt_box: bool,
}

impl<T: Real> SchemeConfig<T> {
    /// Defaults for a problem on `grid`: box `P = 1` per axis, theta certified
    /// on it, `tol_residual = 1e-8 (1 + |H(·,0)|∞)`.
    pub fn for_problem(h: &HamiltonianSpec<T>, grid: &TorusGrid) -> Self {
        let mut bx = [T::zero(); 2];
        for b in bx.iter_mut().take(grid.dim()) {
            *b = T::one();
        }
        Self {
            theta: certify_theta(h, grid, bx),
            gradient_box: bx,
            tol_residual: T::of(1e-8) * (T::one() + h.h0_sup(grid)),
            max_newton: 100,
            damping: T::half(),
            adapt_box: true,
        }
    }

    /// Replaces the gradient box and recertifies theta.
    pub fn with_gradient_box(
        mut self,
        h: &HamiltonianSpec<T>,
        grid: &TorusGrid,
        bx: [T; 2],
    ) -> Self {
        self.gradient_box = bx;
        self.theta = certify_theta(h, grid, bx);
        self
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol_residual = tol;
        self
    }

    pub fn fixed_box(mut self) -> Self {
        self.adapt_box = false;
        self
    }

    pub fn theta_sup(&self) -> T {
        self.theta[0].max(self.theta[1])
    }

    /// `Σ_k θ_k / h_k`, the explicit CFL weight of the Hamiltonian part.
    pub fn cfl_weight(&self, grid: &TorusGrid) -> T {
        (0..grid.dim())
            .map(|k| self.theta[k] * T::of_usize(grid.count(k)))
            .sum()
    }

    /// Whether theta dominates the sampled `|∂H/∂p_k|` on the box.
    pub fn is_monotone_for(&self, h: &HamiltonianSpec<T>, grid: &TorusGrid) -> bool {
        let need = sampled_dh_dp_sup(h, grid, self.gradient_box);
        (0..grid.dim()).all(|k| self.theta[k] >= need[k])
    }
}

fn box_lattice<T: Real>(dim: usize, bx: [T; 2]) -> Vec<VectorSample<T>> {
    let m = if dim == 1 {
        THETA_LATTICE_1D
    } else {
        THETA_LATTICE_2D
    };
    let coord = |k: usize, j: usize| -> T {
        bx[k] * (T::two() * T::of_usize(j) / T::of_usize(m - 1) - T::one())
    };
    if dim == 1 {
        (0..m).map(|j| [coord(0, j), T::zero()]).collect()
    } else {
        (0..m)
            .flat_map(|a| (0..m).map(move |b| (a, b)))
            .map(|(a, b)| [coord(0, a), coord(1, b)])
            .collect()
    }
}

/// `max |∂H/∂p_k|` over grid nodes and a lattice of the box `|p_k| ≤ P_k`.
pub fn sampled_dh_dp_sup<T: Real>(h: &HamiltonianSpec<T>, grid: &TorusGrid, bx: [T; 2]) -> [T; 2] {
    let lattice = box_lattice(grid.dim(), bx);
    let stride = grid.len().div_ceil(THETA_NODE_CAP).max(1);
    let mut out = [T::zero(); 2];
    for i in (0..grid.len()).step_by(stride) {
        let x = grid.point::<T>(i);
        for p in &lattice {
            for (k, o) in out.iter_mut().enumerate().take(grid.dim()) {
                *o = o.max(h.dh_dp(&x, p, k).abs());
            }
        }
    }
    out
}

/// Artificial viscosity certified on the box: `1.05 · max |∂H/∂p_k|`.
pub fn certify_theta<T: Real>(h: &HamiltonianSpec<T>, grid: &TorusGrid, bx: [T; 2]) -> [T; 2] {
    let s = sampled_dh_dp_sup(h, grid, bx);
    [s[0] * T::of(THETA_SAFETY), s[1] * T::of(THETA_SAFETY)]
}

/// Lax–Friedrichs numerical Hamiltonian.
pub fn lf_hamiltonian<T: Real>(
    h: &HamiltonianSpec<T>,
    x: &Point<T>,
    p_minus: &VectorSample<T>,
    p_plus: &VectorSample<T>,
    theta: &[T; 2],
) -> T {
    let mid = [
        (p_minus[0] + p_plus[0]) * T::half(),
        (p_minus[1] + p_plus[1]) * T::half(),
    ];
    let mut out = h.eval(x, &mid);
    for k in 0..2 {
        out -= theta[k] * (p_plus[k] - p_minus[k]) * T::half();
    }
    out
}

/// The discrete operator assembled for one (grid, H, A, θ).
pub struct Discretization<'a, T> {
    grid: TorusGrid,
    h: &'a HamiltonianSpec<T>,
    diffusion: DiffusionOperator<T>,
    theta: [T; 2],
    points: Vec<Point<T>>,
}

impl<'a, T: Real> Discretization<'a, T> {
    pub fn new(
        grid: &TorusGrid,
        h: &'a HamiltonianSpec<T>,
        a: &DiffusionSpec<T>,
        theta: [T; 2],
    ) -> Result<Self> {
        if a.dim() != grid.dim() {
            return Err(Error::InvalidInput(format!(
                "diffusion is {}-dimensional, grid is {}-dimensional",
                a.dim(),
                grid.dim()
            )));
        }
        let mut theta = theta;
        if grid.dim() == 1 {
            theta[1] = T::zero();
        }
        Ok(Self {
            grid: *grid,
            h,
            diffusion: DiffusionOperator::assemble(grid, a)?,
            theta,
            points: (0..grid.len()).map(|i| grid.point(i)).collect(),
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn hamiltonian(&self) -> &HamiltonianSpec<T> {
        self.h
    }

    pub fn diffusion(&self) -> &DiffusionOperator<T> {
        &self.diffusion
    }

    pub fn theta(&self) -> [T; 2] {
        self.theta
    }

    pub fn point(&self, i: usize) -> &Point<T> {
        &self.points[i]
    }

    /// Pseudo-time step `(ε + 2Σ a_kk,sup/h_k² + Σ θ_k/h_k)⁻¹` of the explicit monotone update.
    pub fn pseudo_time_step(&self, eps: T) -> T {
        let cfl: T = (0..self.grid.dim())
            .map(|k| self.theta[k] * T::of_usize(self.grid.count(k)))
            .sum();
        T::one() / (eps + self.diffusion.explicit_weight() + cfl)
    }

    #[inline]
    pub fn lf_at(&self, v: &[T], i: usize) -> T {
        let (pm, pp) = one_sided_from_slice(&self.grid, v, i);
        lf_hamiltonian(self.h, &self.points[i], &pm, &pp, &self.theta)
    }

    /// `out_i = Ĥ_i(v)`.
    pub fn hamiltonian_part(&self, v: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.lf_at(v, i);
        }
    }

    /// `out_i = ε (offset + v_i) − D_h(v)_i + Ĥ_i(v)`.
    ///
    /// Carrying a constant `offset` outside `v` keeps the differences of `v`
    /// free of the cancellation error a large constant part would cause.
    pub fn residual_into(&self, v: &[T], offset: T, eps: T, out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = eps * (offset + v[i]) - self.diffusion.apply_at(v, i) + self.lf_at(v, i);
        }
    }

    /// Sparse Jacobian of `residual_into` with respect to `v`, using differenced `∂H/∂p`.
    pub fn jacobian_matrix(&self, v: &[T], eps: T) -> CsrMatrix<T> {
        let n = self.grid.len();
        let dim = self.grid.dim();
        CsrMatrix::from_rows(
            n,
            (0..n).map(|i| {
                let row = self.diffusion.row(i);
                let mut entries = Vec::with_capacity(9);
                entries.push((i, eps - row.center));
                entries.extend(row.neighbors().iter().map(|&(j, w)| (j, -w)));
                let (pm, pp) = one_sided_from_slice(&self.grid, v, i);
                let mid = [(pm[0] + pp[0]) * T::half(), (pm[1] + pp[1]) * T::half()];
                for k in 0..dim {
                    let inv_h = T::of_usize(self.grid.count(k));
                    let dh = self.h.dh_dp(&self.points[i], &mid, k) * T::half();
                    let a_plus = dh - self.theta[k] * T::half();
                    let a_minus = dh + self.theta[k] * T::half();
                    entries.push((self.grid.shift(i, k, 1), a_plus * inv_h));
                    entries.push((self.grid.shift(i, k, -1), -a_minus * inv_h));
                    entries.push((i, (a_minus - a_plus) * inv_h));
                }
                entries
            }),
        )
    }
}

/// Nodewise residual `ε v − D_h v + Ĥ(v)`; zero exactly at the discrete solution.
pub fn residual<T: Real>(
    v: &ScalarField<T>,
    eps: T,
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    cfg: &SchemeConfig<T>,
) -> Result<ScalarField<T>> {
    let disc = Discretization::new(v.grid(), h, a, cfg.theta)?;
    let mut out = vec![T::zero(); v.grid().len()];
    disc.residual_into(v.values(), T::zero(), eps, &mut out);
    Ok(ScalarField::from_vec_unchecked(*v.grid(), out))
}

/// Probe step `10⁻⁶ (1 + |v|∞)` of the differenced Jacobian.
pub fn probe_step<T: Real>(v: &[T]) -> T {
    T::of(1e-6) * (T::one() + sup_norm(v))
}

/// Central difference of `map` at `v` along `dir`, with the perturbation
/// scaled so that its sup norm is `probe_step(v)`.
pub(crate) fn directional_difference<T: Real>(
    v: &[T],
    dir: &[T],
    mut map: impl FnMut(&[T], &mut [T]),
    out: &mut [T],
) {
    let dn = sup_norm(dir);
    if dn == T::zero() {
        out.iter_mut().for_each(|o| *o = T::zero());
        return;
    }
    let t = probe_step(v) / dn;
    let plus: Vec<T> = v.iter().zip(dir).map(|(a, d)| *a + t * *d).collect();
    let minus: Vec<T> = v.iter().zip(dir).map(|(a, d)| *a - t * *d).collect();
    let mut r_minus = vec![T::zero(); v.len()];
    map(&plus, out);
    map(&minus, &mut r_minus);
    let inv = T::one() / (t + t);
    for (o, m) in out.iter_mut().zip(&r_minus) {
        *o = (*o - *m) * inv;
    }
}

/// Matrix-free directional derivative of [`residual`] at `v` along `direction`.
pub fn jacobian_apply<T: Real>(
    v: &ScalarField<T>,
    direction: &ScalarField<T>,
    eps: T,
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    cfg: &SchemeConfig<T>,
) -> Result<ScalarField<T>> {
    let disc = Discretization::new(v.grid(), h, a, cfg.theta)?;
    let mut out = vec![T::zero(); v.grid().len()];
    directional_difference(
        v.values(),
        direction.values(),
        |z, o| disc.residual_into(z, T::zero(), eps, o),
        &mut out,
    );
    Ok(ScalarField::from_vec_unchecked(*v.grid(), out))
}

/// Largest one-sided difference quotient per axis.
pub fn gradient_sup<T: Real>(grid: &TorusGrid, v: &[T]) -> [T; 2] {
    let mut out = [T::zero(); 2];
    for i in 0..grid.len() {
        let (pm, pp) = one_sided_from_slice(grid, v, i);
        for k in 0..grid.dim() {
            out[k] = out[k].max(pm[k].abs()).max(pp[k].abs());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Coefficient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TAU: f64 = std::f64::consts::TAU;

    #[test]
    fn lf_is_consistent_and_matches_hand_value() {
        let h = HamiltonianSpec::power_plus(2.0, Coefficient::cosine(&[1], 1.0, 0.0));
        let x = [0.3, 0.0];
        let p = [0.7, 0.0];
        assert_eq!(lf_hamiltonian(&h, &x, &p, &p, &[5.0, 0.0]), h.eval(&x, &p));
        let h2 = HamiltonianSpec::<f64>::power(2.0);
        let v = lf_hamiltonian(&h2, &[0.9, 0.0], &[0.0, 0.0], &[2.0, 0.0], &[4.0, 0.0]);
        assert!((v + 3.0).abs() < 1e-14);
    }

    /// Brute scan over a `(p⁻, p⁺)` lattice in the box `|p| ≤ 2` for `|p|³`, `θ = 12`.
    #[test]
    fn lf_is_monotone_when_theta_dominates() {
        let h = HamiltonianSpec::<f64>::power(3.0);
        let theta = [12.0, 0.0];
        let grid: Vec<f64> = (0..=80).map(|i| -2.0 + 0.05 * i as f64).collect();
        for &pm in &grid {
            let mut prev = f64::INFINITY;
            for &pp in &grid {
                let v = lf_hamiltonian(&h, &[0.0, 0.0], &[pm, 0.0], &[pp, 0.0], &theta);
                assert!(v <= prev + 1e-12, "not nonincreasing in p+ at ({pm}, {pp})");
                prev = v;
            }
        }
        for &pp in &grid {
            let mut prev = f64::NEG_INFINITY;
            for &pm in &grid {
                let v = lf_hamiltonian(&h, &[0.0, 0.0], &[pm, 0.0], &[pp, 0.0], &theta);
                assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn theta_certification_covers_box() {
        let g = TorusGrid::line(32).unwrap();
        let h = HamiltonianSpec::<f64>::power(3.0);
        let th = certify_theta(&h, &g, [2.0, 0.0]);
        assert!(th[0] >= 12.0 && th[0] <= 12.0 * 1.06, "{:?}", th);
        let cfg = SchemeConfig::for_problem(&h, &g).with_gradient_box(&h, &g, [2.0, 0.0]);
        assert!(cfg.is_monotone_for(&h, &g));
        let g2 = TorusGrid::square(16).unwrap();
        let th2 = certify_theta(&HamiltonianSpec::<f64>::power(2.0), &g2, [1.0, 1.0]);
        assert!((th2[0] - 2.1).abs() < 1e-6 && (th2[1] - 2.1).abs() < 1e-6);
    }

    #[test]
    fn constant_solutions_have_zero_residual() {
        let g = TorusGrid::line(32).unwrap();
        let a = DiffusionSpec::identity(1);
        let h = HamiltonianSpec::power_plus(2.0, Coefficient::Constant(1.0));
        let cfg = SchemeConfig::for_problem(&h, &g);
        let r = residual(&ScalarField::constant(g, -1.0), 1.0, &h, &a, &cfg).unwrap();
        assert!(r.sup_norm() < 1e-15);
        let h0 = HamiltonianSpec::<f64>::power(2.0);
        for eps in [1.0, 0.1, 1e-3] {
            let r = residual(&ScalarField::zeros(g), eps, &h0, &a, &cfg).unwrap();
            assert_eq!(r.sup_norm(), 0.0);
        }
    }

    #[test]
    fn assembled_jacobian_matches_difference_quotient() {
        let g = TorusGrid::square(10).unwrap();
        let a = DiffusionSpec::constant_matrix(2, [[1.0, 0.3], [0.3, 0.8]]).unwrap();
        let h = HamiltonianSpec::power_plus(3.0, Coefficient::cosine(&[1, 1], 1.0, 0.0));
        let cfg = SchemeConfig::for_problem(&h, &g);
        let v = ScalarField::from_fn(g, |x: Point<f64>| {
            0.1 * (TAU * x[0]).sin() + 0.05 * (TAU * x[1]).cos()
        });
        let dir = ScalarField::from_fn(g, |x: Point<f64>| (TAU * (x[0] + 2.0 * x[1])).cos());
        let jv = jacobian_apply(&v, &dir, 0.5, &h, &a, &cfg).unwrap();
        let disc = Discretization::new(&g, &h, &a, cfg.theta).unwrap();
        let m = disc.jacobian_matrix(v.values(), 0.5);
        let mut mv = vec![0.0; g.len()];
        m.matvec(dir.values(), &mut mv);
        let scale = jv.sup_norm();
        let err = jv
            .values()
            .iter()
            .zip(&mv)
            .map(|(p, q): (&f64, &f64)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6 * scale, "{err} vs {scale}");
    }

    #[test]
    fn jacobian_apply_examples() {
        let g = TorusGrid::line(64).unwrap();
        let a = DiffusionSpec::identity(1);
        let h = HamiltonianSpec::power_plus(2.0, Coefficient::cosine(&[1], 1.0, 0.0));
        let cfg = SchemeConfig::for_problem(&h, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = ScalarField::new(g, (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let zero = jacobian_apply(&v, &ScalarField::zeros(g), 0.1, &h, &a, &cfg).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);

        // Against the central-difference formula at two other probe sizes.
        let dir = ScalarField::new(g, (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let jv = jacobian_apply(&v, &dir, 0.1, &h, &a, &cfg).unwrap();
        for t in [1e-4, 1e-5] {
            let plus = ScalarField::new(
                g,
                v.values()
                    .iter()
                    .zip(dir.values())
                    .map(|(a, b)| a + t * b)
                    .collect(),
            )
            .unwrap();
            let minus = ScalarField::new(
                g,
                v.values()
                    .iter()
                    .zip(dir.values())
                    .map(|(a, b)| a - t * b)
                    .collect(),
            )
            .unwrap();
            let rp = residual(&plus, 0.1, &h, &a, &cfg).unwrap();
            let rm = residual(&minus, 0.1, &h, &a, &cfg).unwrap();
            let fd: Vec<f64> = rp
                .values()
                .iter()
                .zip(rm.values())
                .map(|(p, m)| (p - m) / (2.0 * t))
                .collect();
            let err = jv
                .values()
                .iter()
                .zip(&fd)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-6 * jv.sup_norm(), "t={t}: {err}");
        }

        // Affine residual (sublinear H): exact up to round-off.
        let hl = HamiltonianSpec::sublinear(
            vec![Coefficient::cosine(&[1], 0.5, 1.0)],
            Coefficient::Constant(0.3),
        );
        let cfg_l = SchemeConfig::for_problem(&hl, &g);
        let jv = jacobian_apply(&v, &dir, 0.1, &hl, &a, &cfg_l).unwrap();
        let r_dir = residual(&dir, 0.1, &hl, &a, &cfg_l).unwrap();
        let r_zero = residual(&ScalarField::zeros(g), 0.1, &hl, &a, &cfg_l).unwrap();
        for i in 0..64 {
            let lin = r_dir.at(i) - r_zero.at(i);
            assert!((jv.at(i) - lin).abs() <= 1e-7 * (1.0 + lin.abs()));
        }
    }
}
