//! Discounted problem `ε v − tr(A D²v) + H(x, Dv) = 0` on the torus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::linalg::CsrMatrix;
use crate::newton::{newton_solve, NewtonOptions, NonlinearSystem, SolveMethod};
use crate::problem::{DiffusionSpec, HamiltonianSpec};
use crate::scalar::{sup_norm, Real};
use crate::scheme::{gradient_sup, Discretization, SchemeConfig};

/// Rounds of gradient-box enlargement before giving up on certifying theta.
const MAX_BOX_ROUNDS: usize = 6;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StationaryReport<T> {
    pub solution: ScalarField<T>,
    pub eps: T,
    pub residual_sup: T,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub method: SolveMethod,
    /// Scheme actually used, after any box enlargement.
    pub scheme: SchemeConfig<T>,
    pub gradient_sup: [T; 2],
    pub box_rounds: usize,
}

impl<T: Real> StationaryReport<T> {
    /// `v − v(0)`.
    pub fn anchored(&self) -> ScalarField<T> {
        self.solution.anchored(0)
    }

    /// `ε |v|∞`, bounded by `|H(·,0)|∞` through the discrete maximum principle.
    pub fn scaled_sup(&self) -> T {
        self.eps * self.solution.sup_norm()
    }

    pub fn oscillation(&self) -> T {
        self.solution.max() - self.solution.min()
    }
}

/// Unknowns `w` with `v = offset + w`, recentred so that `w(0) = 0`.
pub(crate) struct DiscountedSystem<'a, T> {
    pub disc: Discretization<'a, T>,
    pub eps: T,
    pub offset: T,
}

impl<T: Real> NonlinearSystem<T> for DiscountedSystem<'_, T> {
    fn residual(&self, z: &[T], out: &mut [T]) {
        self.disc.residual_into(z, self.offset, self.eps, out);
    }

    fn preconditioner_matrix(&self, z: &[T]) -> CsrMatrix<T> {
        self.disc.jacobian_matrix(z, self.eps)
    }

    fn relax(&self, z: &mut [T], steps: usize) {
        let dt = self.disc.pseudo_time_step(self.eps);
        let mut r = vec![T::zero(); z.len()];
        for _ in 0..steps {
            self.residual(z, &mut r);
            for (zi, ri) in z.iter_mut().zip(&r) {
                *zi -= dt * *ri;
            }
        }
    }

    fn recenter(&mut self, z: &mut [T]) {
        let s = z[0];
        self.offset += s;
        z.iter_mut().for_each(|v| *v -= s);
    }
}

pub(crate) fn newton_options<T: Real>(cfg: &SchemeConfig<T>) -> NewtonOptions<T> {
    NewtonOptions::new(cfg.tol_residual, cfg.max_newton, cfg.damping)
}

/// Box for the next round, or `None` when the differences fit the current one.
pub(crate) fn enlarged_box<T: Real>(
    grid: &TorusGrid,
    cfg: &SchemeConfig<T>,
    z: &[T],
) -> Option<[T; 2]> {
    grow_box(cfg, gradient_sup(grid, z), grid.dim())
}

/// Doubles the measured gradient on every axis that left the box.
pub(crate) fn grow_box<T: Real>(cfg: &SchemeConfig<T>, g: [T; 2], dim: usize) -> Option<[T; 2]> {
    if !cfg.adapt_box {
        return None;
    }
    let mut out = cfg.gradient_box;
    let mut grew = false;
    for k in 0..dim {
        if g[k] > cfg.gradient_box[k] {
            out[k] = (T::two() * g[k]).max(T::two() * cfg.gradient_box[k]);
            grew = true;
        }
    }
    grew.then_some(out)
}

/// Solves the discounted problem with the monotone scheme.
///
/// `init` seeds Newton; by default the constant `−mean H(·,0)/ε` is used.
pub fn solve_discounted<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    eps: T,
    cfg: &SchemeConfig<T>,
    grid: &TorusGrid,
    init: Option<&ScalarField<T>>,
) -> Result<StationaryReport<T>> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!(
            "discount must be positive, got {eps}"
        )));
    }
    if let Some(v) = init {
        if v.grid() != grid {
            return Err(Error::InvalidInput(
                "initial guess lives on a different grid".into(),
            ));
        }
    }
    let mut cfg = cfg.clone();
    let (mut offset, mut z) = match init {
        Some(v) => {
            let s = v.at(0);
            (s, v.values().iter().map(|x| *x - s).collect::<Vec<_>>())
        }
        None => {
            let disc = Discretization::new(grid, h, a, cfg.theta)?;
            let zero = vec![T::zero(); grid.len()];
            let mut h0 = vec![T::zero(); grid.len()];
            disc.hamiltonian_part(&zero, &mut h0);
            let mean = h0.iter().copied().sum::<T>() / T::of_usize(grid.len());
            (-mean / eps, zero)
        }
    };

    for round in 0..=MAX_BOX_ROUNDS {
        let disc = Discretization::new(grid, h, a, cfg.theta)?;
        let mut sys = DiscountedSystem { disc, eps, offset };
        let outcome = newton_solve(&mut sys, &mut z, &newton_options(&cfg));
        offset = sys.offset;
        let next = enlarged_box(grid, &cfg, &z);
        match (outcome.converged, next) {
            (_, Some(bx)) if round < MAX_BOX_ROUNDS => {
                cfg = cfg.with_gradient_box(h, grid, bx);
                if !outcome.converged || z.iter().any(|v| !v.is_finite()) {
                    z.iter_mut().for_each(|v| *v = T::zero());
                }
            }
            (true, _) => {
                let values: Vec<T> = z.iter().map(|w| offset + *w).collect();
                let gradient = gradient_sup(grid, &z);
                return Ok(StationaryReport {
                    solution: ScalarField::new(*grid, values)?,
                    eps,
                    residual_sup: outcome.residual,
                    iterations: outcome.iterations,
                    linear_iterations: outcome.linear_iterations,
                    method: outcome.method,
                    scheme: cfg,
                    gradient_sup: gradient,
                    box_rounds: round,
                });
            }
            (false, _) => {
                return Err(Error::NoConvergence {
                    iterations: outcome.iterations,
                    residual: outcome.residual.as_f64(),
                    target: cfg.tol_residual.as_f64(),
                })
            }
        }
    }
    unreachable!("the last box round always returns")
}

/// Sup norm of the discounted residual of `v`.
pub fn discounted_residual_sup<T: Real>(
    v: &ScalarField<T>,
    eps: T,
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    cfg: &SchemeConfig<T>,
) -> Result<T> {
    let r = crate::scheme::residual(v, eps, h, a, cfg)?;
    Ok(sup_norm(r.values()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DegenerateLadder<T> {
    pub q_schedule: Vec<T>,
    pub reports: Vec<StationaryReport<T>>,
    /// `(m−2)/(m−1)` with `m` the coercivity exponent.
    pub holder_gamma: T,
    pub holder: Vec<T>,
    /// `sup |v_{q_{j+1}} − v_{q_j}|`.
    pub increments: Vec<T>,
    /// `(q₂ v₂ − q₁ v₁)/(q₂ − q₁)` from the last two rungs, exact when `v_q = v + a/q`.
    pub extrapolated: ScalarField<T>,
}

/// Solves the discounted problem with `A + I/q` and `H + |p|^{M+1}/q` for
/// each `q`, warm-starting each rung from the previous one.
///
/// The Hölder exponent uses the coercivity exponent `m` from the
/// Hamiltonian's metadata, falling back to `M`.
#[allow(clippy::too_many_arguments)]
pub fn solve_degenerate_via_regularization<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    eps: T,
    q_schedule: &[T],
    growth_m: T,
    cfg: &SchemeConfig<T>,
    grid: &TorusGrid,
) -> Result<DegenerateLadder<T>> {
    if q_schedule.is_empty()
        || q_schedule.windows(2).any(|w| !(w[1] > w[0]))
        || !(q_schedule[0] > T::zero())
    {
        return Err(Error::InvalidInput(
            "q schedule must be positive and increasing".into(),
        ));
    }
    let m = h.meta.k.unwrap_or(growth_m);
    let holder_gamma = (m - T::two()) / (m - T::one());
    if !(holder_gamma > T::zero() && holder_gamma <= T::one()) {
        return Err(Error::InvalidInput(format!(
            "coercivity exponent {m} must exceed 2"
        )));
    }
    let mut reports: Vec<StationaryReport<T>> = Vec::with_capacity(q_schedule.len());
    let mut holder = Vec::with_capacity(q_schedule.len());
    let mut increments = Vec::new();
    for &q in q_schedule {
        let hq = h.clone().regularized(q, growth_m + T::one());
        let aq = a.regularized(T::one() / q);
        let box_ = reports
            .last()
            .map_or(cfg.gradient_box, |r| r.scheme.gradient_box);
        let cfg_q = cfg.clone().with_gradient_box(&hq, grid, box_);
        let init = reports.last().map(|r| &r.solution);
        let rep = solve_discounted(&hq, &aq, eps, &cfg_q, grid, init)?;
        if let Some(prev) = reports.last() {
            increments.push(rep.solution.sup_distance(&prev.solution));
        }
        holder.push(crate::regularity::holder_seminorm(
            &rep.solution,
            holder_gamma,
        )?);
        reports.push(rep);
    }
    let extrapolated = match reports.as_slice() {
        [.., r1, r2] => {
            let (q1, q2) = (
                q_schedule[q_schedule.len() - 2],
                q_schedule[q_schedule.len() - 1],
            );
            let vals = r1
                .solution
                .values()
                .iter()
                .zip(r2.solution.values())
                .map(|(v1, v2)| (q2 * *v2 - q1 * *v1) / (q2 - q1))
                .collect();
            ScalarField::new(*grid, vals)?
        }
        [only] => only.solution.clone(),
        [] => unreachable!("schedule is nonempty"),
    };
    Ok(DegenerateLadder {
        q_schedule: q_schedule.to_vec(),
        reports,
        holder_gamma,
        holder,
        increments,
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Coefficient;

    fn cos_problem(dim: usize) -> HamiltonianSpec<f64> {
        let freq = if dim == 1 { vec![1] } else { vec![1, 1] };
        HamiltonianSpec::power_plus(2.0, Coefficient::cosine(&freq, 1.0, 0.0))
    }

    #[test]
    fn constant_hamiltonian_gives_constant_solution() {
        let g = TorusGrid::line(32).unwrap();
        let h = HamiltonianSpec::power_plus(2.0, Coefficient::Constant(1.0));
        let a = DiffusionSpec::identity(1);
        let cfg = SchemeConfig::for_problem(&h, &g);
        let r = solve_discounted(&h, &a, 1.0, &cfg, &g, None).unwrap();
        for v in r.solution.values().iter().copied() {
            assert!((v + 1.0_f64).abs() < 1e-10);
        }
        let h0 = HamiltonianSpec::<f64>::power(2.0);
        for eps in [1.0, 0.1, 1e-3] {
            let r = solve_discounted(&h0, &a, eps, &cfg, &g, None).unwrap();
            assert!(r.solution.sup_norm() < 1e-10);
        }
    }

    #[test]
    fn solution_is_independent_of_initial_guess() {
        let g = TorusGrid::line(64).unwrap();
        let h = cos_problem(1);
        let a = DiffusionSpec::identity(1);
        let cfg = SchemeConfig::for_problem(&h, &g);
        let r0 = solve_discounted(&h, &a, 0.1, &cfg, &g, None).unwrap();
        let init = ScalarField::from_fn(g, |x: crate::grid::Point<f64>| {
            3.0 * (std::f64::consts::TAU * x[0]).sin() - 7.0
        });
        let r1 = solve_discounted(&h, &a, 0.1, &cfg, &g, Some(&init)).unwrap();
        assert!(r0.solution.sup_distance(&r1.solution) < 1e-8);
        assert!(r0.residual_sup <= cfg.tol_residual);
    }

    #[test]
    fn maximum_principle_bounds_scaled_solution() {
        let g = TorusGrid::square(16).unwrap();
        let h = cos_problem(2);
        let a = DiffusionSpec::constant_matrix(2, [[1.0, 0.2], [0.2, 0.7]]).unwrap();
        let cfg = SchemeConfig::for_problem(&h, &g);
        let h0 = h.h0_sup(&g);
        for eps in [1.0, 0.1, 0.01] {
            let r = solve_discounted(&h, &a, eps, &cfg, &g, None).unwrap();
            assert!(r.scaled_sup() <= h0 + 1e-8, "eps={eps}: {}", r.scaled_sup());
        }
    }

    #[test]
    fn box_grows_when_differences_leave_it() {
        let g = TorusGrid::line(64).unwrap();
        let h = HamiltonianSpec::power_plus(2.0, Coefficient::cosine(&[1], 8.0, 0.0));
        let a = DiffusionSpec::scaled(1, 0.05);
        let cfg = SchemeConfig::for_problem(&h, &g);
        let r = solve_discounted(&h, &a, 0.5, &cfg, &g, None).unwrap();
        assert!(r.box_rounds > 0);
        assert!(r.gradient_sup[0] <= r.scheme.gradient_box[0]);
        assert!(r.scheme.is_monotone_for(&h, &g));
    }

    #[test]
    fn ladder_for_x_independent_hamiltonian_is_flat() {
        let g = TorusGrid::line(32).unwrap();
        let h = HamiltonianSpec::power_plus(3.0, Coefficient::Constant(0.5));
        let a = DiffusionSpec::zero(1);
        let cfg = SchemeConfig::for_problem(&h, &g);
        let l =
            solve_degenerate_via_regularization(&h, &a, 0.1, &[10.0, 100.0, 1000.0], 3.0, &cfg, &g)
                .unwrap();
        assert!((l.holder_gamma - 0.5f64).abs() < 1e-15);
        assert!(l.increments.iter().all(|d| *d < 1e-9));
        for &v in l.extrapolated.values() {
            assert!((v + 5.0).abs() < 1e-8);
        }
    }

    #[test]
    fn ladder_approaches_the_uniformly_elliptic_solution() {
        let g = TorusGrid::line(64).unwrap();
        let h = HamiltonianSpec::power_plus(3.0, Coefficient::cosine(&[1], 1.0, 0.0));
        let a = DiffusionSpec::identity(1);
        let cfg = SchemeConfig::for_problem(&h, &g);
        let exact = solve_discounted(&h, &a, 0.5, &cfg, &g, None)
            .unwrap()
            .solution;
        let l = solve_degenerate_via_regularization(&h, &a, 0.5, &[10.0, 1000.0], 3.0, &cfg, &g)
            .unwrap();
        let gaps: Vec<f64> = l
            .reports
            .iter()
            .map(|r| r.solution.sup_distance(&exact))
            .collect();
        assert!(gaps[1] < gaps[0] && gaps[1] <= 10.0 * gaps[0]);
    }

    #[test]
    fn rejects_bad_discount() {
        let g = TorusGrid::line(16).unwrap();
        let h = cos_problem(1);
        let cfg = SchemeConfig::for_problem(&h, &g);
        let a = DiffusionSpec::identity(1);
        assert!(solve_discounted(&h, &a, 0.0, &cfg, &g, None).is_err());
    }
}
