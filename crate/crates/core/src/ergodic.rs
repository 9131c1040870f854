//! Ergodic problem `−tr(A D²v⁰) + H(x, Dv⁰) = c`, by vanishing discount and
//! by Newton on the augmented unknown `(c, v⁰)` with `v⁰(0) = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::linalg::CsrMatrix;
use crate::newton::{newton_solve, NonlinearSystem, SolveMethod};
use crate::problem::{DiffusionSpec, HamiltonianSpec};
use crate::scalar::{sup_norm, Real};
use crate::scheme::{Discretization, SchemeConfig};
use crate::stationary::{enlarged_box, newton_options, solve_discounted};

/// Normalization node.
pub const ANCHOR: usize = 0;

const MAX_BOX_ROUNDS: usize = 6;

pub fn default_eps_schedule<T: Real>() -> Vec<T> {
    [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001]
        .iter()
        .map(|&e| T::of(e))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErgodicRoute {
    VanishingDiscount,
    Direct,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConvergenceRow<T> {
    /// Discount for the vanishing route, Newton iteration for the direct one.
    pub eps: T,
    pub c_estimate: T,
    pub sup_increment: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ErgodicSolution<T> {
    pub c: T,
    /// Normalized so that `v0(ANCHOR) = 0`.
    pub v0: ScalarField<T>,
    pub route: ErgodicRoute,
    pub convergence_table: Vec<ConvergenceRow<T>>,
    /// `sup |−D_h v0 + Ĥ(v0) − c|` for the scheme in `scheme`.
    pub residual_sup: T,
    pub scheme: SchemeConfig<T>,
    pub method: SolveMethod,
}

impl<T: Real> ErgodicSolution<T> {
    pub fn write_table_csv(&self, path: &Path) -> Result<()> {
        write_convergence_csv(path, &self.convergence_table)
    }
}

pub fn write_convergence_csv<T: Real>(path: &Path, rows: &[ConvergenceRow<T>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["eps", "c_estimate", "sup_increment"])?;
    for r in rows {
        w.write_record([
            format!("{:e}", r.eps),
            format!("{:e}", r.c_estimate),
            format!("{:e}", r.sup_increment),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sup norm of `−D_h v + Ĥ(v) − c`.
pub fn ergodic_residual<T: Real>(
    v: &ScalarField<T>,
    c: T,
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    cfg: &SchemeConfig<T>,
) -> Result<T> {
    let disc = Discretization::new(v.grid(), h, a, cfg.theta)?;
    let mut out = vec![T::zero(); v.grid().len()];
    disc.residual_into(v.values(), T::zero(), T::zero(), &mut out);
    Ok(out.iter().fold(T::zero(), |m, r| m.max((*r - c).abs())))
}

/// Unknown `z` holds `c` in the anchor slot and `v⁰` elsewhere.
struct ErgodicSystem<'a, T> {
    disc: Discretization<'a, T>,
}

impl<T: Real> ErgodicSystem<'_, T> {
    fn split(z: &[T]) -> (T, Vec<T>) {
        let mut w = z.to_vec();
        w[ANCHOR] = T::zero();
        (z[ANCHOR], w)
    }
}

impl<T: Real> NonlinearSystem<T> for ErgodicSystem<'_, T> {
    fn residual(&self, z: &[T], out: &mut [T]) {
        let (c, w) = Self::split(z);
        self.disc.residual_into(&w, T::zero(), T::zero(), out);
        out.iter_mut().for_each(|o| *o -= c);
    }

    /// Jacobian in `v⁰` with the anchor column replaced by `−e_anchor`.
    ///
    /// The true anchor column is `−𝟙`, so the two differ by a rank-one term
    /// and GMRES absorbs the difference in a couple of iterations.
    fn preconditioner_matrix(&self, z: &[T]) -> CsrMatrix<T> {
        let (_, w) = Self::split(z);
        let j = self.disc.jacobian_matrix(&w, T::zero());
        CsrMatrix::from_rows(
            j.dim(),
            (0..j.dim()).map(|i| {
                let mut row: Vec<(usize, T)> = j.row(i).filter(|&(col, _)| col != ANCHOR).collect();
                if i == ANCHOR {
                    row.push((ANCHOR, -T::one()));
                }
                row
            }),
        )
    }

    /// Relative value iteration: an explicit monotone step, re-anchored.
    fn relax(&self, z: &mut [T], steps: usize) {
        let dt = self.disc.pseudo_time_step(T::zero());
        let (_, mut w) = Self::split(z);
        let mut f = vec![T::zero(); w.len()];
        let mut c = z[ANCHOR];
        for _ in 0..steps {
            self.disc.residual_into(&w, T::zero(), T::zero(), &mut f);
            c = f[ANCHOR];
            for (wi, fi) in w.iter_mut().zip(&f) {
                *wi -= dt * (*fi - c);
            }
            w[ANCHOR] = T::zero();
        }
        z.copy_from_slice(&w);
        z[ANCHOR] = c;
    }
}

/// Newton on `(c, v⁰)`; `cfg.theta` must be certified for the gradient box.
pub fn solve_direct<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    cfg: &SchemeConfig<T>,
    grid: &TorusGrid,
) -> Result<ErgodicSolution<T>> {
    let mut cfg = cfg.clone();
    let mut z = vec![T::zero(); grid.len()];
    {
        let disc = Discretization::new(grid, h, a, cfg.theta)?;
        let zero = vec![T::zero(); grid.len()];
        let mut h0 = vec![T::zero(); grid.len()];
        disc.hamiltonian_part(&zero, &mut h0);
        z[ANCHOR] = h0.iter().copied().sum::<T>() / T::of_usize(grid.len());
    }
    let mut table = Vec::new();
    for round in 0..=MAX_BOX_ROUNDS {
        let disc = Discretization::new(grid, h, a, cfg.theta)?;
        let mut sys = ErgodicSystem { disc };
        let outcome = newton_solve(&mut sys, &mut z, &newton_options(&cfg));
        let offset = table.len();
        table.extend(
            outcome
                .history
                .iter()
                .enumerate()
                .map(|(k, s)| ConvergenceRow {
                    eps: T::of_usize(offset + k + 1),
                    c_estimate: s[0],
                    sup_increment: s[1],
                }),
        );
        let (c, w) = ErgodicSystem::<T>::split(&z);
        let next = enlarged_box(grid, &cfg, &w);
        match (outcome.converged, next) {
            (_, Some(bx)) if round < MAX_BOX_ROUNDS => {
                cfg = cfg.with_gradient_box(h, grid, bx);
                if !outcome.converged || z.iter().any(|v| !v.is_finite()) {
                    z.iter_mut().for_each(|v| *v = T::zero());
                }
            }
            (true, _) => {
                return Ok(ErgodicSolution {
                    c,
                    v0: ScalarField::new(*grid, w)?,
                    route: ErgodicRoute::Direct,
                    convergence_table: table,
                    residual_sup: outcome.residual,
                    scheme: cfg,
                    method: outcome.method,
                })
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

/// Discounted solves along a decreasing schedule, warm-started, with `c`
/// extrapolated linearly in `ε` from the last two points.
pub fn solve_vanishing_discount<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    eps_schedule: &[T],
    cfg: &SchemeConfig<T>,
    grid: &TorusGrid,
) -> Result<ErgodicSolution<T>> {
    if eps_schedule.len() < 2 {
        return Err(Error::InvalidInput(
            "the discount schedule needs at least two points".into(),
        ));
    }
    if eps_schedule.windows(2).any(|w| !(w[1] < w[0]))
        || !(eps_schedule[eps_schedule.len() - 1] > T::zero())
    {
        return Err(Error::InvalidInput(
            "the discount schedule must be positive and strictly decreasing".into(),
        ));
    }
    let mut cfg = cfg.clone();
    let mut table: Vec<ConvergenceRow<T>> = Vec::new();
    let mut prev: Option<(T, ScalarField<T>, T)> = None;
    let mut method = SolveMethod::Newton;
    for &eps in eps_schedule {
        let init = prev
            .as_ref()
            .map(|(pe, v0, anchor)| v0.map(|x| x + *pe * *anchor / eps));
        let rep = solve_discounted(h, a, eps, &cfg, grid, init.as_ref())?;
        if rep.method != SolveMethod::Newton {
            method = rep.method;
        }
        cfg = rep.scheme.clone();
        let anchor = rep.solution.at(ANCHOR);
        let v0 = rep.anchored();
        let inc = match &prev {
            Some((_, p, _)) => v0.sup_distance(p),
            None => v0.sup_norm(),
        };
        table.push(ConvergenceRow {
            eps,
            c_estimate: -eps * anchor,
            sup_increment: inc,
        });
        prev = Some((eps, v0, anchor));
    }
    let k = table.len();
    if k >= 3 {
        let (previous, current) = (table[k - 2].sup_increment, table[k - 1].sup_increment);
        let floor = T::of(10.0) * cfg.tol_residual;
        if current > previous && current > floor {
            return Err(Error::NonCauchy {
                previous: previous.as_f64(),
                current: current.as_f64(),
            });
        }
    }
    let (r1, r2) = (&table[k - 2], &table[k - 1]);
    let c = (r1.eps * r2.c_estimate - r2.eps * r1.c_estimate) / (r1.eps - r2.eps);
    let (_, v0, _) = prev.expect("schedule is nonempty");
    let residual_sup = ergodic_residual(&v0, c, h, a, &cfg)?;
    Ok(ErgodicSolution {
        c,
        v0,
        route: ErgodicRoute::VanishingDiscount,
        convergence_table: table,
        residual_sup,
        scheme: cfg,
        method,
    })
}

/// `sup_x |v0_a − v0_b|` after both are anchored.
pub fn v0_gap<T: Real>(a: &ErgodicSolution<T>, b: &ErgodicSolution<T>) -> T {
    let d: Vec<T> =
        a.v0.values()
            .iter()
            .zip(b.v0.values())
            .map(|(x, y)| *x - *y)
            .collect();
    sup_norm(&d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Coefficient;

    #[test]
    fn constant_hamiltonian_gives_its_value() {
        let g = TorusGrid::line(32).unwrap();
        let h = HamiltonianSpec::power_plus(2.0, Coefficient::Constant(1.0));
        let a = DiffusionSpec::identity(1);
        let cfg = SchemeConfig::for_problem(&h, &g);
        let d = solve_direct(&h, &a, &cfg, &g).unwrap();
        assert!((d.c - 1.0f64).abs() < 1e-10 && d.v0.sup_norm() < 1e-10);
        let v = solve_vanishing_discount(&h, &a, &default_eps_schedule(), &cfg, &g).unwrap();
        assert!((v.c - 1.0f64).abs() < 1e-8 && v.v0.sup_norm() < 1e-8);
        let h3 = HamiltonianSpec::power_plus(3.0, Coefficient::Constant(-2.5));
        let d3 = solve_direct(&h3, &a, &SchemeConfig::for_problem(&h3, &g), &g).unwrap();
        assert!((d3.c + 2.5f64).abs() < 1e-10);
    }

    #[test]
    fn shifting_the_potential_shifts_c() {
        let g = TorusGrid::line(64).unwrap();
        let a = DiffusionSpec::identity(1);
        let h = HamiltonianSpec::power_plus(2.0, Coefficient::cosine(&[1], 1.0, 0.0));
        let h5 = HamiltonianSpec::power_plus(2.0, Coefficient::cosine(&[1], 1.0, 5.0));
        let cfg = SchemeConfig::for_problem(&h, &g);
        let s = solve_direct(&h, &a, &cfg, &g).unwrap();
        let s5 = solve_direct(&h5, &a, &s.scheme, &g).unwrap();
        assert!((s5.c - s.c - 5.0f64).abs() < 1e-8);
        assert!(s5.v0.sup_distance(&s.v0) < 1e-8);
        assert!(s.residual_sup <= cfg.tol_residual);
        assert_eq!(s.v0.at(ANCHOR), 0.0);
    }

    #[test]
    fn routes_agree() {
        let g = TorusGrid::line(64).unwrap();
        let a = DiffusionSpec::identity(1);
        let h = HamiltonianSpec::power_plus(3.0, Coefficient::cosine(&[1], 1.0, 0.0));
        let cfg = SchemeConfig::for_problem(&h, &g);
        let d: ErgodicSolution<f64> = solve_direct(&h, &a, &cfg, &g).unwrap();
        let v = solve_vanishing_discount(&h, &a, &default_eps_schedule(), &cfg, &g).unwrap();
        let hh: f64 = 1.0 / 64.0;
        assert!(
            (d.c - v.c).abs() <= f64::max(1e-3, 5.0 * hh),
            "{} vs {}",
            d.c,
            v.c
        );
        assert!(v0_gap(&d, &v) <= f64::max(1e-2, 10.0 * hh));
    }

    #[test]
    fn rejects_bad_schedules() {
        let g = TorusGrid::line(16).unwrap();
        let a = DiffusionSpec::identity(1);
        let h = HamiltonianSpec::<f64>::power(2.0);
        let cfg = SchemeConfig::for_problem(&h, &g);
        assert!(solve_vanishing_discount(&h, &a, &[0.1, 0.3], &cfg, &g).is_err());
        assert!(solve_vanishing_discount(&h, &a, &[0.1], &cfg, &g).is_err());
    }
}
