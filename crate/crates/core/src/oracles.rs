//! Independent reference computations used to validate the solvers.

use serde::{Deserialize, Serialize};

use crate::ergodic::{solve_direct, ANCHOR};
use crate::error::{Error, Result};
use crate::grid::{DiffusionOperator, ScalarField};
use crate::linalg::{conjugate_gradient, CsrMatrix};
use crate::problem::{DiffusionSpec, HamiltonianSpec};
use crate::scalar::Real;
use crate::scheme::SchemeConfig;
use crate::stationary::solve_discounted;

/// Pair budget of [`brute_pair_max`].
pub const BRUTE_PAIR_CAP: usize = 100_000_000;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    HopfCole,
    FineGrid,
    ClosedForm,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OracleResult<T> {
    pub kind: OracleKind,
    pub c: Option<T>,
    pub field: Option<ScalarField<T>>,
    pub error_estimate: T,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Ergodic pair of `−ν Δv + |Dv|² + ℓ = c` through `v = −ν log φ`.
///
/// `φ` is the ground state of `−ν²Δ_h − ℓ`, found by inverse iteration on
/// the operator shifted by `max ℓ + 1`, which makes it symmetric positive
/// definite with the wanted eigenvalue at the bottom. `error_estimate` is the
/// eigen-residual `|Bφ − μφ|₂`, a bound on the eigenvalue error of the
/// discrete operator.
pub fn hopf_cole_ergodic<T: Real>(ell: &ScalarField<T>, nu: T) -> Result<OracleResult<T>> {
    if !(nu > T::zero()) {
        return Err(Error::InvalidInput(format!(
            "viscosity must be positive, got {nu}"
        )));
    }
    let grid = *ell.grid();
    let n = grid.len();
    let lap = DiffusionOperator::assemble(&grid, &DiffusionSpec::scaled(grid.dim(), nu * nu))?;
    let shift = ell.max() + T::one();
    let base = lap.affine_matrix(shift, -T::one());
    let b = CsrMatrix::from_rows(
        n,
        (0..n).map(|i| {
            let mut row: Vec<(usize, T)> = base.row(i).collect();
            row.push((i, -ell.at(i)));
            row
        }),
    );

    let norm = |x: &[T]| dot(x, x).sqrt();
    let mut phi = vec![T::one(); n];
    let s = norm(&phi);
    phi.iter_mut().for_each(|p| *p /= s);
    let mut next = phi.clone();
    let mut bphi = vec![T::zero(); n];
    let mut mu = T::zero();
    let mut converged = false;
    for _ in 0..POWER_MAX_ITER {
        let stats = conjugate_gradient(&b, &phi, &mut next, T::of(1e-13), 10 * n + 100);
        if !stats.converged && stats.residual > T::of(1e-9) * norm(&phi) {
            return Err(Error::LinearSolveFailure(format!(
                "inner solve stalled at residual {:e}",
                stats.residual.as_f64()
            )));
        }
        let s = norm(&next);
        next.iter_mut().for_each(|p| *p /= s);
        b.matvec(&next, &mut bphi);
        let new_mu = dot(&next, &bphi);
        phi.copy_from_slice(&next);
        let done = (new_mu - mu).abs() <= T::of(POWER_TOL) * new_mu.abs();
        mu = new_mu;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: POWER_MAX_ITER,
            residual: mu.as_f64(),
            target: POWER_TOL,
        });
    }
    if phi[0] < T::zero() {
        phi.iter_mut().for_each(|p| *p = -*p);
    }
    if let Some((node, &value)) = phi.iter().enumerate().find(|(_, p)| !(**p > T::zero())) {
        return Err(Error::NonPositiveEigenvector {
            node,
            value: value.as_f64(),
        });
    }
    let residual: Vec<T> = bphi.iter().zip(&phi).map(|(bp, p)| *bp - mu * *p).collect();
    let lambda = mu - shift;
    let log0 = phi[ANCHOR].ln();
    let field = phi.iter().map(|p| -nu * (p.ln() - log0)).collect();
    Ok(OracleResult {
        kind: OracleKind::HopfCole,
        c: Some(-lambda),
        field: Some(ScalarField::new(grid, field)?),
        error_estimate: norm(&residual),
    })
}

/// A problem that [`fine_grid_reference`] can re-solve on a refined grid.
#[derive(Clone, Copy, Debug)]
pub enum ReferenceProblem<'a, T> {
    Discounted {
        h: &'a HamiltonianSpec<T>,
        a: &'a DiffusionSpec<T>,
        eps: T,
    },
    Ergodic {
        h: &'a HamiltonianSpec<T>,
        a: &'a DiffusionSpec<T>,
    },
}

impl<T: Real> ReferenceProblem<'_, T> {
    fn solve(
        &self,
        cfg: &SchemeConfig<T>,
        grid: &crate::grid::TorusGrid,
    ) -> Result<(Option<T>, ScalarField<T>)> {
        match *self {
            ReferenceProblem::Discounted { h, a, eps } => {
                Ok((None, solve_discounted(h, a, eps, cfg, grid, None)?.solution))
            }
            ReferenceProblem::Ergodic { h, a } => {
                let s = solve_direct(h, a, cfg, grid)?;
                Ok((Some(s.c), s.v0))
            }
        }
    }

    fn hamiltonian(&self) -> &HamiltonianSpec<T> {
        match self {
            ReferenceProblem::Discounted { h, .. } | ReferenceProblem::Ergodic { h, .. } => h,
        }
    }
}

/// Solves on `grid` and on `grid` refined by `refine_factor`, returning the
/// fine solution restricted to `grid` and the sup gap between the two.
///
/// Theta is recertified on the fine grid over the same gradient box.
pub fn fine_grid_reference<T: Real>(
    problem: &ReferenceProblem<'_, T>,
    cfg: &SchemeConfig<T>,
    grid: &crate::grid::TorusGrid,
    refine_factor: usize,
) -> Result<OracleResult<T>> {
    if !matches!(refine_factor, 2 | 4) {
        return Err(Error::InvalidInput(format!(
            "refine factor must be 2 or 4, got {refine_factor}"
        )));
    }
    let fine = grid.refined(refine_factor)?;
    let (c_coarse, coarse) = problem.solve(cfg, grid)?;
    let fine_cfg = cfg
        .clone()
        .with_gradient_box(problem.hamiltonian(), &fine, cfg.gradient_box);
    let (c_fine, fine_field) = problem.solve(&fine_cfg, &fine)?;
    let restricted = fine_field.restrict_to(grid)?;
    let mut gap = coarse.sup_distance(&restricted);
    if let (Some(a), Some(b)) = (c_coarse, c_fine) {
        gap = gap.max((a - b).abs());
    }
    Ok(OracleResult {
        kind: OracleKind::FineGrid,
        c: c_fine,
        field: Some(restricted),
        error_estimate: gap,
    })
}

/// Exhaustive `max v(x) − v(y) − Ψ(d(x,y))`, scanning pairs in reverse order.
pub fn brute_pair_max<T: Real>(
    field: &ScalarField<T>,
    penalty: impl Fn(T) -> T,
) -> Result<(T, (usize, usize))> {
    let grid = field.grid();
    let n = grid.len();
    let pairs = n.saturating_mul(n);
    if pairs > BRUTE_PAIR_CAP {
        return Err(Error::TooManyPairs {
            pairs: pairs as u64,
            limit: BRUTE_PAIR_CAP as u64,
        });
    }
    let v = field.values();
    let mut best = (T::neg_infinity(), (0, 0));
    for j in (0..n).rev() {
        for i in (0..n).rev() {
            let m = v[i] - v[j] - penalty(grid.distance_flat(i, j));
            if m > best.0 {
                best = (m, (i, j));
            }
        }
    }
    Ok(best)
}
