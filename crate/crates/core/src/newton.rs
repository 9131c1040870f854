//! Damped inexact Newton with a pseudo-time fallback.

use serde::{Deserialize, Serialize};

use crate::linalg::{gmres, CsrMatrix, GmresOptions, Ilu0};
use crate::scalar::{sup_norm, Real};

/// How a nonlinear solve reached its answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Newton,
    /// Newton with at least one pseudo-time relaxation phase.
    NewtonPseudoTime,
}

pub(crate) trait NonlinearSystem<T: Real> {
    fn residual(&self, z: &[T], out: &mut [T]);
    /// Sparse approximation of the Jacobian, factored for preconditioning.
    fn preconditioner_matrix(&self, z: &[T]) -> CsrMatrix<T>;
    /// A few monotone explicit steps toward the solution.
    fn relax(&self, z: &mut [T], steps: usize);
    /// Moves constant parts of `z` into the system's own state.
    fn recenter(&mut self, _z: &mut [T]) {}
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonOptions<T> {
    pub tol: T,
    pub max_newton: usize,
    pub damping: T,
    pub gmres: GmresOptions<T>,
    pub relax_steps: usize,
    /// Consecutive failed line searches before relaxing.
    pub failures_before_relax: usize,
}

impl<T: Real> NewtonOptions<T> {
    pub fn new(tol: T, max_newton: usize, damping: T) -> Self {
        Self {
            tol,
            max_newton,
            damping,
            gmres: GmresOptions::default(),
            relax_steps: 200,
            failures_before_relax: 3,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct NewtonOutcome<T> {
    pub iterations: usize,
    pub linear_iterations: usize,
    pub residual: T,
    pub converged: bool,
    pub method: SolveMethod,
    /// Per iteration: `(z[0], sup of the accepted change, residual)`.
    pub history: Vec<[T; 3]>,
}

const MAX_BACKTRACKS: usize = 12;

pub(crate) fn newton_solve<T: Real, S: NonlinearSystem<T>>(
    sys: &mut S,
    z: &mut [T],
    opts: &NewtonOptions<T>,
) -> NewtonOutcome<T> {
    let n = z.len();
    let mut r = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut r_trial = vec![T::zero(); n];
    let mut shifted = vec![T::zero(); n];
    let mut r_shift = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    let mut linear_iterations = 0;
    let mut failures = 0;
    let mut method = SolveMethod::Newton;
    let mut history = Vec::new();
    let mut before = vec![T::zero(); n];

    sys.recenter(z);
    sys.residual(z, &mut r);
    let mut rn = sup_norm(&r);
    let mut it = 0;
    while it < opts.max_newton && !(rn <= opts.tol) {
        it += 1;
        if !rn.is_finite() {
            break;
        }
        before.copy_from_slice(z);
        let pm = sys.preconditioner_matrix(z);
        let ilu = Ilu0::factor(&pm);
        let precond = |b: &[T], x: &mut [T]| match &ilu {
            Some(f) => f.solve(b, x),
            None => x.copy_from_slice(b),
        };
        for i in 0..n {
            rhs[i] = -r[i];
        }
        let mut delta = vec![T::zero(); n];
        let probe = crate::scheme::probe_step(z);
        let stats = gmres(
            |d: &[T], out: &mut [T]| {
                let dn = sup_norm(d);
                if dn == T::zero() {
                    out.iter_mut().for_each(|o| *o = T::zero());
                    return;
                }
                let t = probe / dn;
                for i in 0..n {
                    shifted[i] = z[i] + t * d[i];
                }
                sys.residual(&shifted, &mut r_shift);
                for i in 0..n {
                    out[i] = (r_shift[i] - r[i]) / t;
                }
            },
            precond,
            &rhs,
            &mut delta,
            &opts.gmres,
        );
        linear_iterations += stats.iterations;

        let mut lambda = T::one();
        let mut accepted = false;
        let mut best = (T::infinity(), T::zero());
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                trial[i] = z[i] + lambda * delta[i];
            }
            sys.residual(&trial, &mut r_trial);
            let tn = sup_norm(&r_trial);
            if tn < best.0 {
                best = (tn, lambda);
            }
            if tn < rn {
                accepted = true;
                break;
            }
            lambda *= opts.damping;
        }
        if accepted {
            failures = 0;
            z.copy_from_slice(&trial);
        } else {
            failures += 1;
            // Take the least harmful step so that repeated attempts differ.
            if best.0.is_finite() {
                for i in 0..n {
                    z[i] += best.1 * delta[i];
                }
            }
            if failures >= opts.failures_before_relax {
                sys.relax(z, opts.relax_steps);
                method = SolveMethod::NewtonPseudoTime;
                failures = 0;
            }
        }
        let change = z
            .iter()
            .zip(&before)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        sys.recenter(z);
        sys.residual(z, &mut r);
        rn = sup_norm(&r);
        history.push([z[0], change, rn]);
    }
    NewtonOutcome {
        iterations: it,
        linear_iterations,
        residual: rn,
        converged: rn <= opts.tol,
        method,
        history,
    }
}
