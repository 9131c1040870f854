//! Sparse linear algebra used by the Newton and implicit solvers: CSR
//! storage, ILU(0) factorization, restarted right-preconditioned GMRES and
//! Jacobi-preconditioned conjugate gradients.

use crate::scalar::Real;

/// Compressed sparse row matrix with sorted column indices and an explicit diagonal.
#[derive(Clone, Debug)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    diag: Vec<usize>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds an `n×n` matrix from per-row `(col, value)` lists; duplicates are summed.
    pub fn from_rows<I>(n: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = Vec<(usize, T)>>,
    {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.push((i, T::zero()));
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (j, v) in row {
                if cols.len() > start && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                }
            }
            let d = start + cols[start..].iter().position(|&j| j == i).unwrap();
            diag.push(d);
            row_ptr.push(cols.len());
        }
        assert_eq!(row_ptr.len(), n + 1, "row count mismatch");
        Self {
            n,
            row_ptr,
            cols,
            vals,
            diag,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|e| e.0 == j).map_or(T::zero(), |e| e.1)
    }

    pub fn diagonal(&self) -> Vec<T> {
        self.diag.iter().map(|&d| self.vals[d]).collect()
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }
}

/// Incomplete LU factorization with zero fill.
#[derive(Clone, Debug)]
pub struct Ilu0<T> {
    lu: CsrMatrix<T>,
}

impl<T: Real> Ilu0<T> {
    /// Factors `a`; returns `None` if a zero pivot appears.
    pub fn factor(a: &CsrMatrix<T>) -> Option<Self> {
        let mut lu = a.clone();
        for i in 0..lu.n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for kk in start..end {
                let k = lu.cols[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[lu.diag[k]];
                if pivot == T::zero() || !pivot.is_finite() {
                    return None;
                }
                let lik = lu.vals[kk] / pivot;
                lu.vals[kk] = lik;
                for jj in (kk + 1)..end {
                    let j = lu.cols[jj];
                    let (ks, ke) = (lu.row_ptr[k], lu.row_ptr[k + 1]);
                    if let Some(p) = lu.cols[ks..ke].iter().position(|&c| c == j) {
                        let ukj = lu.vals[ks + p];
                        lu.vals[jj] -= lik * ukj;
                    }
                }
            }
            let d = lu.vals[lu.diag[i]];
            if d == T::zero() || !d.is_finite() {
                return None;
            }
        }
        Some(Self { lu })
    }

    /// Solves `L U x = b` in place of `x`.
    pub fn solve(&self, b: &[T], x: &mut [T]) {
        let lu = &self.lu;
        x.copy_from_slice(b);
        for i in 0..lu.n {
            let mut acc = x[i];
            for k in lu.row_ptr[i]..lu.diag[i] {
                acc -= lu.vals[k] * x[lu.cols[k]];
            }
            x[i] = acc;
        }
        for i in (0..lu.n).rev() {
            let mut acc = x[i];
            for k in (lu.diag[i] + 1)..lu.row_ptr[i + 1] {
                acc -= lu.vals[k] * x[lu.cols[k]];
            }
            x[i] = acc / lu.vals[lu.diag[i]];
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions<T> {
    pub restart: usize,
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for GmresOptions<T> {
    fn default() -> Self {
        Self {
            restart: 30,
            rel_tol: T::of(1e-2),
            abs_tol: T::zero(),
            max_iter: 300,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveStats<T> {
    pub iterations: usize,
    pub residual: T,
    pub converged: bool,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Restarted GMRES with right preconditioning, `A M⁻¹ y = b`, `x = M⁻¹ y`.
///
/// `x` holds the initial guess on entry and the solution on exit.
pub fn gmres<T, A, M>(
    mut apply: A,
    precond: M,
    b: &[T],
    x: &mut [T],
    opts: &GmresOptions<T>,
) -> SolveStats<T>
where
    T: Real,
    A: FnMut(&[T], &mut [T]),
    M: Fn(&[T], &mut [T]),
{
    let n = b.len();
    let m = opts.restart.max(1);
    let target = (opts.rel_tol * norm2(b)).max(opts.abs_tol);
    let mut r = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![T::zero(); m]; m + 1];
    let (mut cs, mut sn, mut g) = (
        vec![T::zero(); m],
        vec![T::zero(); m],
        vec![T::zero(); m + 1],
    );
    let mut total = 0;

    loop {
        apply(x, &mut w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        let beta = norm2(&r);
        if beta <= target || total >= opts.max_iter || !beta.is_finite() {
            return SolveStats {
                iterations: total,
                residual: beta,
                converged: beta <= target,
            };
        }
        basis.clear();
        basis.push(r.iter().map(|v| *v / beta).collect());
        g.iter_mut().for_each(|v| *v = T::zero());
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            precond(&basis[k], &mut z);
            apply(&z, &mut w);
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(&w, vj);
                hess[j][k] = hjk;
                for i in 0..n {
                    w[i] -= hjk * vj[i];
                }
            }
            let hnext = norm2(&w);
            hess[k + 1][k] = hnext;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == T::zero() {
                cs[k] = T::one();
                sn[k] = T::zero();
            } else {
                cs[k] = hess[k][k] / denom;
                sn[k] = hess[k + 1][k] / denom;
            }
            hess[k][k] = cs[k] * hess[k][k] + sn[k] * hess[k + 1][k];
            hess[k + 1][k] = T::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() <= target || total >= opts.max_iter || hnext == T::zero() {
                break;
            }
            basis.push(w.iter().map(|v| *v / hnext).collect());
        }
        // Back substitution for the Krylov coefficients.
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k_used {
                acc -= hess[i][j] * y[j];
            }
            y[i] = acc / hess[i][i];
        }
        let mut update = vec![T::zero(); n];
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                update[i] += *yj * basis[j][i];
            }
        }
        precond(&update, &mut z);
        for i in 0..n {
            x[i] += z[i];
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `a`.
pub fn conjugate_gradient<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x: &mut [T],
    rel_tol: T,
    max_iter: usize,
) -> SolveStats<T> {
    let n = b.len();
    let inv_diag: Vec<T> = a.diagonal().iter().map(|d| T::one() / *d).collect();
    let mut r = vec![T::zero(); n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let target = rel_tol * norm2(b);
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(r, d)| *r * *d).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let rn = norm2(&r);
        if rn <= target {
            return SolveStats {
                iterations: it,
                residual: rn,
                converged: true,
            };
        }
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rn = norm2(&r);
    SolveStats {
        iterations: max_iter,
        residual: rn,
        converged: rn <= target,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cyclic_laplacian(n: usize, shift: f64) -> CsrMatrix<f64> {
        CsrMatrix::from_rows(
            n,
            (0..n).map(|i| {
                vec![
                    (i, 2.0 + shift),
                    ((i + 1) % n, -1.0),
                    ((i + n - 1) % n, -1.0),
                ]
            }),
        )
    }

    #[test]
    fn duplicates_are_summed_and_diagonal_exists() {
        let a = CsrMatrix::from_rows(3, vec![vec![(1, 1.0), (1, 2.0)], vec![], vec![(0, 4.0)]]);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.diagonal(), vec![0.0, 0.0, 0.0]);
        assert_eq!(a.get(2, 0), 4.0);
    }

    #[test]
    fn gmres_with_ilu_solves_shifted_laplacian() {
        let n = 64;
        let a = cyclic_laplacian(n, 1e-3);
        let ilu = Ilu0::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; n];
        let opts = GmresOptions {
            rel_tol: 1e-12,
            ..Default::default()
        };
        let stats = gmres(
            |v, out| a.matvec(v, out),
            |v, out| ilu.solve(v, out),
            &b,
            &mut x,
            &opts,
        );
        assert!(stats.converged, "{stats:?}");
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        let err = ax
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn unpreconditioned_gmres_on_nonsymmetric_system() {
        let n = 20;
        let a = CsrMatrix::from_rows(
            n,
            (0..n).map(|i| vec![(i, 3.0), ((i + 1) % n, -1.0), ((i + 3) % n, 0.5)]),
        );
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let opts = GmresOptions {
            restart: 5,
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_iter: 500,
        };
        let stats = gmres(
            |v, out| a.matvec(v, out),
            |v, out| out.copy_from_slice(v),
            &b,
            &mut x,
            &opts,
        );
        assert!(stats.converged);
        // Row sums are 2.5, so the solution is constant 0.4.
        assert!(x.iter().all(|v: &f64| (v - 0.4).abs() < 1e-10));
    }

    #[test]
    fn cg_matches_known_solution() {
        let n = 50;
        let a = cyclic_laplacian(n, 0.5);
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&xs, &mut b);
        let mut x = vec![0.0; n];
        let s = conjugate_gradient(&a, &b, &mut x, 1e-14, 1000);
        assert!(s.converged);
        assert!(x.iter().zip(&xs).all(|(p, q)| (p - q).abs() < 1e-10));
    }
}
