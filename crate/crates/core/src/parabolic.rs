//! Evolution `u_t − tr(A D²u) + H(x, Du) = 0` by IMEX Euler: implicit linear
//! diffusion, explicit Lax–Friedrichs Hamiltonian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::field::one_sided_from_slice;
use crate::grid::{centered_gradient, io, ScalarField, TorusGrid};
use crate::linalg::{gmres, CsrMatrix, GmresOptions, Ilu0};
use crate::problem::{DiffusionSpec, HamiltonianSpec};
use crate::regularity::{holder_seminorm, lipschitz_seminorm};
use crate::scalar::Real;
use crate::scheme::{gradient_sup, Discretization, SchemeConfig};

const MAX_BOX_ROUNDS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct TimeStepConfig<T> {
    /// Fixed step; `None` takes the largest step the CFL bound allows.
    pub dt: Option<T>,
    pub cfl_safety: T,
    /// Relative tolerance of each implicit solve.
    pub implicit_tol: T,
}

impl<T: Real> Default for TimeStepConfig<T> {
    fn default() -> Self {
        Self {
            dt: None,
            cfl_safety: T::of(0.9),
            implicit_tol: T::of(1e-12),
        }
    }
}

impl<T: Real> TimeStepConfig<T> {
    /// `cfl_safety · (Σ_k θ_k / h_k)⁻¹`.
    pub fn cfl_limit(&self, scheme: &SchemeConfig<T>, grid: &TorusGrid) -> T {
        let w = scheme.cfl_weight(grid);
        if w > T::zero() {
            self.cfl_safety / w
        } else {
            T::infinity()
        }
    }

    /// The configured step, validated against the CFL bound.
    pub fn resolve_dt(&self, scheme: &SchemeConfig<T>, grid: &TorusGrid) -> Result<T> {
        if !(self.cfl_safety > T::zero() && self.cfl_safety < T::one()) {
            return Err(Error::InvalidInput(format!(
                "cfl_safety must lie in (0,1), got {}",
                self.cfl_safety
            )));
        }
        let limit = self.cfl_limit(scheme, grid);
        match self.dt {
            Some(dt) if dt > limit || !(dt > T::zero()) => Err(Error::InvalidInput(format!(
                "time step {dt} violates the CFL limit {limit}"
            ))),
            Some(dt) => Ok(dt),
            None if limit.is_finite() => Ok(limit),
            None => Err(Error::InvalidInput(
                "no CFL limit without artificial viscosity; set dt".into(),
            )),
        }
    }
}

/// `sup_x |H(x, Du₀) − tr(A D²u₀)|`, centered gradient and the monotone stencil.
pub fn lambda_bound<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    u0: &ScalarField<T>,
) -> Result<T> {
    let grid = u0.grid();
    let disc = Discretization::new(grid, h, a, [T::zero(); 2])?;
    Ok((0..grid.len())
        .map(|i| {
            (h.eval(&grid.point(i), &centered_gradient(u0, i))
                - disc.diffusion().apply_at(u0.values(), i))
            .abs()
        })
        .fold(T::zero(), |m, v| m.max(v)))
}

/// The a priori bound `|tr(A D²u₀)|∞ + |Du₀|∞^M + |H(·,0)|∞`.
pub fn lambda_bound_growth<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    u0: &ScalarField<T>,
    growth_m: T,
) -> Result<T> {
    let grid = u0.grid();
    let disc = Discretization::new(grid, h, a, [T::zero(); 2])?;
    let mut trace = T::zero();
    let mut grad = T::zero();
    for i in 0..grid.len() {
        trace = trace.max(disc.diffusion().apply_at(u0.values(), i).abs());
        grad = grad.max(crate::grid::norm(&centered_gradient(u0, i)));
    }
    Ok(trace + grad.powf(growth_m) + h.h0_sup(grid))
}

/// `Σ_k θ_k h_k / 2 · |D²_k u₀|∞`: the gap between the scheme's time
/// derivative at `u₀` and [`lambda_bound`], from the artificial viscosity.
pub fn viscosity_consistency<T: Real>(u0: &ScalarField<T>, theta: [T; 2]) -> T {
    let grid = u0.grid();
    (0..grid.dim())
        .map(|k| {
            let h = grid.spacing::<T>(k);
            let d2 = (0..grid.len())
                .map(|i| {
                    let (pm, pp) = one_sided_from_slice(grid, u0.values(), i);
                    ((pp[k] - pm[k]) / h).abs()
                })
                .fold(T::zero(), |m, v| m.max(v));
            theta[k] * h * T::half() * d2
        })
        .sum()
}

/// Whether `u0` looks twice differenceable: `h |D²u₀|∞ ≤ Lip(u₀)`.
/// A kink gives `h |D²u₀| ≈ 2 Lip`.
pub fn is_smooth<T: Real>(u0: &ScalarField<T>) -> bool {
    let grid = u0.grid();
    let lip = lipschitz_seminorm(u0);
    let ones = [T::one(), T::one()];
    let curvature = viscosity_consistency(u0, ones) * T::two() / grid.min_spacing::<T>();
    curvature * grid.min_spacing::<T>() <= lip * T::of(1.0 + 1e-9) * T::of_usize(grid.dim())
}

/// One IMEX step operator with the implicit matrix factored once.
pub struct ImexStepper<'a, T> {
    disc: Discretization<'a, T>,
    dt: T,
    matrix: CsrMatrix<T>,
    ilu: Option<Ilu0<T>>,
    opts: GmresOptions<T>,
    rhs: Vec<T>,
}

impl<'a, T: Real> ImexStepper<'a, T> {
    pub fn new(
        grid: &TorusGrid,
        h: &'a HamiltonianSpec<T>,
        a: &DiffusionSpec<T>,
        theta: [T; 2],
        dt: T,
        implicit_tol: T,
    ) -> Result<Self> {
        let disc = Discretization::new(grid, h, a, theta)?;
        let matrix = disc.diffusion().affine_matrix(T::one(), -dt);
        let ilu = Ilu0::factor(&matrix);
        Ok(Self {
            disc,
            dt,
            matrix,
            ilu,
            opts: GmresOptions {
                restart: 30,
                rel_tol: implicit_tol,
                abs_tol: T::zero(),
                max_iter: 500,
            },
            rhs: vec![T::zero(); grid.len()],
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Solves `(I − dt D_h) out = u − dt Ĥ(u)`.
    ///
    /// Returns the 2-norm of the linear residual, which bounds the sup error of
    /// `out` because `(I − dt D_h)⁻¹` has unit sup norm.
    pub fn step(&mut self, u: &[T], out: &mut [T]) -> Result<T> {
        self.disc.hamiltonian_part(u, &mut self.rhs);
        for (r, ui) in self.rhs.iter_mut().zip(u) {
            *r = *ui - self.dt * *r;
        }
        out.copy_from_slice(u);
        let ilu = &self.ilu;
        let matrix = &self.matrix;
        let stats = gmres(
            |x: &[T], y: &mut [T]| matrix.matvec(x, y),
            |b: &[T], x: &mut [T]| match ilu {
                Some(f) => f.solve(b, x),
                None => x.copy_from_slice(b),
            },
            &self.rhs,
            out,
            &self.opts,
        );
        if !stats.converged || out.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure(format!(
                "implicit diffusion solve stopped at residual {:e} after {} iterations",
                stats.residual.as_f64(),
                stats.iterations
            )));
        }
        Ok(stats.residual)
    }
}

/// A single IMEX step of size `ts.resolve_dt(..)`.
pub fn step_imex<T: Real>(
    u: &ScalarField<T>,
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    ts: &TimeStepConfig<T>,
    scheme: &SchemeConfig<T>,
) -> Result<ScalarField<T>> {
    let dt = ts.resolve_dt(scheme, u.grid())?;
    let mut stepper = ImexStepper::new(u.grid(), h, a, scheme.theta, dt, ts.implicit_tol)?;
    let mut out = vec![T::zero(); u.grid().len()];
    stepper.step(u.values(), &mut out)?;
    ScalarField::new(*u.grid(), out)
}

/// `{0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1, …} ∩ [0, T]` together with `T`.
pub fn default_snapshot_times<T: Real>(t_final: T) -> Vec<T> {
    let mut out = vec![T::zero()];
    let mut decade = 0.01;
    'outer: loop {
        for m in [1.0, 2.0, 5.0] {
            let t = T::of(m * decade);
            if t >= t_final {
                break 'outer;
            }
            out.push(t);
        }
        decade *= 10.0;
    }
    out.push(t_final);
    out
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EvolutionDiagnostics<T> {
    pub steps: usize,
    /// `Σ_k θ_k h_k/2 |D²_k u₀|∞`, added to Λ in the time-Lipschitz checks.
    pub consistency_slack: T,
    /// Accumulated sup-norm bound on the implicit-solve errors.
    pub tol: T,
    /// `sup_x |u^{n+1} − u^n|` maximized over steps.
    pub max_increment: T,
    /// Steps with `sup |u^{n+1} − u^n| > (Λ + slack) dt + 2 tol`.
    pub increment_violations: usize,
    /// `max_t sup_x (|u − u₀| − (Λ + slack) t) − tol`; nonpositive when the sandwich holds.
    pub sandwich_defect: T,
    /// `(t, min_x u, max_x u)` at every snapshot.
    pub extrema: Vec<[T; 3]>,
    pub snapshot_lipschitz: Vec<T>,
    pub u0_smooth: bool,
    pub gradient_sup: [T; 2],
    /// Differences stayed inside the gradient box over which θ is certified.
    pub box_ok: bool,
    /// `|tr(A D²u₀)|∞ + |Du₀|∞^M + |H(·,0)|∞`, when a growth exponent is known.
    pub lambda_growth: Option<T>,
    pub theta: [T; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Evolution<T> {
    pub grid: TorusGrid,
    pub dt: T,
    pub snapshot_times: Vec<T>,
    pub snapshots: Vec<ScalarField<T>>,
    pub u0: ScalarField<T>,
    pub lambda_bound: T,
    pub diagnostics: EvolutionDiagnostics<T>,
}

impl<T: Real> Evolution<T> {
    pub fn final_state(&self) -> &ScalarField<T> {
        self.snapshots
            .last()
            .expect("an evolution has at least the initial snapshot")
    }

    /// The snapshot recorded at `t`, if any.
    pub fn at_time(&self, t: T) -> Option<&ScalarField<T>> {
        let tol = self.dt * T::half();
        self.snapshot_times
            .iter()
            .position(|s| (*s - t).abs() <= tol)
            .map(|k| &self.snapshots[k])
    }

    /// The effective time-Lipschitz constant `Λ + consistency slack`.
    pub fn lambda_effective(&self) -> T {
        self.lambda_bound + self.diagnostics.consistency_slack
    }

    /// One CSV per snapshot plus `index.json` with `{times, lambda_bound, diagnostics}`.
    pub fn write_dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, s) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{k:04}.csv");
            io::write_csv_file(&dir.join(&name), s)?;
            files.push(name);
        }
        let index = serde_json::json!({
            "times": self.snapshot_times,
            "files": files,
            "lambda_bound": self.lambda_bound,
            "dt": self.dt,
            "diagnostics": self.diagnostics,
        });
        std::fs::write(
            dir.join("index.json"),
            serde_json::to_string_pretty(&index)?,
        )?;
        Ok(())
    }
}

/// Steps and snapshot indices for a constant step no larger than `dt_max`
/// that lands on the first positive snapshot time exactly.
fn plan_steps<T: Real>(times: &[T], t_final: T, dt_max: T) -> (T, Vec<usize>) {
    let tau = times
        .iter()
        .copied()
        .filter(|t| *t > T::zero())
        .fold(t_final, |m, t| m.min(t));
    let per_tau = (tau / dt_max).ceil().max(T::one());
    let dt = tau / per_tau;
    let idx = times
        .iter()
        .map(|t| (*t / dt).round().to_usize().unwrap_or(0))
        .collect();
    (dt, idx)
}

/// Evolves `u0` to `t_final`, calling `observer(t, u)` after every step.
#[allow(clippy::too_many_arguments)]
pub fn evolve_observed<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    u0: &ScalarField<T>,
    t_final: T,
    ts: &TimeStepConfig<T>,
    scheme: &SchemeConfig<T>,
    snapshot_times: Option<&[T]>,
    observer: &mut dyn FnMut(T, &[T]),
) -> Result<Evolution<T>> {
    if !(t_final > T::zero()) || !t_final.is_finite() {
        return Err(Error::InvalidInput(format!(
            "final time must be positive, got {t_final}"
        )));
    }
    let mut times = match snapshot_times {
        Some(t) => t.to_vec(),
        None => default_snapshot_times(t_final),
    };
    if times.first() != Some(&T::zero()) {
        times.insert(0, T::zero());
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| *t > t_final) {
        return Err(Error::InvalidInput(
            "snapshot times must increase within [0, T]".into(),
        ));
    }
    let mut scheme = scheme.clone();
    for round in 0..=MAX_BOX_ROUNDS {
        let run = march(h, a, u0, t_final, ts, &scheme, &times, observer)?;
        let grown =
            crate::stationary::grow_box(&scheme, run.diagnostics.gradient_sup, u0.grid().dim());
        match grown {
            Some(bx) if round < MAX_BOX_ROUNDS => {
                scheme = scheme.with_gradient_box(h, u0.grid(), bx)
            }
            _ => return Ok(run),
        }
    }
    unreachable!("the last box round always returns")
}

#[allow(clippy::too_many_arguments)]
fn march<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    u0: &ScalarField<T>,
    t_final: T,
    ts: &TimeStepConfig<T>,
    scheme: &SchemeConfig<T>,
    times: &[T],
    observer: &mut dyn FnMut(T, &[T]),
) -> Result<Evolution<T>> {
    let grid = *u0.grid();
    let dt_max = ts.resolve_dt(scheme, &grid)?;
    let (dt, snap_idx) = plan_steps(times, t_final, dt_max);
    let total = *snap_idx.last().expect("times has at least one entry");
    let mut stepper = ImexStepper::new(&grid, h, a, scheme.theta, dt, ts.implicit_tol)?;

    let lambda = lambda_bound(h, a, u0)?;
    let slack = viscosity_consistency(u0, scheme.theta);
    let lam_eff = lambda + slack;
    let lambda_growth = match h.meta.growth_m.or(h.meta.k) {
        Some(m) => Some(lambda_bound_growth(h, a, u0, m)?),
        None => None,
    };

    let mut u = u0.values().to_vec();
    let mut next = vec![T::zero(); grid.len()];
    let mut diag = EvolutionDiagnostics {
        u0_smooth: is_smooth(u0),
        consistency_slack: slack,
        sandwich_defect: T::neg_infinity(),
        gradient_sup: gradient_sup(&grid, &u),
        lambda_growth,
        theta: scheme.theta,
        ..Default::default()
    };
    let mut snapshots = vec![u0.clone()];
    let mut snapshot_times = vec![T::zero()];
    diag.extrema.push([T::zero(), u0.min(), u0.max()]);
    diag.snapshot_lipschitz.push(lipschitz_seminorm(u0));
    let mut next_snap = snap_idx
        .iter()
        .position(|&i| i > 0)
        .unwrap_or(snap_idx.len());

    for n in 1..=total {
        let err = stepper.step(&u, &mut next)?;
        diag.tol += err;
        let t = T::of_usize(n) * dt;
        let inc = u
            .iter()
            .zip(&next)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        diag.max_increment = diag.max_increment.max(inc);
        if inc > lam_eff * dt + T::two() * diag.tol {
            diag.increment_violations += 1;
        }
        let drift = next
            .iter()
            .zip(u0.values())
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        diag.sandwich_defect = diag.sandwich_defect.max(drift - lam_eff * t - diag.tol);
        std::mem::swap(&mut u, &mut next);
        let g = gradient_sup(&grid, &u);
        for k in 0..2 {
            diag.gradient_sup[k] = diag.gradient_sup[k].max(g[k]);
        }
        observer(t, &u);
        while next_snap < snap_idx.len() && snap_idx[next_snap] == n {
            let field = ScalarField::new(grid, u.clone())?;
            diag.extrema.push([t, field.min(), field.max()]);
            diag.snapshot_lipschitz.push(lipschitz_seminorm(&field));
            snapshots.push(field);
            snapshot_times.push(t);
            next_snap += 1;
        }
    }
    diag.steps = total;
    diag.box_ok = (0..grid.dim()).all(|k| diag.gradient_sup[k] <= scheme.gradient_box[k]);
    if total == 0 {
        diag.sandwich_defect = T::zero();
    }
    Ok(Evolution {
        grid,
        dt,
        snapshot_times,
        snapshots,
        u0: u0.clone(),
        lambda_bound: lambda,
        diagnostics: diag,
    })
}

pub fn evolve<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    u0: &ScalarField<T>,
    t_final: T,
    ts: &TimeStepConfig<T>,
    scheme: &SchemeConfig<T>,
    snapshot_times: Option<&[T]>,
) -> Result<Evolution<T>> {
    evolve_observed(
        h,
        a,
        u0,
        t_final,
        ts,
        scheme,
        snapshot_times,
        &mut |_, _| {},
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RegularizedEvolution<T> {
    pub evolution: Evolution<T>,
    pub q: T,
    pub n_trunc: Option<T>,
    pub growth_m: T,
    /// `sup` over snapshots of `sup_x |u_reg − u|` against the plain evolution.
    pub unregularized_gap: T,
    /// Hölder((M−2)/(M−1)) seminorm per snapshot, when `M > 2`.
    pub holder: Vec<T>,
}

/// Evolution of `u_t − tr(A D²u) + |Du|^M/q + H_n(x, Du) = 0`, with `H_n`
/// the truncation of `H` at `n_trunc` when given.
#[allow(clippy::too_many_arguments)]
pub fn evolve_regularized<T: Real>(
    h: &HamiltonianSpec<T>,
    a: &DiffusionSpec<T>,
    u0: &ScalarField<T>,
    q: T,
    n_trunc: Option<T>,
    growth_m: T,
    t_final: T,
    ts: &TimeStepConfig<T>,
    scheme: &SchemeConfig<T>,
    snapshot_times: Option<&[T]>,
) -> Result<RegularizedEvolution<T>> {
    let grid = u0.grid();
    let base = match n_trunc {
        Some(n) => h.clone().truncated(n),
        None => h.clone(),
    };
    let reg = base.regularized(q, growth_m);
    let reg_scheme = scheme
        .clone()
        .with_gradient_box(&reg, grid, scheme.gradient_box);
    let plain_scheme = SchemeConfig {
        theta: reg_scheme.theta,
        ..scheme.clone()
    };
    let dt = ts.resolve_dt(&reg_scheme, grid)?;
    let ts_fixed = TimeStepConfig {
        dt: Some(dt),
        ..ts.clone()
    };
    let evolution = evolve(&reg, a, u0, t_final, &ts_fixed, &reg_scheme, snapshot_times)?;
    let plain = evolve(h, a, u0, t_final, &ts_fixed, &plain_scheme, snapshot_times)?;
    let unregularized_gap = evolution
        .snapshots
        .iter()
        .zip(&plain.snapshots)
        .map(|(x, y)| x.sup_distance(y))
        .fold(T::zero(), |m, v| m.max(v));
    let gamma = (growth_m - T::two()) / (growth_m - T::one());
    let holder = if gamma > T::zero() && gamma <= T::one() {
        evolution
            .snapshots
            .iter()
            .map(|s| holder_seminorm(s, gamma))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(RegularizedEvolution {
        evolution,
        q,
        n_trunc,
        growth_m,
        unregularized_gap,
        holder,
    })
}
