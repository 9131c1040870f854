//! One runner per experiment kind. Each writes its CSV/JSON outputs and a
//! manifest into the configured output directory.

use std::cell::RefCell;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Experiment, ExperimentConfig, ExperimentKind};
use super::manifest::{Check, Constants, Manifest};
use crate::ergodic::{self, ErgodicSolution};
use crate::error::{Error, Result};
use crate::grid::{io, ScalarField, TorusGrid};
use crate::oracles::{hopf_cole_ergodic, OracleResult};
use crate::parabolic::{self, Evolution};
use crate::problem::{
    estimate_l_with_offset, estimate_ssa4_l, grid_points, unit_directions, Coefficient,
    DiffusionConfig, DiffusionSpec, Family, HamiltonianSpec,
};
use crate::regularity::{
    self, cone_bound_check, doubling_certificate, holder_seminorm, lipschitz_seminorm,
    minimal_certificate_a2, oscillation, CertificateParams, RegularityReport,
};
use crate::scalar::relative_spread;
use crate::scheme::SchemeConfig;
use crate::stationary::{self, DegenerateLadder, StationaryReport};

/// Relative bracket width of the `L` estimates.
const L_TOL: f64 = 1e-6;

/// Tightness factor of the Hölder certificates.
const TIGHTNESS: f64 = 0.999_999;

#[derive(Clone, Debug)]
pub struct RunOutput<R> {
    pub report: R,
    pub manifest: Manifest,
}

struct Setup {
    h: HamiltonianSpec<f64>,
    a: DiffusionSpec<f64>,
    grid: TorusGrid,
    scheme: SchemeConfig<f64>,
    out: PathBuf,
    outputs: Vec<String>,
}

impl Setup {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let h = with_inferred_meta(config.problem.hamiltonian.clone());
        let a = config.diffusion()?;
        let grid = config.grid;
        let scheme = config.scheme.resolve(&h, &grid)?;
        std::fs::create_dir_all(&config.output_dir)?;
        Ok(Self {
            h,
            a,
            grid,
            scheme,
            out: config.output_dir.clone(),
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn write_field(&mut self, name: &str, field: &ScalarField<f64>) -> Result<()> {
        let p = self.path(name);
        io::write_csv_file(&p, field)
    }

    fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let p = self.path(name);
        std::fs::write(p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    fn h_min(&self) -> f64 {
        self.grid.min_spacing()
    }

    fn h0_sup(&self) -> f64 {
        self.h.h0_sup(&self.grid)
    }

    fn ssa4_l(&self) -> Result<f64> {
        estimate_ssa4_l(
            &self.h,
            &self.a,
            &grid_points(&self.grid),
            &unit_directions(self.grid.dim()),
            L_TOL,
        )
    }

    fn constants(&self) -> Constants {
        let m = &self.h.meta;
        let gamma = m.k.filter(|k| *k > 2.0).map(|k| (k - 2.0) / (k - 1.0));
        let chi = match (m.k, m.alpha) {
            (Some(k), Some(alpha)) if (k - 1.0) * alpha + k - 2.0 > 0.0 => {
                Some(1.0 - alpha / ((k - 1.0) * alpha + k - 2.0))
            }
            _ => None,
        };
        Constants {
            nu: Some(self.a.nu()),
            l: self.ssa4_l().ok(),
            k: m.k,
            c_coercive: m.c,
            alpha: m.alpha,
            beta: m.beta,
            gamma,
            chi,
            theta: Some(self.scheme.theta),
            n: (0..self.grid.dim()).map(|k| self.grid.count(k)).collect(),
            growth_m: m.growth_m,
            ..Default::default()
        }
    }

    fn finish(
        self,
        config: &ExperimentConfig,
        kind: ExperimentKind,
        checks: Vec<Check>,
        constants: Constants,
    ) -> Result<Manifest> {
        let mut outputs = self.outputs;
        outputs.push("manifest.json".into());
        let manifest = Manifest::new(kind.name(), config, checks, constants, outputs)?;
        manifest.write(&self.out)?;
        Ok(manifest)
    }
}

/// Fills the growth exponents of `a|p|^k + ℓ` when a config left them out.
pub fn with_inferred_meta(mut h: HamiltonianSpec<f64>) -> HamiltonianSpec<f64> {
    if let Family::PowerCoercive { k, .. } = &h.family {
        let k = *k;
        h.meta.k.get_or_insert(k);
        h.meta.growth_m.get_or_insert(k);
    }
    h
}

/// `(ℓ, ν)` when the problem is `A = νI`, `H = |p|² + ℓ(x)`.
pub fn hopf_cole_form(config: &ExperimentConfig) -> Option<(ScalarField<f64>, f64)> {
    let nu = match &config.problem.diffusion {
        DiffusionConfig::Identity => 1.0,
        DiffusionConfig::Scaled { nu } => *nu,
        _ => return None,
    };
    match &config.problem.hamiltonian.family {
        Family::PowerCoercive {
            a: Coefficient::Constant(a),
            k,
            ell,
        } if *a == 1.0 && *k == 2.0 => {
            Some((ScalarField::from_fn(config.grid, |x| ell.eval(&x)), nu))
        }
        _ => None,
    }
}

fn initial_data(grid: &TorusGrid, u0: &Coefficient<f64>) -> ScalarField<f64> {
    ScalarField::from_fn(*grid, |x| u0.eval(&x))
}

fn is_zero(u0: &Coefficient<f64>) -> bool {
    matches!(u0, Coefficient::Constant(v) if *v == 0.0)
}

fn default_gammas(h: &HamiltonianSpec<f64>) -> Vec<f64> {
    let mut g = Vec::new();
    if let Some(k) = h.meta.k.filter(|k| *k > 2.0) {
        g.push((k - 2.0) / (k - 1.0));
    }
    for extra in [0.5, 1.0] {
        if !g.contains(&extra) {
            g.push(extra);
        }
    }
    g
}

/// Certificate tightness at every exponent: `M ≤ 0` at the seminorm, `M > 0` just below it.
fn tightness_checks(label: &str, field: &ScalarField<f64>, gammas: &[f64]) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for &g in gammas {
        let k = holder_seminorm(field, g)?;
        let at = doubling_certificate(field, &CertificateParams::holder_power(k, g));
        let below = doubling_certificate(field, &CertificateParams::holder_power(k * TIGHTNESS, g));
        let name = format!("certificate_tight[{label},gamma={g}]");
        let check = if k == 0.0 {
            Check::flag(&name, at.certified).with_detail("constant field: only M <= 0 applies")
        } else {
            Check::flag(&name, at.certified && below.max_value > 0.0).with_detail(format!(
                "M={:e}, M(0.999999K)={:e}",
                at.max_value, below.max_value
            ))
        };
        out.push(check);
    }
    Ok(out)
}

pub fn run_stationary(config: &ExperimentConfig) -> Result<RunOutput<StationaryReport<f64>>> {
    let Experiment::Stationary { eps } = config.experiment_or_default(ExperimentKind::Stationary)
    else {
        unreachable!()
    };
    let mut s = Setup::new(config)?;
    let zero = ScalarField::zeros(s.grid);
    let rep = stationary::solve_discounted(&s.h, &s.a, eps, &s.scheme, &s.grid, Some(&zero))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let random = ScalarField::new(
        s.grid,
        (0..s.grid.len())
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect(),
    )?;
    let rep2 = stationary::solve_discounted(&s.h, &s.a, eps, &s.scheme, &s.grid, Some(&random))?;
    let tol = rep.scheme.tol_residual;
    let checks = vec![
        Check::at_most("residual", rep.residual_sup, tol),
        Check::at_most(
            "max_principle",
            rep.scaled_sup(),
            s.h0_sup() + 10.0 * s.h_min() * rep.scheme.theta_sup(),
        ),
        Check::at_most(
            "init_independence",
            rep.solution.sup_distance(&rep2.solution),
            10.0 * tol,
        )
        .with_detail("init 0 versus uniform random init in [-1, 1]"),
    ];
    s.write_field("solution.csv", &rep.solution)?;
    s.write_json(
        "report.json",
        &serde_json::json!({
            "eps": rep.eps,
            "residual_sup": rep.residual_sup,
            "iterations": rep.iterations,
            "method": rep.method,
            "linf": rep.solution.sup_norm(),
            "eps_linf": rep.scaled_sup(),
            "scheme": rep.scheme,
        }),
    )?;
    let mut constants = s.constants();
    constants.eps = Some(vec![eps]);
    constants.theta = Some(rep.scheme.theta);
    let manifest = s.finish(config, ExperimentKind::Stationary, checks, constants)?;
    Ok(RunOutput {
        report: rep,
        manifest,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErgodicComparison {
    pub direct: ErgodicSolution<f64>,
    pub vanishing: ErgodicSolution<f64>,
    pub oracle: Option<OracleResult<f64>>,
}

pub fn run_ergodic(config: &ExperimentConfig) -> Result<RunOutput<ErgodicComparison>> {
    let Experiment::Ergodic { eps_schedule } =
        config.experiment_or_default(ExperimentKind::Ergodic)
    else {
        unreachable!()
    };
    let mut s = Setup::new(config)?;
    let direct = ergodic::solve_direct(&s.h, &s.a, &s.scheme, &s.grid)?;
    let vanishing =
        ergodic::solve_vanishing_discount(&s.h, &s.a, &eps_schedule, &s.scheme, &s.grid)?;
    let h = s.h_min();
    let mut checks = vec![
        Check::at_most(
            "direct_residual",
            direct.residual_sup,
            direct.scheme.tol_residual,
        ),
        Check::at_most(
            "route_agreement_c",
            (direct.c - vanishing.c).abs(),
            f64::max(1e-3, 5.0 * h),
        ),
        Check::at_most(
            "route_agreement_v0",
            ergodic::v0_gap(&direct, &vanishing),
            f64::max(1e-2, 10.0 * h),
        ),
    ];
    let oracle = match hopf_cole_form(config) {
        Some((ell, nu)) => {
            let o = hopf_cole_ergodic(&ell, nu)?;
            let c = o.c.expect("the eigenvalue oracle always reports c");
            checks.push(Check::at_most(
                "oracle_direct_c",
                (direct.c - c).abs(),
                1e-3,
            ));
            checks.push(Check::at_most(
                "oracle_vanishing_c",
                (vanishing.c - c).abs(),
                5e-3,
            ));
            Some(o)
        }
        None => None,
    };
    s.write_field("v0_direct.csv", &direct.v0)?;
    s.write_field("v0_vanishing.csv", &vanishing.v0)?;
    let p = s.path("convergence_vanishing.csv");
    vanishing.write_table_csv(&p)?;
    let p = s.path("convergence_direct.csv");
    direct.write_table_csv(&p)?;
    s.write_json(
        "ergodic.json",
        &serde_json::json!({
            "c_direct": direct.c,
            "c_vanishing": vanishing.c,
            "c_oracle": oracle.as_ref().and_then(|o| o.c),
            "direct_residual": direct.residual_sup,
            "vanishing_residual": vanishing.residual_sup,
        }),
    )?;
    let mut constants = s.constants();
    constants.eps = Some(eps_schedule);
    constants.theta = Some(direct.scheme.theta);
    let manifest = s.finish(config, ExperimentKind::Ergodic, checks, constants)?;
    Ok(RunOutput {
        report: ErgodicComparison {
            direct,
            vanishing,
            oracle,
        },
        manifest,
    })
}

/// Time-Lipschitz checks shared by every evolution.
fn evolution_checks(ev: &Evolution<f64>) -> Vec<Check> {
    let d = &ev.diagnostics;
    let mut checks = vec![
        Check::at_most("time_increments", d.increment_violations as f64, 0.0).with_detail(format!(
            "max increment {:e}, dt {:e}",
            d.max_increment, ev.dt
        )),
        Check::at_most("sandwich", d.sandwich_defect, 0.0),
        Check::flag("gradient_box", d.box_ok),
    ];
    if !d.u0_smooth {
        for c in checks.iter_mut().take(2) {
            c.required = false;
            c.detail = "u0 is not twice differenceable; bound not applicable".into();
        }
    }
    checks
}

pub fn run_evolve(config: &ExperimentConfig) -> Result<RunOutput<Evolution<f64>>> {
    let Experiment::Evolve {
        t_final,
        u0,
        snapshot_times,
    } = config.experiment_or_default(ExperimentKind::Evolve)
    else {
        unreachable!()
    };
    let mut s = Setup::new(config)?;
    let u0 = initial_data(&s.grid, &u0);
    let ev = parabolic::evolve(
        &s.h,
        &s.a,
        &u0,
        t_final,
        &config.time,
        &s.scheme,
        snapshot_times.as_deref(),
    )?;
    let checks = evolution_checks(&ev);
    let dir = s.path("evolution");
    ev.write_dump(&dir)?;
    let mut constants = s.constants();
    constants.lambda = Some(ev.lambda_bound);
    constants.theta = Some(ev.diagnostics.theta);
    let manifest = s.finish(config, ExperimentKind::Evolve, checks, constants)?;
    Ok(RunOutput {
        report: ev,
        manifest,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub linf: f64,
    pub eps_linf: f64,
    pub osc: f64,
    pub lip: f64,
    /// Hölder seminorm at the first exponent of the sweep.
    pub holder: f64,
    #[serde(rename = "A1A2")]
    pub a1a2: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepTable {
    pub gammas: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub solutions: Vec<ScalarField<f64>>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
}

pub fn run_epsilon_sweep(config: &ExperimentConfig) -> Result<RunOutput<SweepTable>> {
    let Experiment::EpsilonSweep { eps, gammas } =
        config.experiment_or_default(ExperimentKind::EpsilonSweep)
    else {
        unreachable!()
    };
    let mut s = Setup::new(config)?;
    let gammas = gammas.unwrap_or_else(|| default_gammas(&s.h));
    let g_main = *gammas
        .first()
        .ok_or_else(|| Error::Config("need at least one exponent".into()))?;
    let l = s.ssa4_l().ok();
    let h = s.h_min();
    let dim_sqrt = (s.grid.dim() as f64).sqrt();
    let h0 = s.h0_sup();

    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    let mut osc_excess = f64::NEG_INFINITY;
    let mut mp_excess = f64::NEG_INFINITY;
    let mut cone_excess = f64::NEG_INFINITY;
    let mut last_params = None;
    let solved: Vec<Result<StationaryReport<f64>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = eps
            .iter()
            .map(|&e| {
                let s = &s;
                scope.spawn(move || {
                    stationary::solve_discounted(&s.h, &s.a, e, &s.scheme, &s.grid, None)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    let mut cfg = s.scheme.clone();
    for (&e, rep) in eps.iter().zip(solved) {
        let rep = rep?;
        cfg = rep.scheme.clone();
        let v = &rep.solution;
        let lip = lipschitz_seminorm(v);
        let osc = oscillation(v);
        let params = minimal_certificate_a2(v, g_main.min(1.0 - 1e-12)).ok();
        if let Some(l) = l {
            osc_excess = osc_excess.max(osc - (dim_sqrt * l + 5.0 * h * lip));
            cone_excess = cone_excess.max(cone_bound_check(v, l) - 5.0 * h);
        }
        mp_excess = mp_excess.max(rep.scaled_sup() - (h0 + 10.0 * h * rep.scheme.theta_sup()));
        rows.push(SweepRow {
            eps: e,
            linf: v.sup_norm(),
            eps_linf: rep.scaled_sup(),
            osc,
            lip,
            holder: holder_seminorm(v, g_main)?,
            a1a2: params.map_or(f64::NAN, |p| p.slope_at_zero()),
            residual: rep.residual_sup,
        });
        checks.extend(tightness_checks(&format!("eps={e}"), v, &gammas)?);
        reports.push((format!("eps={e}"), regularity::analyze(v, &gammas, l)?));
        last_params = params;
        solutions.push(rep.solution.clone());
    }

    let col = |f: fn(&SweepRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let lip_spread = relative_spread(&col(|r| r.lip));
    let holder_spread = relative_spread(&col(|r| r.holder));
    let a1a2_spread = relative_spread(&col(|r| r.a1a2));
    let linf = col(|r| r.linf);
    let linf_ratio = linf.iter().cloned().fold(0.0, f64::max)
        / linf.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps_ratio =
        eps.iter().cloned().fold(0.0, f64::max) / eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let coercive = s.h.meta.k.is_some_and(|k| k > 2.0);

    let mut summary = vec![
        Check::at_most("lipschitz_spread", lip_spread, 0.10),
        Check::at_most("max_principle", mp_excess, 0.0),
    ];
    summary.push(
        Check::at_least("linf_growth_ratio", linf_ratio, 0.1 * eps_ratio)
            .informational()
            .with_detail("|v|_inf grows like 1/eps only when c != 0"),
    );
    let hold =
        Check::at_most("holder_spread", holder_spread, 0.15).with_detail(format!("gamma={g_main}"));
    summary.push(if coercive { hold } else { hold.informational() });
    summary.push(Check::at_most("certified_A1A2_spread", a1a2_spread, 0.15));
    match l {
        Some(_) => {
            summary.push(Check::at_most("oscillation_bound", osc_excess, 0.0));
            summary.push(Check::at_most("cone_bound", cone_excess, 0.0));
        }
        None => summary.push(
            Check::flag("oscillation_bound", false)
                .with_detail("no finite L: superlinearity condition fails"),
        ),
    }
    summary.append(&mut checks);

    let p = s.path("sweep.csv");
    let mut w = csv::Writer::from_path(p)?;
    w.write_record([
        "eps", "linf", "eps_linf", "osc", "lip", "holder", "A1A2", "residual",
    ])?;
    for r in &rows {
        w.write_record(
            [
                r.eps, r.linf, r.eps_linf, r.osc, r.lip, r.holder, r.a1a2, r.residual,
            ]
            .map(|v| format!("{v:e}")),
        )?;
    }
    w.flush()?;
    let p = s.path("holder.csv");
    regularity::write_holder_csv(&p, &reports)?;

    let mut constants = s.constants();
    constants.eps = Some(eps.clone());
    constants.gamma = Some(g_main);
    constants.theta = Some(cfg.theta);
    if let Some(p) = last_params {
        constants.a1 = Some(p.a1);
        constants.a2 = Some(p.a2);
        constants.r = Some(p.r);
    }
    let manifest = s.finish(config, ExperimentKind::EpsilonSweep, summary, constants)?;
    Ok(RunOutput {
        report: SweepTable {
            gammas,
            rows,
            solutions,
            l,
        },
        manifest,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LargeTimeReport {
    pub c: f64,
    pub v0: ScalarField<f64>,
    /// `(t, max_x(u + ct − v⁰))` after every step.
    pub m_curve: Vec<[f64; 2]>,
    /// `m(T)`.
    pub ell_limit: f64,
    /// `(t, sup_x |u + ct − v⁰ − m(t)|)` after every step.
    pub sup_gap_curve: Vec<[f64; 2]>,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    /// Largest one-step increase of `m`.
    pub max_m_rise: f64,
    pub evolution: Evolution<f64>,
}

type Observer = Box<dyn FnMut(f64, &[f64])>;

/// Ergodic pair and evolution on one scheme, enlarging the box until the
/// evolution stays inside it.
fn ergodic_and_evolution(
    s: &Setup,
    config: &ExperimentConfig,
    u0: &ScalarField<f64>,
    t_final: f64,
    observer_factory: &mut dyn FnMut(&ErgodicSolution<f64>) -> Observer,
) -> Result<(ErgodicSolution<f64>, Evolution<f64>)> {
    let mut scheme = s.scheme.clone();
    for round in 0..4 {
        let erg = ergodic::solve_direct(&s.h, &s.a, &scheme, &s.grid)?;
        let fixed = erg.scheme.clone().fixed_box();
        let mut obs = observer_factory(&erg);
        let ev = parabolic::evolve_observed(
            &s.h,
            &s.a,
            u0,
            t_final,
            &config.time,
            &fixed,
            None,
            &mut *obs,
        )?;
        drop(obs);
        if ev.diagnostics.box_ok || round == 3 {
            return Ok((erg, ev));
        }
        let g = ev.diagnostics.gradient_sup;
        let bx = [
            2.0 * g[0].max(fixed.gradient_box[0] / 2.0),
            2.0 * g[1].max(fixed.gradient_box[1] / 2.0),
        ];
        scheme = erg.scheme.clone().with_gradient_box(&s.h, &s.grid, bx);
    }
    unreachable!("the last round returns")
}

pub fn run_large_time(config: &ExperimentConfig) -> Result<RunOutput<LargeTimeReport>> {
    let Experiment::LargeTime {
        t_final,
        u0,
        gap_threshold,
    } = config.experiment_or_default(ExperimentKind::LargeTime)
    else {
        unreachable!()
    };
    let mut s = Setup::new(config)?;
    let u0f = initial_data(&s.grid, &u0);
    let curves = Rc::new(RefCell::new((Vec::new(), Vec::new())));
    let (erg, ev) = ergodic_and_evolution(&s, config, &u0f, t_final, &mut |erg| {
        let (c, v0) = (erg.c, erg.v0.clone());
        let curves = Rc::clone(&curves);
        {
            let mut cv = curves.borrow_mut();
            cv.0.clear();
            cv.1.clear();
            let (m, gap) = m_and_gap(u0f.values(), v0.values(), c, 0.0);
            cv.0.push([0.0, m]);
            cv.1.push([0.0, gap]);
        }
        Box::new(move |t, u| {
            let (m, gap) = m_and_gap(u, v0.values(), c, t);
            let mut cv = curves.borrow_mut();
            cv.0.push([t, m]);
            cv.1.push([t, gap]);
        })
    })?;
    let (m_curve, sup_gap_curve) = curves.take();
    let max_m_rise = m_curve
        .windows(2)
        .map(|w| w[1][1] - w[0][1])
        .fold(f64::NEG_INFINITY, f64::max);
    let lambda = ev.lambda_bound;
    let final_gap = sup_gap_curve.last().map_or(f64::NAN, |r| r[1]);
    let mut checks = vec![
        Check::at_most("m_nonincreasing", max_m_rise, 1e-6 * (1.0 + lambda)),
        Check::at_most("final_gap", final_gap, gap_threshold).with_detail(
            if final_gap <= gap_threshold {
                "converged"
            } else {
                "not converged"
            },
        ),
    ];
    checks.extend(evolution_checks(&ev));

    let write_curve = |p: &Path, head: [&str; 2], rows: &[[f64; 2]]| -> Result<()> {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(head)?;
        for r in rows {
            w.write_record(r.map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    };
    let p = s.path("m_curve.csv");
    write_curve(&p, ["t", "m"], &m_curve)?;
    let p = s.path("sup_gap_curve.csv");
    write_curve(&p, ["t", "gap"], &sup_gap_curve)?;
    s.write_field("v0.csv", &erg.v0)?;
    s.write_field("u_final.csv", ev.final_state())?;
    let ell_limit = m_curve.last().map_or(f64::NAN, |r| r[1]);
    s.write_json(
        "large_time.json",
        &serde_json::json!({ "c": erg.c, "ell_limit": ell_limit, "final_gap": final_gap, "Lambda": lambda, "dt": ev.dt }),
    )?;
    let mut constants = s.constants();
    constants.lambda = Some(lambda);
    constants.theta = Some(erg.scheme.theta);
    let manifest = s.finish(config, ExperimentKind::LargeTime, checks, constants)?;
    Ok(RunOutput {
        report: LargeTimeReport {
            c: erg.c,
            v0: erg.v0,
            m_curve,
            ell_limit,
            sup_gap_curve,
            lambda,
            max_m_rise,
            evolution: ev,
        },
        manifest,
    })
}

/// `m = max(u + ct − v⁰)` and `sup |u + ct − v⁰ − m|`.
pub fn m_and_gap(u: &[f64], v0: &[f64], c: f64, t: f64) -> (f64, f64) {
    let w = u.iter().zip(v0).map(|(u, v)| u + c * t - v);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in w {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (hi, hi - lo)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CesaroRow {
    pub t: f64,
    pub max_u_over_t: f64,
    pub min_u_over_t: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubadditivityRow {
    pub t: f64,
    pub s: f64,
    /// `max u(t+s) − max u(t) − max u(s)`, nonpositive for a subadditive maximum.
    pub max_defect: f64,
    /// `min u(t) + min u(s) − min u(t+s)`, nonpositive for a superadditive minimum.
    pub min_super_defect: f64,
    /// `min u(t+s) − min u(t) − min u(s)`.
    pub min_sub_defect: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CesaroTable {
    pub c: f64,
    pub rows: Vec<CesaroRow>,
    pub subadditivity: Vec<SubadditivityRow>,
    /// `max_x |u(x,T)/T + c|`.
    pub final_defect: f64,
    /// `max_x |u(x,T/2)/(T/2) + c|` when `T/2` was recorded.
    pub half_time_defect: Option<f64>,
    /// Worst `u − min u − L d(·, argmin)` over snapshots, with `L` from the parabolic condition.
    pub cone_defect: Option<f64>,
    pub evolution: Evolution<f64>,
}

pub fn run_cesaro(config: &ExperimentConfig) -> Result<RunOutput<CesaroTable>> {
    let Experiment::Cesaro { t_final, u0 } = config.experiment_or_default(ExperimentKind::Cesaro)
    else {
        unreachable!()
    };
    let mut s = Setup::new(config)?;
    let u0f = initial_data(&s.grid, &u0);
    let (erg, ev) = ergodic_and_evolution(&s, config, &u0f, t_final, &mut |_| Box::new(|_, _| {}))?;
    let c = erg.c;
    let tol = ev.diagnostics.tol + 1e-12;
    let defect = |u: &ScalarField<f64>, t: f64| {
        u.values()
            .iter()
            .map(|x| (x / t + c).abs())
            .fold(0.0, f64::max)
    };
    let rows: Vec<CesaroRow> = ev
        .snapshot_times
        .iter()
        .zip(&ev.snapshots)
        .filter(|(t, _)| **t > 0.0)
        .map(|(&t, u)| CesaroRow {
            t,
            max_u_over_t: u.max() / t,
            min_u_over_t: u.min() / t,
        })
        .collect();
    let final_defect = defect(ev.final_state(), t_final);
    let half_time_defect = ev.at_time(t_final / 2.0).map(|u| defect(u, t_final / 2.0));

    // Comparison with v⁰ − ct + const gives |u + ct| ≤ |v⁰|∞ + |u₀ − v⁰|∞.
    let budget = erg.v0.sup_norm() + u0f.sup_distance(&erg.v0);
    let mut checks = vec![
        Check::at_most("cesaro_final", final_defect, budget / t_final + tol)
            .with_detail(format!("budget |v0| + |u0 - v0| = {budget:e}")),
    ];
    if let Some(hd) = half_time_defect {
        checks.push(Check::at_most("cesaro_halving", final_defect, 0.6 * hd));
    }

    let mut subadditivity = Vec::new();
    if is_zero(&u0) {
        let times = &ev.snapshot_times;
        let snap = |t: f64| ev.at_time(t);
        for (i, &t) in times.iter().enumerate().skip(1) {
            for &sv in &times[i..] {
                if let (Some(ut), Some(us), Some(uts)) = (snap(t), snap(sv), snap(t + sv)) {
                    subadditivity.push(SubadditivityRow {
                        t,
                        s: sv,
                        max_defect: uts.max() - ut.max() - us.max(),
                        min_super_defect: ut.min() + us.min() - uts.min(),
                        min_sub_defect: uts.min() - ut.min() - us.min(),
                    });
                }
            }
        }
        let worst = |f: fn(&SubadditivityRow) -> f64| {
            subadditivity
                .iter()
                .map(f)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        if !subadditivity.is_empty() {
            checks.push(Check::at_most(
                "max_subadditive",
                worst(|r| r.max_defect),
                tol,
            ));
            checks.push(Check::at_most(
                "min_superadditive",
                worst(|r| r.min_super_defect),
                tol,
            ));
            checks.push(
                Check::at_most("min_subadditive", worst(|r| r.min_sub_defect), tol)
                    .informational()
                    .with_detail("fails whenever min u(t) < 0 grows linearly; the maximum is the subadditive one"),
            );
        }
    }

    let l_par = estimate_l_with_offset(
        &s.h,
        &s.a,
        &grid_points(&s.grid),
        &unit_directions(s.grid.dim()),
        L_TOL,
        ev.lambda_bound,
    )
    .ok();
    let cone_defect = l_par.map(|l| {
        ev.snapshots
            .iter()
            .map(|u| cone_bound_check(u, l) - 5.0 * s.h_min() * lipschitz_seminorm(u))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    match cone_defect {
        Some(d) => checks.push(Check::at_most("parabolic_cone", d, 0.0)),
        None => checks.push(
            Check::flag("parabolic_cone", false)
                .with_detail("no finite L")
                .informational(),
        ),
    }
    checks.extend(evolution_checks(&ev));

    let p = s.path("cesaro.csv");
    let mut w = csv::Writer::from_path(p)?;
    w.write_record(["t", "max_u_over_t", "min_u_over_t"])?;
    for r in &rows {
        w.write_record([r.t, r.max_u_over_t, r.min_u_over_t].map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    let p = s.path("subadditivity.csv");
    let mut w = csv::Writer::from_path(p)?;
    w.write_record(["t", "s", "max_defect", "min_super_defect", "min_sub_defect"])?;
    for r in &subadditivity {
        w.write_record(
            [r.t, r.s, r.max_defect, r.min_super_defect, r.min_sub_defect]
                .map(|v| format!("{v:e}")),
        )?;
    }
    w.flush()?;

    let mut constants = s.constants();
    constants.lambda = Some(ev.lambda_bound);
    constants.theta = Some(erg.scheme.theta);
    if l_par.is_some() {
        constants.l = l_par;
    }
    let manifest = s.finish(config, ExperimentKind::Cesaro, checks, constants)?;
    Ok(RunOutput {
        report: CesaroTable {
            c,
            rows,
            subadditivity,
            final_defect,
            half_time_defect,
            cone_defect,
            evolution: ev,
        },
        manifest,
    })
}

pub fn run_degenerate_ladder(
    config: &ExperimentConfig,
) -> Result<RunOutput<DegenerateLadder<f64>>> {
    let Experiment::DegenerateLadder {
        eps,
        q_schedule,
        growth_m,
    } = config.experiment_or_default(ExperimentKind::DegenerateLadder)
    else {
        unreachable!()
    };
    let mut s = Setup::new(config)?;
    let m = growth_m
        .or(s.h.meta.growth_m)
        .or(s.h.meta.k)
        .ok_or_else(|| Error::Config("degenerate ladder needs the growth exponent M".into()))?;
    let ladder = stationary::solve_degenerate_via_regularization(
        &s.h,
        &s.a,
        eps,
        &q_schedule,
        m,
        &s.scheme,
        &s.grid,
    )?;
    let decreasing = ladder.increments.windows(2).all(|w| w[1] < w[0]);
    let checks = vec![
        Check::at_most("holder_spread", relative_spread(&ladder.holder), 0.20)
            .with_detail(format!("gamma={}", ladder.holder_gamma)),
        Check::flag("increments_decreasing", decreasing),
    ];
    let p = s.path("ladder.csv");
    let mut w = csv::Writer::from_path(p)?;
    w.write_record(["q", "holder", "lip", "osc", "increment"])?;
    for (j, (q, r)) in ladder.q_schedule.iter().zip(&ladder.reports).enumerate() {
        let inc = if j == 0 {
            f64::NAN
        } else {
            ladder.increments[j - 1]
        };
        w.write_record(
            [
                *q,
                ladder.holder[j],
                lipschitz_seminorm(&r.solution),
                oscillation(&r.solution),
                inc,
            ]
            .map(|v| format!("{v:e}")),
        )?;
    }
    w.flush()?;
    for (q, r) in ladder.q_schedule.iter().zip(&ladder.reports) {
        s.write_field(&format!("v_q{q}.csv"), &r.solution)?;
    }
    s.write_field("extrapolated.csv", &ladder.extrapolated)?;
    let mut constants = s.constants();
    constants.eps = Some(vec![eps]);
    constants.q = Some(q_schedule);
    constants.growth_m = Some(m);
    constants.gamma = Some(ladder.holder_gamma);
    let manifest = s.finish(config, ExperimentKind::DegenerateLadder, checks, constants)?;
    Ok(RunOutput {
        report: ladder,
        manifest,
    })
}

pub fn run_certify(config: &ExperimentConfig) -> Result<RunOutput<RegularityReport<f64>>> {
    let Experiment::Certify {
        eps,
        field_csv,
        gammas,
    } = config.experiment_or_default(ExperimentKind::Certify)
    else {
        unreachable!()
    };
    let mut s = Setup::new(config)?;
    let field = match &field_csv {
        Some(p) => io::read_csv(std::fs::File::open(p)?)?,
        None => stationary::solve_discounted(&s.h, &s.a, eps, &s.scheme, &s.grid, None)?.solution,
    };
    let gammas = gammas.unwrap_or_else(|| default_gammas(&s.h));
    let l = s.ssa4_l().ok();
    let report = regularity::analyze(&field, &gammas, l)?;
    let h = field.grid().min_spacing::<f64>();
    let mut checks = tightness_checks("field", &field, &gammas)?;
    match &report.certificate {
        Some(c) => {
            checks.push(Check::flag("minimal_certificate", c.certified));
            checks.push(
                Check::at_most(
                    "certificate_with_grid_slack",
                    c.off_diagonal_with_slack,
                    0.0,
                )
                .informational()
                .with_detail("off-diagonal maximum plus 2 Lip h"),
            );
        }
        None => checks.push(
            Check::flag("minimal_certificate", false)
                .with_detail("not certifiable below the A2 cap"),
        ),
    }
    if let Some(cc) = &report.cone_check {
        checks.push(Check::at_most("cone_bound", cc.worst_defect, 5.0 * h));
    }
    let a2s: Vec<f64> = gammas
        .iter()
        .filter(|g| **g < 1.0)
        .filter_map(|g| minimal_certificate_a2(&field, *g).ok().map(|p| p.a2))
        .collect();
    let mut order: Vec<(f64, f64)> = gammas
        .iter()
        .copied()
        .filter(|g| *g < 1.0)
        .zip(a2s.iter().copied())
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let antitone = order.windows(2).all(|w| w[1].1 <= w[0].1 * 1.01);
    checks.push(Check::flag("A2_antitone_in_gamma", antitone).informational());

    if field_csv.is_none() {
        s.write_field("field.csv", &field)?;
    }
    let p = s.path("regularity.json");
    regularity::write_report_json(&p, &report)?;
    let p = s.path("holder.csv");
    regularity::write_holder_csv(&p, &[("field".to_string(), report.clone())])?;
    let mut constants = s.constants();
    constants.eps = field_csv.is_none().then(|| vec![eps]);
    if let Some(c) = &report.certificate {
        constants.a1 = Some(c.params.a1);
        constants.a2 = Some(c.params.a2);
        constants.r = Some(c.params.r);
        constants.gamma = Some(c.params.gamma);
    }
    let manifest = s.finish(config, ExperimentKind::Certify, checks, constants)?;
    Ok(RunOutput { report, manifest })
}

/// Runs `kind` (or the config's own experiment) and returns its manifest.
pub fn run(config: &ExperimentConfig, kind: Option<ExperimentKind>) -> Result<Manifest> {
    let kind = kind
        .or_else(|| config.experiment.as_ref().map(Experiment::kind))
        .ok_or_else(|| Error::Config("no experiment selected".into()))?;
    Ok(match kind {
        ExperimentKind::Stationary => run_stationary(config)?.manifest,
        ExperimentKind::Ergodic => run_ergodic(config)?.manifest,
        ExperimentKind::Evolve => run_evolve(config)?.manifest,
        ExperimentKind::EpsilonSweep => run_epsilon_sweep(config)?.manifest,
        ExperimentKind::LargeTime => run_large_time(config)?.manifest,
        ExperimentKind::Cesaro => run_cesaro(config)?.manifest,
        ExperimentKind::DegenerateLadder => run_degenerate_ladder(config)?.manifest,
        ExperimentKind::Certify => run_certify(config)?.manifest,
    })
}
