//! TOML (or JSON) experiment descriptions.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::parabolic::TimeStepConfig;
use crate::problem::{Coefficient, DiffusionConfig, DiffusionSpec, HamiltonianSpec};
use crate::scheme::SchemeConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub diffusion: DiffusionConfig<f64>,
    pub hamiltonian: HamiltonianSpec<f64>,
}

impl Default for ProblemConfig {
    /// `A = I`, `H = |p|² + cos(2πx)`.
    fn default() -> Self {
        Self {
            diffusion: DiffusionConfig::Identity,
            hamiltonian: HamiltonianSpec::power_plus(2.0, Coefficient::cosine(&[1], 1.0, 0.0)),
        }
    }
}

/// Optional overrides of the certified scheme defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeOverrides {
    pub gradient_box: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub tol_residual: Option<f64>,
    pub max_newton: Option<usize>,
    pub damping: Option<f64>,
    pub adapt_box: Option<bool>,
}

fn two(v: &[f64], what: &str) -> Result<[f64; 2]> {
    match v {
        [a] => Ok([*a, 0.0]),
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::Config(format!("{what} needs one or two entries"))),
    }
}

impl SchemeOverrides {
    pub fn resolve(&self, h: &HamiltonianSpec<f64>, grid: &TorusGrid) -> Result<SchemeConfig<f64>> {
        let mut cfg = SchemeConfig::for_problem(h, grid);
        if let Some(b) = &self.gradient_box {
            cfg = cfg.with_gradient_box(h, grid, two(b, "gradient_box")?);
        }
        if let Some(t) = &self.theta {
            cfg.theta = two(t, "theta")?;
        }
        if let Some(t) = self.tol_residual {
            if !(t > 0.0) {
                return Err(Error::Config("tol_residual must be positive".into()));
            }
            cfg.tol_residual = t;
        }
        if let Some(m) = self.max_newton {
            cfg.max_newton = m;
        }
        if let Some(d) = self.damping {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::Config("damping must lie in (0,1]".into()));
            }
            cfg.damping = d;
        }
        if let Some(a) = self.adapt_box {
            cfg.adapt_box = a;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Stationary,
    Ergodic,
    Evolve,
    EpsilonSweep,
    LargeTime,
    Cesaro,
    DegenerateLadder,
    Certify,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::Ergodic => "ergodic",
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::EpsilonSweep => "epsilon_sweep",
            ExperimentKind::LargeTime => "large_time",
            ExperimentKind::Cesaro => "cesaro",
            ExperimentKind::DegenerateLadder => "degenerate_ladder",
            ExperimentKind::Certify => "certify",
        }
    }
}

fn d_eps() -> f64 {
    0.1
}
fn d_sweep() -> Vec<f64> {
    vec![1.0, 0.1, 0.01, 0.001]
}
fn d_schedule() -> Vec<f64> {
    crate::ergodic::default_eps_schedule()
}
fn d_one() -> f64 {
    1.0
}
fn d_twenty() -> f64 {
    20.0
}
fn d_forty() -> f64 {
    40.0
}
fn d_gap() -> f64 {
    1e-2
}
fn d_q() -> Vec<f64> {
    vec![10.0, 100.0, 1000.0]
}
fn d_certify_eps() -> f64 {
    0.01
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Stationary {
        #[serde(default = "d_eps")]
        eps: f64,
    },
    Ergodic {
        #[serde(default = "d_schedule")]
        eps_schedule: Vec<f64>,
    },
    Evolve {
        #[serde(default = "d_one")]
        t_final: f64,
        #[serde(default)]
        u0: Coefficient<f64>,
        #[serde(default)]
        snapshot_times: Option<Vec<f64>>,
    },
    EpsilonSweep {
        #[serde(default = "d_sweep")]
        eps: Vec<f64>,
        /// Hölder exponents; defaults to `(k−2)/(k−1)` when `k > 2`, plus 1/2 and 1.
        #[serde(default)]
        gammas: Option<Vec<f64>>,
    },
    LargeTime {
        #[serde(default = "d_twenty")]
        t_final: f64,
        #[serde(default)]
        u0: Coefficient<f64>,
        #[serde(default = "d_gap")]
        gap_threshold: f64,
    },
    Cesaro {
        #[serde(default = "d_forty")]
        t_final: f64,
        #[serde(default)]
        u0: Coefficient<f64>,
    },
    DegenerateLadder {
        #[serde(default = "d_eps")]
        eps: f64,
        #[serde(default = "d_q")]
        q_schedule: Vec<f64>,
        /// Upper growth exponent `M`; defaults to the Hamiltonian's metadata.
        #[serde(default)]
        growth_m: Option<f64>,
    },
    Certify {
        #[serde(default = "d_certify_eps")]
        eps: f64,
        /// Analyze this field instead of a fresh discounted solve.
        #[serde(default)]
        field_csv: Option<PathBuf>,
        #[serde(default)]
        gammas: Option<Vec<f64>>,
    },
}

impl Experiment {
    /// The experiment with every parameter at its default.
    pub fn defaults(kind: ExperimentKind) -> Self {
        serde_json::from_value(serde_json::json!({ "kind": kind.name() }))
            .expect("every experiment parameter has a default")
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            Experiment::Stationary { .. } => ExperimentKind::Stationary,
            Experiment::Ergodic { .. } => ExperimentKind::Ergodic,
            Experiment::Evolve { .. } => ExperimentKind::Evolve,
            Experiment::EpsilonSweep { .. } => ExperimentKind::EpsilonSweep,
            Experiment::LargeTime { .. } => ExperimentKind::LargeTime,
            Experiment::Cesaro { .. } => ExperimentKind::Cesaro,
            Experiment::DegenerateLadder { .. } => ExperimentKind::DegenerateLadder,
            Experiment::Certify { .. } => ExperimentKind::Certify,
        }
    }
}

fn d_grid() -> TorusGrid {
    TorusGrid::line(256).expect("256 cells is a valid grid")
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default = "d_grid")]
    pub grid: TorusGrid,
    #[serde(default)]
    pub scheme: SchemeOverrides,
    #[serde(default)]
    pub time: TimeStepConfig<f64>,
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default = "d_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            grid: d_grid(),
            scheme: SchemeOverrides::default(),
            time: TimeStepConfig::default(),
            experiment: None,
            output_dir: d_out(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `.json` files as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// The experiment section if it is of `kind`, else `kind` with defaults.
    pub fn experiment_or_default(&self, kind: ExperimentKind) -> Experiment {
        match &self.experiment {
            Some(e) if e.kind() == kind => e.clone(),
            _ => Experiment::defaults(kind),
        }
    }

    pub fn diffusion(&self) -> Result<DiffusionSpec<f64>> {
        DiffusionSpec::from_config(&self.problem.diffusion, self.grid.dim())
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig<f64>> {
        self.scheme.resolve(&self.problem.hamiltonian, &self.grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_with_defaults() {
        let text = r#"
            seed = 3
            [grid]
            dim = 1
            counts = [128]
            [problem.diffusion]
            kind = "scaled"
            nu = 0.5
            [problem.hamiltonian.family]
            kind = "power_coercive"
            k = 3.0
            ell = [{ freq = [1], cos = 1.0 }]
            [experiment]
            kind = "large_time"
            t_final = 5.0
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.grid.count(0), 128);
        assert_eq!(cfg.seed, 3);
        match cfg.experiment_or_default(ExperimentKind::LargeTime) {
            Experiment::LargeTime {
                t_final,
                gap_threshold,
                ..
            } => {
                assert_eq!(t_final, 5.0);
                assert_eq!(gap_threshold, 1e-2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            cfg.experiment_or_default(ExperimentKind::Cesaro),
            Experiment::Cesaro { t_final, .. } if t_final == 40.0
        ));
        let json = cfg.to_json_string().unwrap();
        let back = ExperimentConfig::from_json_str(&json).unwrap();
        assert_eq!(back.to_json_string().unwrap(), json);
    }

    #[test]
    fn every_kind_has_defaults() {
        for kind in [
            ExperimentKind::Stationary,
            ExperimentKind::Ergodic,
            ExperimentKind::Evolve,
            ExperimentKind::EpsilonSweep,
            ExperimentKind::LargeTime,
            ExperimentKind::Cesaro,
            ExperimentKind::DegenerateLadder,
            ExperimentKind::Certify,
        ] {
            assert_eq!(Experiment::defaults(kind).kind(), kind);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("sed = 1").is_err());
    }
}
