//! Configuration-driven experiment runners behind the command line tool.

pub mod config;
pub mod manifest;
mod runners;

pub use config::{Experiment, ExperimentConfig, ExperimentKind, ProblemConfig, SchemeOverrides};
pub use manifest::{config_hash, Check, Constants, Manifest};
pub use runners::{
    hopf_cole_form, m_and_gap, run, run_certify, run_cesaro, run_degenerate_ladder,
    run_epsilon_sweep, run_ergodic, run_evolve, run_large_time, run_stationary, with_inferred_meta,
    CesaroRow, CesaroTable, ErgodicComparison, LargeTimeReport, RunOutput, SubadditivityRow,
    SweepRow, SweepTable,
};
