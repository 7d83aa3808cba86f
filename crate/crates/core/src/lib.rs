//! Day-ahead distribution market clearing with distribution locational
//! marginal prices (DLMPs) on radial feeders.

// `!(x >= 0.0)` style checks are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assets;
pub mod dlmp;
pub mod error;
pub mod market;
pub mod network;
pub mod pep;
pub mod powerflow;
pub mod runner;
pub mod solver;

pub use dlmp::{decompose, DlmpReport, SensitivityBundle};
pub use error::{Error, Result};
pub use market::{build_dam, clear, clear_market, extract_duals, MarketCase, MarketConfig, MarketSolution, VreForecast};
pub use network::{build_topology, LineParams, Network};
pub use pep::{brute_force_pep, pep_schedule, solve_pep, solve_pep_milp, PepResult, SampleSet};
pub use powerflow::{
    linearize_losses, linearized_voltages, sweep_power_flow, LossGradientMode, LossModel, PfState, SweepOptions,
};
pub use runner::{load_case, run_scenario, sweep_confidence, CaseFile, RunRecord, ScenarioRun, ScenarioSpec};
pub use solver::{HighsSolver, LinExpr, MilpSolver, Model};
