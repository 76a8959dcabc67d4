//! Experiment orchestration: configs, run directories, sweeps, cross-β
//! evaluation grids, model selection and the trade-off theorem harness.
//!
//! All outputs are headed CSV files, one observation per line, readable by
//! gnuplot (`set datafile separator ","`) or any dataframe library.

pub mod config;
pub mod run;
pub mod select;
pub mod sweep;
pub mod theorem;

pub use config::{ExperimentConfig, ResolvedRun, ResolvedSweep};
pub use run::{
    cmd_evaluate, cmd_heatmap, cmd_pareto_approx, cmd_train, load_run, HeatmapRow, LoadedRun, RunRecord,
};
pub use select::{cmd_select, SelectRow};
pub use sweep::{cmd_sweep, ParetoRow, SweepOutput, SweepRow};
pub use theorem::{cmd_theorem_check, TheoremReport};
