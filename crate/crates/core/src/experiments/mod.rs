//! Experiment harness: configuration profiles, the run grid, invariant
//! suites and figure rendering.

pub mod config;
pub mod plot;
pub mod run;
pub mod verify;

pub use config::{ExperimentConfig, Profile, OUT_DIR_ENV};
pub use plot::{cmd_plot, parse_trajectory_csv, render_svg, PlotKind, Series};
pub use run::{cmd_run, expand_grid, solve_references, RunSummary, SweepResult};
pub use verify::{cmd_verify, CheckClass, CheckResult, Suite, VerifyReport};

/// Process exit codes shared by the command-line front end.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const ASSERTION: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
}
