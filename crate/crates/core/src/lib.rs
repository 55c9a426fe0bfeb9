//! Gradient descent for over-parameterized low-rank matrix sensing: ground
//! truth construction, Gaussian sensing operators, GD trajectories with
//! per-rank diagnostics, the best rank-`s` landscape and experiment drivers.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod ground_truth;
pub mod landscape;
pub mod linalg;
pub mod random;
pub mod sensing;

pub use error::{Error, Result};
pub use ground_truth::{make_ground_truth, GroundTruth, Truncation, TruthMode};
pub use linalg::Mat;
pub use sensing::{EnsembleKind, EnsembleSpec, MeasurementEnsemble};
pub use dynamics::{run_gd, GdConfig, PhaseReport, RunStatus, StepRecord, Trajectory};
pub use landscape::{solve_best_rank_s, BestRankSolution};
