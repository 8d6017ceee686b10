//! Closed-loop experiments on the simulated motor.

pub mod closed_loop;
pub mod control;
pub mod filter;
pub mod log;
pub mod mechanics;
pub mod trajectory;

pub use closed_loop::{dataset_from_log, generate_dataset, run_closed_loop, LoopConfig, Strategy};
pub use control::{
    feedforward, fit_feedforward, identify_feedforward_params, FeedforwardParams, Pid, PidGains,
};
pub use filter::lowpass_filter;
pub use log::{mse_report, ExperimentLog, LogMeta, MseReport, DEFAULT_ERROR_CUTOFF};
pub use mechanics::{step_mechanics, MechConfig, MechState, VELOCITY_DEADBAND};
pub use trajectory::{
    back_and_forth, reference_set, third_order_trajectory, Profile, Reference, TrajectorySpec,
};
