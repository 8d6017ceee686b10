//! Physics-guided network model of the electromagnetic part: a sinusoidal
//! gain corrected by position-dependent networks, plus a cogging network.

pub mod io;
pub mod lip;
pub mod mlp;
pub mod model;
pub mod samples;
pub mod train;

pub use lip::{
    build_regressor, fit_physical_anchor, least_squares_linear, linear_params,
    residual_correlation, set_linear_params, LinearLayout, RegularizationSpec,
};
pub use mlp::MlpParams;
pub use model::{
    combine_coilsets, pgnn_gain, pgnn_predict, CoilInput, InputScaling, PgnnCoilModel,
    PgnnFullModel, PHYSICAL_PARAMS,
};
pub use samples::{Sample, TrainingSet};
pub use train::{
    cost, cost_gradient, data_mse, train, train_from_datasets, Hyperparams, TrainedCoil,
    TrainingReport,
};

/// Forward pass of a network.
pub fn mlp_forward(net: &MlpParams, x: f64) -> [f64; 3] {
    net.forward(x)
}

/// Final hidden activation of a network.
pub fn mlp_hidden(net: &MlpParams, x: f64) -> Vec<f64> {
    net.hidden(x)
}
