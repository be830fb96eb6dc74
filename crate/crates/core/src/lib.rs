//! Online sequential prediction with a recurrent cell and a SARIMAX model
//! embedded in one state-space model and estimated jointly by a particle
//! filter.

pub mod cells;
pub mod data;
pub mod error;
pub mod filter;
pub mod model;
pub mod pipeline;
pub mod regressor;
pub mod statespace;
pub mod trace;

pub use cells::{gru_forward, lstm_forward, CellState};
pub use data::{
    load_csv, load_m4_pair, synth_hybrid, synth_hybrid_with, synth_sarimax, Dataset, HybridFixture,
    M4Frequency, SarimaxCoeffs, SyntheticSeries,
};
pub use error::{Error, Result};
pub use filter::{Ensemble, FilterConfig, InitSpec, PredictionMode, StepReport};
pub use model::{
    pack_params, unpack_params, CellKind, NoiseSpec, RnnParams, RnnSpec, SarimaxSpec, StateLayout,
    StateVector,
};
pub use pipeline::{
    cum_mse, mape, naive_predict, run_offline, run_offline_with, run_online, run_online_with,
    ModelKind, OfflineOutcome, OnlineStandardizer, PipelineConfig, RunRecord,
};
pub use regressor::{
    build_regressor, difference, undifference, HistoryBuffer, RegressorVector, ResidualBuffer,
};
pub use statespace::{log_likelihood, JointModel, TransitionInput};
