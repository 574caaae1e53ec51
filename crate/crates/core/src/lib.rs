//! Online inference of whether a tracked person is returning to a parked
//! vehicle, and of when they will arrive.
//!
//! The not-returning hypothesis is scored by a plain Kalman filter on a
//! Gaussian LTI motion model. The returning hypothesis is scored by a bank of
//! filters on the same model bridged to the vehicle, one per candidate arrival
//! time, and integrated over arrival time by Simpson quadrature.

pub mod bridge;
pub mod config;
pub mod error;
pub mod eval;
pub mod filter_bank;
pub mod intent;
pub(crate) mod linalg;
pub mod lti;
pub mod pipeline;
pub mod report;
pub mod sim;
pub mod track;

pub use bridge::{
    bridge_params, bridged_predictive, bridged_predictive_path, extended_observation, extended_prior,
    extended_transition, BridgeParams, BridgedTransition, DestinationPrior, EPS_BRIDGE,
};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use eval::{run_eval, EvalRow};
pub use filter_bank::{kf_update, EntryStatus, FilterBank, KalmanStep};
pub use intent::{
    arrival_point_estimate, arrival_posterior, decide, hypothesis_posterior, make_grid, marginal_likelihood_return,
    ArrivalPrior, Decision, IntentReport, QuadratureGrid, UniformArrival,
};
pub use linalg::symmetrize;
pub use lti::{default_observation, GaussianBelief, LtiModel, MotionFamily, ObservationModel, Transition};
pub use pipeline::{run_track, EngineSettings, IntentEngine};
pub use report::{emit_report, ReportFormat, ReportWriter};
pub use sim::{simulate, GroundTruth, SimScenario};
pub use track::{latlon_to_local, parse_track, Frame, Track, TrackSample};
