//! Run configuration: a single JSON document, every key optional.
//!
//! Unknown keys are rejected so that a typo cannot silently fall back to a
//! default. [`RunConfig::validate`] builds every model object once, so a
//! config that loads is a config that runs.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bridge::{DestinationPrior, DEFAULT_ENDPOINT_VELOCITY_VAR};
use crate::error::{Error, Result};
use crate::lti::{GaussianBelief, LtiModel, ObservationModel};
use crate::pipeline::EngineSettings;
use crate::report::ReportFormat;
use crate::sim::SimScenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    BrownianMotion,
    ConstantVelocity,
    MeanReverting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub family: FamilyName,
    pub sigma: f64,
    pub dims: usize,
    /// Reversion rate (1/s), mean-reverting only.
    pub rate: Option<f64>,
    /// Mean-reverting attractor; defaults to the vehicle position.
    pub attractor: Option<Vec<f64>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { family: FamilyName::ConstantVelocity, sigma: 1.0, dims: 2, rate: None, attractor: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    /// Vehicle location in the local frame (m).
    pub position: Vec<f64>,
    /// Per-axis standard deviation of the arrival location (m).
    pub extent_std: Vec<f64>,
    /// Variance of each endpoint velocity component (m²/s²).
    pub velocity_var: f64,
    /// `[lat, lon]` of the local frame origin, required for geodetic tracks.
    pub latlon: Option<[f64; 2]>,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        VehicleConfig {
            position: vec![0.0, 0.0],
            extent_std: vec![2.0, 2.0],
            velocity_var: DEFAULT_ENDPOINT_VELOCITY_VAR,
            latlon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub bridged: bool,
    /// Arrival time after the start (s), bridged tracks only.
    pub arrival: f64,
    pub rate: f64,
    pub duration: f64,
    /// Timestamp jitter as a fraction of the sampling period.
    pub jitter: f64,
    pub seed: u64,
    /// Noise added to simulated fixes (m); defaults to `observation_noise_std`.
    pub noise_std: Option<f64>,
    pub start_position: Vec<f64>,
    pub start_position_std: f64,
    pub start_velocity_std: f64,
    /// Endpoint velocity variance used to draw arrivals (m²/s²).
    pub endpoint_velocity_var: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            bridged: false,
            arrival: 100.0,
            rate: 1.0,
            duration: 120.0,
            jitter: 0.0,
            seed: 0,
            noise_std: None,
            start_position: vec![-140.0, 0.0],
            start_position_std: 1.0,
            start_velocity_std: 1.0,
            endpoint_velocity_var: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Paired bridged/free trials per noise level.
    pub trials: usize,
    /// Observation noise levels to sweep (m).
    pub noise_levels: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { trials: 200, noise_levels: vec![1.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub vehicle: VehicleConfig,
    pub observation_noise_std: f64,
    pub prior_return: f64,
    pub gamma: f64,
    /// `[t_a, t_b]`, seconds after the first fix.
    pub arrival_window: [f64; 2],
    pub q: usize,
    pub init_position_std: f64,
    pub init_velocity_std: f64,
    pub parallel: bool,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: ReportFormat,
    pub simulation: SimConfig,
    pub evaluation: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let engine = EngineSettings::default();
        RunConfig {
            model: ModelConfig::default(),
            vehicle: VehicleConfig::default(),
            observation_noise_std: 1.0,
            prior_return: engine.prior_return,
            gamma: engine.gamma,
            arrival_window: [engine.window.0, engine.window.1],
            q: engine.q,
            init_position_std: engine.init_position_std,
            init_velocity_std: engine.init_velocity_std,
            parallel: engine.parallel,
            input: None,
            output: None,
            format: ReportFormat::Csv,
            simulation: SimConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Check every precondition by building the objects a run needs.
    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        self.observation(&model)?;
        self.destination(&model)?;
        self.engine_settings().validate()?;
        self.scenario(&model, self.simulation.bridged, self.simulation_noise_std(), self.simulation.seed)?
            .validate()?;
        if self.evaluation.trials == 0 {
            return Err(Error::invalid("evaluation needs at least one trial"));
        }
        if self.evaluation.noise_levels.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(Error::invalid("evaluation noise levels must be non-negative"));
        }
        if let Some([lat, lon]) = self.vehicle.latlon {
            crate::track::project(lat, lon, (lat, lon))?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<LtiModel> {
        let m = &self.model;
        match m.family {
            FamilyName::BrownianMotion => LtiModel::brownian(m.dims, m.sigma),
            FamilyName::ConstantVelocity => LtiModel::constant_velocity(m.dims, m.sigma),
            FamilyName::MeanReverting => {
                let rate = m.rate.ok_or_else(|| Error::invalid("mean_reverting needs `rate`"))?;
                let attractor = m.attractor.as_ref().unwrap_or(&self.vehicle.position);
                LtiModel::mean_reverting(m.dims, m.sigma, rate, DVector::from_column_slice(attractor))
            }
        }
    }

    pub fn observation(&self, model: &LtiModel) -> Result<ObservationModel> {
        ObservationModel::position_only(model, self.observation_noise_std)
    }

    pub fn destination(&self, model: &LtiModel) -> Result<DestinationPrior> {
        let v = &self.vehicle;
        DestinationPrior::at_position(model, &v.position, &v.extent_std, v.velocity_var)
    }

    pub fn engine_settings(&self) -> EngineSettings {
        EngineSettings {
            prior_return: self.prior_return,
            gamma: self.gamma,
            window: (self.arrival_window[0], self.arrival_window[1]),
            q: self.q,
            init_position_std: self.init_position_std,
            init_velocity_std: self.init_velocity_std,
            parallel: self.parallel,
        }
    }

    pub fn simulation_noise_std(&self) -> f64 {
        self.simulation.noise_std.unwrap_or(self.observation_noise_std)
    }

    /// Simulation scenario built from the `simulation` section, starting at t = 0.
    pub fn scenario(&self, model: &LtiModel, bridged: bool, noise_std: f64, seed: u64) -> Result<SimScenario> {
        let sim = &self.simulation;
        let d = model.dims();
        if sim.start_position.len() != d {
            return Err(Error::invalid(format!("simulation start position must have {d} components")));
        }
        if !(sim.start_position_std >= 0.0 && sim.start_velocity_std >= 0.0) {
            return Err(Error::invalid("simulation start standard deviations must be non-negative"));
        }
        let s = model.state_dim();
        let mut mean = DVector::zeros(s);
        let mut cov = DMatrix::from_diagonal_element(s, s, sim.start_velocity_std.powi(2));
        for axis in 0..d {
            let p = model.position_index(axis);
            mean[p] = sim.start_position[axis];
            cov[(p, p)] = sim.start_position_std.powi(2);
        }
        let v = &self.vehicle;
        Ok(SimScenario {
            model: model.clone(),
            start: GaussianBelief::new(mean, cov, 0.0)?,
            dest: DestinationPrior::at_position(model, &v.position, &v.extent_std, sim.endpoint_velocity_var)?,
            bridged,
            arrival: sim.arrival,
            rate: sim.rate,
            obs_noise_std: noise_std,
            duration: sim.duration,
            jitter: sim.jitter,
            seed,
        })
    }
}
