//! Per-fix inference loop: filter bank → evidence → posteriors → decision.

use nalgebra::{DMatrix, DVector};

use crate::bridge::DestinationPrior;
use crate::error::{Error, Result};
use crate::filter_bank::FilterBank;
use crate::intent::{
    arrival_point_estimate, arrival_posterior, decide, hypothesis_posterior, marginal_likelihood_return, ArrivalPrior,
    IntentReport, QuadratureGrid, UniformArrival,
};
use crate::lti::{GaussianBelief, LtiModel, ObservationModel};
use crate::track::TrackSample;

/// Knobs that do not belong to the motion or observation model.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineSettings {
    pub prior_return: f64,
    pub gamma: f64,
    /// Arrival window `[t_a, t_b]`, seconds after the first fix.
    pub window: (f64, f64),
    pub q: usize,
    /// Std of the initial position around the first fix (m).
    pub init_position_std: f64,
    /// Std of each initial velocity component (m/s), for models with velocity.
    pub init_velocity_std: f64,
    pub parallel: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            prior_return: 0.5,
            gamma: 0.5,
            window: (5.0, 600.0),
            q: 40,
            init_position_std: 2.0,
            init_velocity_std: 1.5,
            parallel: false,
        }
    }
}

impl EngineSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_return > 0.0 && self.prior_return < 1.0) {
            return Err(Error::invalid(format!("prior_return must lie in (0, 1), got {}", self.prior_return)));
        }
        if !(self.gamma >= 0.5 && self.gamma < 1.0) {
            return Err(Error::invalid(format!("gamma must lie in [0.5, 1), got {}", self.gamma)));
        }
        let (a, b) = self.window;
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > a) {
            return Err(Error::invalid(format!("arrival window [{a}, {b}] must satisfy 0 < t_a < t_b")));
        }
        if self.q < 3 {
            return Err(Error::invalid(format!("q must be at least 3, got {}", self.q)));
        }
        if !(self.init_position_std > 0.0 && self.init_velocity_std > 0.0) {
            return Err(Error::invalid("initial state standard deviations must be positive"));
        }
        Ok(())
    }
}

/// Prior on the state at the first fix: position centred on the fix,
/// velocity centred on zero.
pub fn initial_belief(
    model: &LtiModel,
    first: &DVector<f64>,
    t: f64,
    position_std: f64,
    velocity_std: f64,
) -> GaussianBelief {
    let s = model.state_dim();
    let mut mean = DVector::zeros(s);
    let mut cov = DMatrix::from_diagonal_element(s, s, velocity_std * velocity_std);
    for axis in 0..model.dims() {
        let p = model.position_index(axis);
        mean[p] = first[axis];
        cov[(p, p)] = position_std * position_std;
    }
    GaussianBelief::from_parts(mean, cov, t)
}

pub struct IntentEngine {
    bank: FilterBank,
    grid: QuadratureGrid,
    prior: Box<dyn ArrivalPrior>,
    prior_return: f64,
    gamma: f64,
}

impl IntentEngine {
    pub fn new(
        bank: FilterBank,
        grid: QuadratureGrid,
        prior: Box<dyn ArrivalPrior>,
        prior_return: f64,
        gamma: f64,
    ) -> Self {
        IntentEngine { bank, grid, prior, prior_return, gamma }
    }

    /// Engine whose initial belief and arrival window are anchored on the
    /// first fix, with a uniform arrival prior.
    pub fn from_first_fix(
        model: &LtiModel,
        obs: &ObservationModel,
        dest: &DestinationPrior,
        first: &TrackSample,
        settings: &EngineSettings,
    ) -> Result<Self> {
        settings.validate()?;
        if first.position.len() != model.dims() {
            return Err(Error::invalid(format!(
                "fix has {} coordinates, model has {} axes",
                first.position.len(),
                model.dims()
            )));
        }
        let init =
            initial_belief(model, &first.position, first.t, settings.init_position_std, settings.init_velocity_std);
        let grid = QuadratureGrid::simpson(first.t + settings.window.0, first.t + settings.window.1, settings.q)?;
        let bank =
            FilterBank::new(model.clone(), obs.clone(), dest.clone(), init, &grid)?.with_parallel(settings.parallel);
        let prior = Box::new(UniformArrival::over(&grid));
        Ok(IntentEngine::new(bank, grid, prior, settings.prior_return, settings.gamma))
    }

    pub fn observe(&mut self, y: &DVector<f64>, t: f64) -> Result<IntentReport> {
        self.bank.step(y, t)?;
        self.report()
    }

    /// Report for the fixes absorbed so far.
    pub fn report(&self) -> Result<IntentReport> {
        let log_return = marginal_likelihood_return(&self.bank, &self.grid, self.prior.as_ref())?;
        let log_not = self.bank.free().log_likelihood();
        let (p_return, p_not) = hypothesis_posterior(log_not, log_return, self.prior_return);
        let weights = arrival_posterior(&self.bank, &self.grid, self.prior.as_ref())?;
        let (t_map, t_std) = arrival_point_estimate(&weights, &self.grid);
        Ok(IntentReport {
            t: self.bank.last_time(),
            p_return,
            p_not,
            t_map,
            t_std,
            decision: decide(p_return, self.gamma),
            arrival_weights: weights,
        })
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }
}

/// One report per sample.
pub fn run_track(
    model: &LtiModel,
    obs: &ObservationModel,
    dest: &DestinationPrior,
    samples: &[TrackSample],
    settings: &EngineSettings,
) -> Result<Vec<IntentReport>> {
    let first = samples.first().ok_or_else(|| Error::Validation("track is empty".into()))?;
    let mut engine = IntentEngine::from_first_fix(model, obs, dest, first, settings)?;
    samples.iter().map(|s| engine.observe(&s.position, s.t)).collect()
}
