//! Kalman filtering with prediction-error-decomposition likelihoods.
//!
//! A [`FilterBank`] runs one unbridged filter for the not-returning hypothesis
//! and one bridged filter per candidate arrival time. Each filter accumulates
//! `log p(y_{1:k} | ·)` as a sum of one-step predictive log-densities.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bridge::{
    arrival_transition, extended_observation, extended_prior, extended_transition, DestinationPrior, EPS_BRIDGE,
};
use crate::error::{Error, Result};
use crate::intent::QuadratureGrid;
use crate::linalg::{cholesky, gaussian_log_density, symmetrize};
use crate::lti::{GaussianBelief, LtiModel, ObservationModel, Transition};

/// Posterior after one predict/update cycle and the log predictive density
/// of the absorbed measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanStep {
    pub posterior: GaussianBelief,
    pub log_ped: f64,
}

/// One Kalman predict/update. The covariance update uses the Joseph form.
pub fn kf_update(
    prior: &GaussianBelief,
    step: &Transition,
    obs: &ObservationModel,
    y: &DVector<f64>,
) -> Result<KalmanStep> {
    let n = prior.dim();
    if step.dim() != n || obs.state_dim() != n {
        return Err(Error::invalid(format!(
            "state dimension {n} does not match transition {} / observation {}",
            step.dim(),
            obs.state_dim()
        )));
    }
    if y.len() != obs.obs_dim() {
        return Err(Error::invalid(format!(
            "measurement has {} components, observation model expects {}",
            y.len(),
            obs.obs_dim()
        )));
    }
    let pred = prior.propagate(step);
    let g = obs.g();
    let p = pred.cov();
    let gp = g * p;
    let s = symmetrize(&(&gp * g.transpose() + obs.v()));
    let chol = cholesky(&s).ok_or_else(|| {
        Error::NumericalDegeneracy(format!("innovation covariance not positive definite at t = {}", pred.time()))
    })?;
    let innovation = y - g * pred.mean();
    let log_ped = gaussian_log_density(&innovation, &chol);

    let gain = chol.solve(&gp).transpose();
    let mean = pred.mean() + &gain * innovation;
    let a = DMatrix::identity(n, n) - &gain * g;
    let cov = symmetrize(&(&a * p * a.transpose() + &gain * obs.v() * gain.transpose()));

    if !log_ped.is_finite() || mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericalDegeneracy(format!("non-finite filter output at t = {}", pred.time())));
    }
    Ok(KalmanStep { posterior: GaussianBelief::from_parts(mean, cov, pred.time()), log_ped })
}

/// Lifecycle of a bridged filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryStatus {
    /// Arrival still ahead; the bridged dynamics apply.
    Active,
    /// Arrival time has passed: the state sits on the endpoint and later
    /// fixes are scored against it.
    Arrived,
    /// A numerical failure removed this entry from the evidence.
    Degenerate,
}

#[derive(Clone, Debug)]
pub struct BridgedEntry {
    arrival: f64,
    belief: GaussianBelief,
    log_likelihood: f64,
    status: EntryStatus,
}

impl BridgedEntry {
    pub fn arrival(&self) -> f64 {
        self.arrival
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    /// Raw accumulator, kept as-is when the entry degenerates.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn status(&self) -> EntryStatus {
        self.status
    }

    /// Accumulator as seen by the evidence: `-inf` once degenerate.
    pub fn evidence(&self) -> f64 {
        match self.status {
            EntryStatus::Degenerate => f64::NEG_INFINITY,
            _ => self.log_likelihood,
        }
    }

    fn advance(&mut self, model: &LtiModel, obs: &ObservationModel, y: &DVector<f64>, t: f64, h: f64) {
        let s = model.state_dim();
        let mut arrived = false;
        let step = match self.status {
            EntryStatus::Degenerate => return,
            EntryStatus::Arrived => Ok(Transition::identity(2 * s, h)),
            EntryStatus::Active if h == 0.0 => Ok(Transition::identity(2 * s, 0.0)),
            EntryStatus::Active => {
                let to_go = self.arrival - t;
                if to_go >= EPS_BRIDGE {
                    extended_transition(model, h, to_go).map(|b| b.step)
                } else {
                    arrived = true;
                    Ok(arrival_transition(s, h))
                }
            }
        };
        match step.and_then(|tr| kf_update(&self.belief, &tr, obs, y)) {
            Ok(out) => {
                self.belief = out.posterior;
                self.log_likelihood += out.log_ped;
                if arrived {
                    self.status = EntryStatus::Arrived;
                }
            }
            Err(_) => self.status = EntryStatus::Degenerate,
        }
    }
}

/// Unbridged filter for the not-returning hypothesis.
#[derive(Clone, Debug)]
pub struct FreeFilter {
    belief: GaussianBelief,
    log_likelihood: f64,
}

impl FreeFilter {
    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }
}

#[derive(Clone, Debug)]
pub struct FilterBank {
    model: LtiModel,
    obs: ObservationModel,
    ext_obs: ObservationModel,
    dest: DestinationPrior,
    free: FreeFilter,
    entries: Vec<BridgedEntry>,
    last_time: f64,
    steps: usize,
    parallel: bool,
}

impl FilterBank {
    /// Seeds the free filter with `init` and every bridged filter with the
    /// independent extended prior of `init` and `dest`.
    pub fn new(
        model: LtiModel,
        obs: ObservationModel,
        dest: DestinationPrior,
        init: GaussianBelief,
        grid: &QuadratureGrid,
    ) -> Result<Self> {
        let s = model.state_dim();
        if init.dim() != s || obs.state_dim() != s || dest.dim() != s {
            return Err(Error::invalid(format!(
                "model state dimension {s} does not match init {}, observation {} or destination {}",
                init.dim(),
                obs.state_dim(),
                dest.dim()
            )));
        }
        if grid.points().is_empty() {
            return Err(Error::invalid("quadrature grid is empty"));
        }
        if let Some(p) = grid.points().iter().find(|&&p| p <= init.time() + EPS_BRIDGE) {
            return Err(Error::invalid(format!("arrival time {p} is not after the initial time {}", init.time())));
        }
        let z0 = extended_prior(&init, &dest)?;
        let entries = grid
            .points()
            .iter()
            .map(|&arrival| BridgedEntry {
                arrival,
                belief: z0.clone(),
                log_likelihood: 0.0,
                status: EntryStatus::Active,
            })
            .collect();
        let ext_obs = extended_observation(&obs);
        Ok(FilterBank {
            last_time: init.time(),
            free: FreeFilter { belief: init, log_likelihood: 0.0 },
            model,
            obs,
            ext_obs,
            dest,
            entries,
            steps: 0,
            parallel: false,
        })
    }

    /// Fan the bridged updates out over the rayon pool.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    /// Absorb the fix `y` taken at `t`.
    ///
    /// Timestamps must increase strictly, except that the first fix may
    /// coincide with the initial belief's time, in which case it is absorbed
    /// without a prediction step.
    pub fn step(&mut self, y: &DVector<f64>, t: f64) -> Result<()> {
        if !t.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite measurement or timestamp"));
        }
        if y.len() != self.obs.obs_dim() {
            return Err(Error::invalid(format!(
                "measurement has {} components, expected {}",
                y.len(),
                self.obs.obs_dim()
            )));
        }
        let h = if self.steps == 0 && t == self.last_time {
            0.0
        } else if t > self.last_time {
            t - self.last_time
        } else {
            return Err(Error::invalid(format!(
                "timestamp {t} does not follow the previous fix at {}",
                self.last_time
            )));
        };

        let free_step = self.model.transition(h)?;
        let out = kf_update(&self.free.belief, &free_step, &self.obs, y)?;
        self.free.belief = out.posterior;
        self.free.log_likelihood += out.log_ped;

        let (model, obs) = (&self.model, &self.ext_obs);
        if self.parallel {
            self.entries.par_iter_mut().for_each(|e| e.advance(model, obs, y, t, h));
        } else {
            self.entries.iter_mut().for_each(|e| e.advance(model, obs, y, t, h));
        }
        self.last_time = t;
        self.steps += 1;
        Ok(())
    }

    pub fn free(&self) -> &FreeFilter {
        &self.free
    }

    pub fn entries(&self) -> &[BridgedEntry] {
        &self.entries
    }

    /// Per-arrival-time log-likelihoods in grid order (`-inf` for degenerate entries).
    pub fn arrival_log_likelihoods(&self) -> Vec<f64> {
        self.entries.iter().map(BridgedEntry::evidence).collect()
    }

    pub fn arrival_times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.arrival).collect()
    }

    pub fn last_time(&self) -> f64 {
        self.last_time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn model(&self) -> &LtiModel {
        &self.model
    }

    pub fn observation(&self) -> &ObservationModel {
        &self.obs
    }

    pub fn destination(&self) -> &DestinationPrior {
        &self.dest
    }
}
