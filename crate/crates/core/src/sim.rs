//! Synthetic tracks: free motion under the LTI model, or bridged paths that
//! terminate at a sampled endpoint at a given arrival time.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bridge::{bridge_params, DestinationPrior, EPS_BRIDGE};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::lti::{GaussianBelief, LtiModel};
use crate::track::TrackSample;

#[derive(Clone, Debug, PartialEq)]
pub struct SimScenario {
    pub model: LtiModel,
    /// Law of the state at the first sample; its time is the track start.
    pub start: GaussianBelief,
    /// Law of the state at arrival (bridged tracks only).
    pub dest: DestinationPrior,
    pub bridged: bool,
    /// Arrival time, seconds after the start.
    pub arrival: f64,
    /// Observation rate (Hz).
    pub rate: f64,
    pub obs_noise_std: f64,
    /// Track length (s).
    pub duration: f64,
    /// Timestamp jitter as a fraction of the nominal period, applied
    /// uniformly in `±jitter` to every sample except the first and last.
    pub jitter: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub bridged: bool,
    /// Absolute arrival time for bridged tracks.
    pub arrival: Option<f64>,
    /// Hidden state at each sample.
    pub states: Vec<DVector<f64>>,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let s = self.model.state_dim();
        if self.start.dim() != s || self.dest.dim() != s {
            return Err(Error::invalid("start/destination laws do not match the model state"));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::invalid(format!("rate must be positive, got {}", self.rate)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.obs_noise_std.is_finite() && self.obs_noise_std >= 0.0) {
            return Err(Error::invalid("observation noise std must be non-negative"));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::invalid(format!("jitter fraction must lie in [0, 0.5), got {}", self.jitter)));
        }
        if self.bridged && !(self.arrival > EPS_BRIDGE && self.arrival <= self.duration) {
            return Err(Error::invalid(format!(
                "arrival {} must lie within the track duration {}",
                self.arrival, self.duration
            )));
        }
        Ok(())
    }

    /// Number of samples before jitter: one at the start plus one per period.
    pub fn sample_count(&self) -> usize {
        (self.duration * self.rate + 1e-9).floor() as usize + 1
    }
}

/// Draw from `N(mean, cov)` for PSD (possibly singular) `cov`.
pub fn sample_gaussian<R: Rng>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = mean.len();
    let eig = symmetrize(cov).symmetric_eigen();
    let z = DVector::from_fn(n, |i, _| {
        let draw: f64 = rng.sample(StandardNormal);
        draw * eig.eigenvalues[i].max(0.0).sqrt()
    });
    mean + &eig.eigenvectors * z
}

pub fn simulate(sc: &SimScenario) -> Result<(Vec<TrackSample>, GroundTruth)> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let model = &sc.model;
    let t0 = sc.start.time();
    let period = 1.0 / sc.rate;
    let n = sc.sample_count();

    let times: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 || k == n - 1 {
                t0 + k as f64 * period
            } else {
                let j: f64 = if sc.jitter > 0.0 { rng.random_range(-sc.jitter..sc.jitter) } else { 0.0 };
                t0 + (k as f64 + j) * period
            }
        })
        .collect();

    let mut x = sample_gaussian(sc.start.mean(), sc.start.cov(), &mut rng);
    let endpoint = sc.bridged.then(|| sample_gaussian(sc.dest.mean(), sc.dest.cov(), &mut rng));
    let arrival = t0 + sc.arrival;
    let mut arrived = false;
    let mut states = vec![x.clone()];
    for k in 1..n {
        let h = times[k] - times[k - 1];
        x = match &endpoint {
            Some(end) if !arrived => {
                let to_go = arrival - times[k];
                if to_go >= EPS_BRIDGE {
                    let p = bridge_params(model, h, to_go)?;
                    let mean = &p.state_gain * &x + &p.end_gain * end + &p.drift;
                    sample_gaussian(&mean, &p.cov, &mut rng)
                } else {
                    arrived = true;
                    end.clone()
                }
            }
            Some(end) => end.clone(),
            None => {
                let tr = model.transition(h)?;
                sample_gaussian(&(&tr.f * &x + &tr.m), &tr.q, &mut rng)
            }
        };
        states.push(x.clone());
    }

    let select = model.position_selector();
    let samples = times
        .iter()
        .zip(&states)
        .map(|(&t, state)| {
            let noise = DVector::from_fn(model.dims(), |_, _| {
                let draw: f64 = rng.sample(StandardNormal);
                draw * sc.obs_noise_std
            });
            TrackSample { t, position: &select * state + noise }
        })
        .collect();
    let truth = GroundTruth { bridged: sc.bridged, arrival: sc.bridged.then_some(arrival), states };
    Ok((samples, truth))
}
