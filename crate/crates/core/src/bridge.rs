//! Arrival-time-conditioned dynamics: the Markov bridge to the vehicle.
//!
//! The state is extended with the endpoint, `z_k = [x_k; x_T]`, and the
//! transition conditions each step on reaching `x_T` at the arrival time `T`:
//!
//! ```text
//! z_k = R_k z_{k-1} + m̃_k + g_k,   g_k ~ N(0, U_k)
//! R_k = [H_k; 0 I],  m̃_k = [m_k; 0],  U_k = [C_k 0; 0 0]
//! C_k = (Q(h)^-1 + F(h̃)' Q(h̃)^-1 F(h̃))^-1
//! H_k = [C_k Q(h)^-1 F(h),  C_k F(h̃)' Q(h̃)^-1]
//! m_k = C_k (Q(h)^-1 M(h) - F(h̃)' Q(h̃)^-1 M(h̃))
//! ```
//!
//! with `h = t_k - t_{k-1}` and `h̃ = T - t_k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, cholesky, symmetrize};
use crate::lti::{GaussianBelief, LtiModel, ObservationModel, Transition};

/// Smallest time-to-go (s) for which the bridge is formed explicitly. Closer
/// to the arrival the endpoint is applied as an exact constraint instead.
pub const EPS_BRIDGE: f64 = 1e-3;

/// Default endpoint velocity variance (m²/s²) for models that carry velocity.
///
/// This is a claim about arrival speed, not a neutral choice: a very broad
/// value tells the bridge to expect arrivals at any speed and costs the
/// returning hypothesis an Occam penalty on every track. One m²/s² matches
/// walking pace.
pub const DEFAULT_ENDPOINT_VELOCITY_VAR: f64 = 1.0;

/// Gaussian prior `N(a_v, Σ_v)` over the full state at arrival.
#[derive(Clone, Debug, PartialEq)]
pub struct DestinationPrior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl DestinationPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        // Reuse the belief validation for shape/symmetry/PSD.
        let checked = GaussianBelief::new(mean, cov, 0.0)?;
        Ok(DestinationPrior { mean: checked.mean().clone(), cov: checked.cov().clone() })
    }

    /// Vehicle centred at `position` with per-axis extent standard deviation
    /// `extent_std` (m). Velocity components, if the model has any, get mean
    /// zero and variance `velocity_var`.
    pub fn at_position(model: &LtiModel, position: &[f64], extent_std: &[f64], velocity_var: f64) -> Result<Self> {
        let d = model.dims();
        if position.len() != d || extent_std.len() != d {
            return Err(Error::invalid(format!("vehicle position/extent must have {d} components")));
        }
        if extent_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("vehicle extent std must be non-negative"));
        }
        if !(velocity_var.is_finite() && velocity_var >= 0.0) {
            return Err(Error::invalid("endpoint velocity variance must be non-negative"));
        }
        let s = model.state_dim();
        let mut mean = DVector::zeros(s);
        let mut cov = DMatrix::zeros(s, s);
        if s > d {
            for i in 0..s {
                cov[(i, i)] = velocity_var;
            }
        }
        for axis in 0..d {
            let p = model.position_index(axis);
            mean[p] = position[axis];
            cov[(p, p)] = extent_std[axis] * extent_std[axis];
        }
        Ok(DestinationPrior { mean, cov })
    }

    pub fn point_mass(model: &LtiModel, position: &[f64]) -> Result<Self> {
        Self::at_position(model, position, &vec![0.0; model.dims()], 0.0)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn as_belief(&self, time: f64) -> GaussianBelief {
        GaussianBelief::from_parts(self.mean.clone(), self.cov.clone(), time)
    }

    /// Same prior with every position component shifted by `offset`.
    pub fn translated(&self, model: &LtiModel, offset: &DVector<f64>) -> DestinationPrior {
        let mut out = self.clone();
        for axis in 0..model.dims() {
            out.mean[model.position_index(axis)] += offset[axis];
        }
        out
    }
}

/// `H_k = [state_gain, end_gain]`, `C_k = cov`, `m_k = drift` for one bridged step.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeParams {
    pub state_gain: DMatrix<f64>,
    pub end_gain: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    pub drift: DVector<f64>,
}

impl BridgeParams {
    /// The full `s × 2s` matrix `H_k`.
    pub fn gain(&self) -> DMatrix<f64> {
        let s = self.state_gain.nrows();
        let mut h = DMatrix::zeros(s, 2 * s);
        h.view_mut((0, 0), (s, s)).copy_from(&self.state_gain);
        h.view_mut((0, s), (s, s)).copy_from(&self.end_gain);
        h
    }
}

/// Bridged step parameters for a step of `h` seconds leaving `h_to_go`
/// seconds until arrival.
pub fn bridge_params(model: &LtiModel, h: f64, h_to_go: f64) -> Result<BridgeParams> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("bridge step must be positive, got {h}")));
    }
    if !(h_to_go.is_finite() && h_to_go >= EPS_BRIDGE) {
        return Err(Error::invalid(format!("time to arrival {h_to_go} s is below the bridging floor {EPS_BRIDGE} s")));
    }
    let step = model.transition(h)?;
    let rest = model.transition(h_to_go)?;
    let chol_q = cholesky(&step.q).ok_or(Error::BridgeDegenerate { h })?;
    let chol_rest = cholesky(&rest.q).ok_or(Error::BridgeDegenerate { h: h_to_go })?;

    let s = model.state_dim();
    let q_inv = chol_q.solve(&DMatrix::identity(s, s));
    let q_inv_f = chol_q.solve(&step.f);
    // Q(h̃)^-1 F(h̃); its transpose is F(h̃)' Q(h̃)^-1.
    let rest_inv_f = chol_rest.solve(&rest.f);
    let info = symmetrize(&(q_inv + rest.f.transpose() * &rest_inv_f));
    let chol_info = cholesky(&info).ok_or(Error::BridgeDegenerate { h })?;
    let cov = symmetrize(&chol_info.solve(&DMatrix::identity(s, s)));

    let back = rest_inv_f.transpose();
    let state_gain = &cov * q_inv_f;
    let end_gain = &cov * &back;
    let drift = &cov * (chol_q.solve(&step.m) - &back * &rest.m);
    Ok(BridgeParams { state_gain, end_gain, cov, drift })
}

/// Extended-state transition `(R, m̃, U)` with its bridge blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgedTransition {
    pub step: Transition,
    pub params: BridgeParams,
}

impl BridgedTransition {
    pub fn r(&self) -> &DMatrix<f64> {
        &self.step.f
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.step.q
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.step.m
    }
}

pub fn extended_transition(model: &LtiModel, h: f64, h_to_go: f64) -> Result<BridgedTransition> {
    let params = bridge_params(model, h, h_to_go)?;
    let s = model.state_dim();
    let mut r = DMatrix::zeros(2 * s, 2 * s);
    r.view_mut((0, 0), (s, s)).copy_from(&params.state_gain);
    r.view_mut((0, s), (s, s)).copy_from(&params.end_gain);
    r.view_mut((s, s), (s, s)).fill_with_identity();
    let mut m = DVector::zeros(2 * s);
    m.rows_mut(0, s).copy_from(&params.drift);
    let mut u = DMatrix::zeros(2 * s, 2 * s);
    u.view_mut((0, 0), (s, s)).copy_from(&params.cov);
    Ok(BridgedTransition { step: Transition { f: r, q: u, m, h }, params })
}

/// Step that lands exactly on the endpoint: `x_k ← x_T`, endpoint carried.
pub fn arrival_transition(state_dim: usize, h: f64) -> Transition {
    let s = state_dim;
    let mut r = DMatrix::zeros(2 * s, 2 * s);
    r.view_mut((0, s), (s, s)).fill_with_identity();
    r.view_mut((s, s), (s, s)).fill_with_identity();
    Transition { f: r, q: DMatrix::zeros(2 * s, 2 * s), m: DVector::zeros(2 * s), h }
}

/// Observation of the extended state: `G̃ = [G, 0]`, same noise.
pub fn extended_observation(obs: &ObservationModel) -> ObservationModel {
    let (k, s) = obs.g().shape();
    let mut g = DMatrix::zeros(k, 2 * s);
    g.view_mut((0, 0), (k, s)).copy_from(obs.g());
    ObservationModel::from_parts(g, obs.v().clone())
}

/// Independent block-diagonal prior over `[x_1; x_T]`.
pub fn extended_prior(init: &GaussianBelief, dest: &DestinationPrior) -> Result<GaussianBelief> {
    if init.dim() != dest.dim() {
        return Err(Error::invalid(format!(
            "initial belief has dimension {}, destination prior {}",
            init.dim(),
            dest.dim()
        )));
    }
    let s = init.dim();
    let mut mean = DVector::zeros(2 * s);
    mean.rows_mut(0, s).copy_from(init.mean());
    mean.rows_mut(s, s).copy_from(dest.mean());
    Ok(GaussianBelief::from_parts(mean, block_diag(init.cov(), dest.cov()), init.time()))
}

/// Extended belief propagated to each of `times` (strictly increasing, all
/// after `init`, none after `arrival`) under the bridge to `dest` at `arrival`.
pub fn bridged_predictive_path(
    init: &GaussianBelief,
    model: &LtiModel,
    dest: &DestinationPrior,
    arrival: f64,
    times: &[f64],
) -> Result<Vec<GaussianBelief>> {
    let s = model.state_dim();
    if init.dim() != s {
        return Err(Error::invalid("initial belief does not match the model state"));
    }
    let mut z = extended_prior(init, dest)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t > z.time() && t <= arrival) {
            return Err(Error::invalid(format!("prediction time {t} outside ({}, {arrival}]", z.time())));
        }
        let h = t - z.time();
        let to_go = arrival - t;
        let step =
            if to_go >= EPS_BRIDGE { extended_transition(model, h, to_go)?.step } else { arrival_transition(s, h) };
        z = z.propagate(&step);
        out.push(z.clone());
    }
    Ok(out)
}

/// Marginal of the state at `t_star` under the bridge from `init` to `dest`
/// reached at `arrival`.
pub fn bridged_predictive(
    init: &GaussianBelief,
    model: &LtiModel,
    dest: &DestinationPrior,
    arrival: f64,
    t_star: f64,
) -> Result<GaussianBelief> {
    let z = bridged_predictive_path(init, model, dest, arrival, &[t_star])?.pop().expect("one prediction time");
    Ok(z.marginal(0, model.state_dim()))
}
