//! Gaussian linear time-invariant motion and observation models.
//!
//! Every model admits a closed-form transition over an arbitrary step `h`:
//!
//! ```text
//! x_k = F(h) x_{k-1} + M(h) + e_k,    e_k ~ N(0, Q(h))
//! y_k = G x_k + v_k,                  v_k ~ N(0, V)
//! ```
//!
//! Spatial axes are independent and share one noise intensity. Constant
//! velocity states are interleaved per axis as `[p_0, v_0, p_1, v_1, ...]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, relative_asymmetry, symmetrize};

/// Motion model family.
#[derive(Clone, Debug, PartialEq)]
pub enum MotionFamily {
    /// Position-only Wiener process; `sigma` in m/s^(1/2).
    BrownianMotion,
    /// White-noise acceleration on `[position, velocity]`; `sigma` in m/s^(3/2).
    ConstantVelocity,
    /// Ornstein-Uhlenbeck on position, pulled towards `attractor` at `rate` (1/s).
    MeanReverting { rate: f64, attractor: DVector<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LtiModel {
    family: MotionFamily,
    sigma: f64,
    dims: usize,
}

/// The `(F, Q, M)` triple over a step of `h` seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub m: DVector<f64>,
    pub h: f64,
}

impl Transition {
    /// Identity transition on an `n`-dimensional state with no noise.
    pub fn identity(n: usize, h: f64) -> Self {
        Transition { f: DMatrix::identity(n, n), q: DMatrix::zeros(n, n), m: DVector::zeros(n), h }
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }
}

fn check_sigma_dims(sigma: f64, dims: usize) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    if dims == 0 {
        return Err(Error::invalid("model needs at least one spatial dimension"));
    }
    Ok(())
}

impl LtiModel {
    pub fn brownian(dims: usize, sigma: f64) -> Result<Self> {
        check_sigma_dims(sigma, dims)?;
        Ok(LtiModel { family: MotionFamily::BrownianMotion, sigma, dims })
    }

    pub fn constant_velocity(dims: usize, sigma: f64) -> Result<Self> {
        check_sigma_dims(sigma, dims)?;
        Ok(LtiModel { family: MotionFamily::ConstantVelocity, sigma, dims })
    }

    pub fn mean_reverting(dims: usize, sigma: f64, rate: f64, attractor: DVector<f64>) -> Result<Self> {
        check_sigma_dims(sigma, dims)?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("reversion rate must be positive, got {rate}")));
        }
        if attractor.len() != dims {
            return Err(Error::invalid(format!("attractor has {} components, model has {dims} axes", attractor.len())));
        }
        Ok(LtiModel { family: MotionFamily::MeanReverting { rate, attractor }, sigma, dims })
    }

    pub fn family(&self) -> &MotionFamily {
        &self.family
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Per-axis state block size.
    fn block(&self) -> usize {
        match self.family {
            MotionFamily::ConstantVelocity => 2,
            _ => 1,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.dims * self.block()
    }

    /// Index of the position component of `axis` in the state vector.
    pub fn position_index(&self, axis: usize) -> usize {
        axis * self.block()
    }

    /// `dims × s` matrix picking the position components out of a state.
    pub fn position_selector(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.dims, self.state_dim());
        for axis in 0..self.dims {
            g[(axis, self.position_index(axis))] = 1.0;
        }
        g
    }

    /// Closed-form `(F, Q, M)` for a step of `h ≥ 0` seconds.
    pub fn transition(&self, h: f64) -> Result<Transition> {
        if !(h.is_finite() && h >= 0.0) {
            return Err(Error::invalid(format!("time step must be finite and non-negative, got {h}")));
        }
        let s = self.state_dim();
        let var = self.sigma * self.sigma;
        let mut f = DMatrix::zeros(s, s);
        let mut q = DMatrix::zeros(s, s);
        let mut m = DVector::zeros(s);
        match &self.family {
            MotionFamily::BrownianMotion => {
                for i in 0..s {
                    f[(i, i)] = 1.0;
                    q[(i, i)] = var * h;
                }
            }
            MotionFamily::ConstantVelocity => {
                let (h2, h3) = (h * h, h * h * h);
                for axis in 0..self.dims {
                    let p = 2 * axis;
                    let v = p + 1;
                    f[(p, p)] = 1.0;
                    f[(p, v)] = h;
                    f[(v, v)] = 1.0;
                    q[(p, p)] = var * h3 / 3.0;
                    q[(p, v)] = var * h2 / 2.0;
                    q[(v, p)] = var * h2 / 2.0;
                    q[(v, v)] = var * h;
                }
            }
            MotionFamily::MeanReverting { rate, attractor } => {
                let decay = (-rate * h).exp();
                // (1 - e^{-2λh}) / 2λ, written to stay accurate for small λh.
                let spread = -(-2.0 * rate * h).exp_m1() / (2.0 * rate);
                for i in 0..s {
                    f[(i, i)] = decay;
                    q[(i, i)] = var * spread;
                    m[i] = -(-rate * h).exp_m1() * attractor[i];
                }
            }
        }
        Ok(Transition { f, q, m, h })
    }

    /// Propagate a belief forward by `h` seconds.
    pub fn predict(&self, belief: &GaussianBelief, h: f64) -> Result<GaussianBelief> {
        if belief.dim() != self.state_dim() {
            return Err(Error::invalid(format!(
                "belief has dimension {}, model state dimension is {}",
                belief.dim(),
                self.state_dim()
            )));
        }
        let tr = self.transition(h)?;
        Ok(belief.propagate(&tr))
    }
}

/// Mean, covariance and timestamp of a Gaussian state estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    time: f64,
}

impl GaussianBelief {
    /// Validated constructor: covariance must be square, symmetric to 1e-9
    /// relative, and have no eigenvalue below `-1e-9 · trace`.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, time: f64) -> Result<Self> {
        if cov.nrows() != cov.ncols() || cov.nrows() != mean.len() {
            return Err(Error::invalid(format!(
                "covariance {:?} does not match mean of length {}",
                cov.shape(),
                mean.len()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) || !time.is_finite() {
            return Err(Error::invalid("belief contains non-finite values"));
        }
        if relative_asymmetry(&cov) > 1e-9 {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let trace = cov.trace();
        let min_eig = symmetrize(&cov).symmetric_eigenvalues().min();
        if min_eig < -1e-9 * trace.abs() - f64::MIN_POSITIVE {
            return Err(Error::invalid(format!("covariance is not PSD (min eigenvalue {min_eig})")));
        }
        Ok(GaussianBelief { mean, cov, time })
    }

    pub fn point_mass(mean: DVector<f64>, time: f64) -> Self {
        let n = mean.len();
        GaussianBelief { mean, cov: DMatrix::zeros(n, n), time }
    }

    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>, time: f64) -> Self {
        GaussianBelief { mean, cov, time }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal over the contiguous components `start..start + len`.
    pub fn marginal(&self, start: usize, len: usize) -> GaussianBelief {
        GaussianBelief {
            mean: self.mean.rows(start, len).into_owned(),
            cov: self.cov.view((start, start), (len, len)).into_owned(),
            time: self.time,
        }
    }

    /// Apply a linear-Gaussian transition without any dimension checks.
    pub(crate) fn propagate(&self, tr: &Transition) -> GaussianBelief {
        let mean = &tr.f * &self.mean + &tr.m;
        let cov = symmetrize(&(&tr.f * &self.cov * tr.f.transpose() + &tr.q));
        GaussianBelief { mean, cov, time: self.time + tr.h }
    }

    /// Same belief with every position component shifted by `offset`.
    pub fn translated(&self, model: &LtiModel, offset: &DVector<f64>) -> GaussianBelief {
        let mut out = self.clone();
        for axis in 0..model.dims() {
            out.mean[model.position_index(axis)] += offset[axis];
        }
        out
    }
}

/// Linear-Gaussian measurement map `y = G x + v`, `v ~ N(0, V)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationModel {
    g: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl ObservationModel {
    pub fn new(g: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if v.nrows() != v.ncols() || v.nrows() != g.nrows() {
            return Err(Error::invalid(format!(
                "noise covariance {:?} does not match mapping {:?}",
                v.shape(),
                g.shape()
            )));
        }
        if g.nrows() > g.ncols() || g.clone().svd(false, false).rank(1e-12) < g.nrows() {
            return Err(Error::invalid("observation matrix must have full row rank"));
        }
        if relative_asymmetry(&v) > 1e-12 || cholesky(&v).is_none() {
            return Err(Error::invalid("observation noise covariance must be symmetric positive definite"));
        }
        Ok(ObservationModel { g, v })
    }

    /// Observe the position block of `model`'s state with isotropic noise of
    /// standard deviation `noise_std` metres.
    pub fn position_only(model: &LtiModel, noise_std: f64) -> Result<Self> {
        if !(noise_std.is_finite() && noise_std > 0.0) {
            return Err(Error::invalid(format!("observation noise std must be positive, got {noise_std}")));
        }
        let d = model.dims();
        Self::new(model.position_selector(), DMatrix::identity(d, d) * (noise_std * noise_std))
    }

    pub(crate) fn from_parts(g: DMatrix<f64>, v: DMatrix<f64>) -> Self {
        ObservationModel { g, v }
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn obs_dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.g.ncols()
    }
}

/// `default_observation` as a free function: position selector with isotropic noise.
pub fn default_observation(dims: usize, model: &LtiModel, noise_std: f64) -> Result<ObservationModel> {
    if dims != model.dims() {
        return Err(Error::invalid(format!("requested {dims} observed axes for a {}-axis model", model.dims())));
    }
    ObservationModel::position_only(model, noise_std)
}
