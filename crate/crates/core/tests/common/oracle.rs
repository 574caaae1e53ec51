//! Batch joint-Gaussian marginal likelihoods, built by stacking the whole
//! trajectory into one affine map of independent Gaussian sources. Nothing
//! here touches the recursive filter code.

use nalgebra::{DMatrix, DVector};
use return_intent::{DestinationPrior, GaussianBelief, LtiModel, ObservationModel, EPS_BRIDGE};

fn transition(model: &LtiModel, h: f64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let s = model.state_dim();
    if h == 0.0 {
        return (DMatrix::identity(s, s), DMatrix::zeros(s, s), DVector::zeros(s));
    }
    let tr = model.transition(h).unwrap();
    (tr.f, tr.q, tr.m)
}

/// Free process sampled at `times` (non-decreasing, all `>= t0`) written as
/// `X = A x0 + c + B e` with `e ~ N(0, blockdiag(Q_j))`. Returns `(A, c, S)`
/// where `S = B Cov(e) B'`.
fn stacked_free(model: &LtiModel, t0: f64, times: &[f64]) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let s = model.state_dim();
    let k = times.len();
    let mut a = DMatrix::zeros(k * s, s);
    let mut c = DVector::zeros(k * s);
    let mut b = DMatrix::zeros(k * s, k * s);
    let mut qs = DMatrix::zeros(k * s, k * s);
    let mut prev_a = DMatrix::identity(s, s);
    let mut prev_c = DVector::zeros(s);
    let mut prev_b = DMatrix::zeros(s, k * s);
    let mut prev_t = t0;
    for (j, &t) in times.iter().enumerate() {
        let (f, q, m) = transition(model, t - prev_t);
        let aj = &f * &prev_a;
        let cj = &f * &prev_c + m;
        let mut bj = &f * &prev_b;
        bj.view_mut((0, j * s), (s, s)).copy_from(&DMatrix::identity(s, s));
        a.view_mut((j * s, 0), (s, s)).copy_from(&aj);
        c.rows_mut(j * s, s).copy_from(&cj);
        b.view_mut((j * s, 0), (s, k * s)).copy_from(&bj);
        qs.view_mut((j * s, j * s), (s, s)).copy_from(&q);
        prev_a = aj;
        prev_c = cj;
        prev_b = bj;
        prev_t = t;
    }
    let cov = &b * qs * b.transpose();
    (a, c, cov)
}

fn log_normal(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let cov = (cov + cov.transpose()) * 0.5;
    let chol = cov.clone().cholesky().expect("oracle covariance is positive definite");
    let r = y - mean;
    let z = chol.l().solve_lower_triangular(&r).unwrap();
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    -0.5 * (y.len() as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + z.norm_squared())
}

fn observe(
    obs: &ObservationModel,
    state_map: &DMatrix<f64>,
    state_mean: &DVector<f64>,
    state_cov: &DMatrix<f64>,
    k: usize,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let s = obs.state_dim();
    let d = obs.obs_dim();
    let mut g = DMatrix::zeros(k * d, k * s);
    let mut v = DMatrix::zeros(k * d, k * d);
    for j in 0..k {
        g.view_mut((j * d, j * s), (d, s)).copy_from(obs.g());
        v.view_mut((j * d, j * d), (d, d)).copy_from(obs.v());
    }
    let map = &g * state_map;
    (map, &g * state_mean, &g * state_cov * g.transpose() + v)
}

fn stack(ys: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(ys.iter().map(|y| y.len()).sum(), ys.iter().flat_map(|y| y.iter().copied()))
}

/// `log p(y_1..y_k)` under the unbridged model.
pub fn free_log_likelihood(
    model: &LtiModel,
    obs: &ObservationModel,
    init: &GaussianBelief,
    times: &[f64],
    ys: &[DVector<f64>],
) -> f64 {
    let (a, c, s) = stacked_free(model, init.time(), times);
    let x_mean = &a * init.mean() + c;
    let x_cov = &a * init.cov() * a.transpose() + s;
    let k = times.len();
    let ident = DMatrix::identity(x_mean.len(), x_mean.len());
    let (_, y_mean, y_cov) = observe(obs, &ident, &x_mean, &x_cov, k);
    log_normal(&stack(ys), &y_mean, &y_cov)
}

/// `log p(y_1..y_k | arrival)` under the bridged model: the free process
/// conditioned on its state at `arrival`, that state drawn from `dest`
/// independently of the start, and the state held at the endpoint for
/// every fix within the bridge tolerance of the arrival or after it.
pub fn bridged_log_likelihood(
    model: &LtiModel,
    obs: &ObservationModel,
    init: &GaussianBelief,
    dest: &DestinationPrior,
    arrival: f64,
    times: &[f64],
    ys: &[DVector<f64>],
) -> f64 {
    let s = model.state_dim();
    let k = times.len();
    let before: Vec<f64> = times.iter().copied().take_while(|&t| arrival - t >= EPS_BRIDGE).collect();
    let nb = before.len();
    let mut grid = before.clone();
    grid.push(arrival);
    let (a, c, cov) = stacked_free(model, init.time(), &grid);

    // Condition the first nb blocks on the last one.
    let n1 = nb * s;
    let a1 = a.rows(0, n1).into_owned();
    let a2 = a.rows(n1, s).into_owned();
    let c1 = c.rows(0, n1).into_owned();
    let c2 = c.rows(n1, s).into_owned();
    let s11 = cov.view((0, 0), (n1, n1)).into_owned();
    let s12 = cov.view((0, n1), (n1, s)).into_owned();
    let s22 = cov.view((n1, n1), (s, s)).into_owned();
    let gain = &s12 * s22.clone().try_inverse().expect("free covariance at arrival is invertible");
    let resid = s11 - &gain * s12.transpose();

    // Every fix state as P x0 + R xT + d + eps.
    let mut p = DMatrix::zeros(k * s, s);
    let mut r = DMatrix::zeros(k * s, s);
    let mut d = DVector::zeros(k * s);
    let mut eps = DMatrix::zeros(k * s, k * s);
    p.rows_mut(0, n1).copy_from(&(&a1 - &gain * &a2));
    r.rows_mut(0, n1).copy_from(&gain);
    d.rows_mut(0, n1).copy_from(&(&c1 - &gain * &c2));
    eps.view_mut((0, 0), (n1, n1)).copy_from(&resid);
    for j in nb..k {
        r.view_mut((j * s, 0), (s, s)).copy_from(&DMatrix::identity(s, s));
    }
    let x_mean = &p * init.mean() + &r * dest.mean() + d;
    let x_cov = &p * init.cov() * p.transpose() + &r * dest.cov() * r.transpose() + eps;
    let ident = DMatrix::identity(k * s, k * s);
    let (_, y_mean, y_cov) = observe(obs, &ident, &x_mean, &x_cov, k);
    log_normal(&stack(ys), &y_mean, &y_cov)
}
