//! Hypothesis posteriors, arrival-time marginalization and the decision rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter_bank::FilterBank;

/// Candidate arrival times with composite Simpson weights over `[start, end]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    start: f64,
    end: f64,
}

impl QuadratureGrid {
    /// Uniform grid of `q` points (bumped to `q + 1` when `q` is even, so the
    /// number of subintervals is even).
    pub fn simpson(start: f64, end: f64, q: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::invalid(format!("degenerate arrival interval [{start}, {end}]")));
        }
        if q < 3 {
            return Err(Error::invalid(format!("need at least 3 quadrature points, got {q}")));
        }
        let n = if q.is_multiple_of(2) { q + 1 } else { q };
        let step = (end - start) / (n - 1) as f64;
        let points = (0..n).map(|i| if i == n - 1 { end } else { start + step * i as f64 }).collect();
        let weights = (0..n)
            .map(|i| {
                let c = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * step / 3.0
            })
            .collect();
        Ok(QuadratureGrid { points, weights, start, end })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.end - self.start) / (self.points.len() - 1) as f64
    }

    /// `Σ w_i f(T_i)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

pub fn make_grid(start: f64, end: f64, q: usize) -> Result<QuadratureGrid> {
    QuadratureGrid::simpson(start, end, q)
}

/// Prior density `p(T | returning)` over arrival times.
pub trait ArrivalPrior: Send + Sync {
    fn density(&self, t: f64) -> f64;
}

impl<F> ArrivalPrior for F
where
    F: Fn(f64) -> f64 + Send + Sync,
{
    fn density(&self, t: f64) -> f64 {
        self(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformArrival {
    pub start: f64,
    pub end: f64,
}

impl UniformArrival {
    pub fn over(grid: &QuadratureGrid) -> Self {
        let (start, end) = grid.bounds();
        UniformArrival { start, end }
    }
}

impl ArrivalPrior for UniformArrival {
    fn density(&self, t: f64) -> f64 {
        if t >= self.start && t <= self.end {
            1.0 / (self.end - self.start)
        } else {
            0.0
        }
    }
}

fn log_sum_exp(terms: &[f64]) -> Option<f64> {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let sum: f64 = terms.iter().map(|&x| (x - max).exp()).sum();
    Some(max + sum.ln())
}

fn check_lengths(log_liks: &[f64], grid: &QuadratureGrid) -> Result<()> {
    if log_liks.len() != grid.len() {
        return Err(Error::invalid(format!("{} accumulators for {} quadrature points", log_liks.len(), grid.len())));
    }
    Ok(())
}

/// `log Σ_i w_i exp(log_L_i) p(T_i)`: the quadrature estimate of
/// `log p(y_{1:k} | returning)`.
pub fn marginal_log_likelihood(log_liks: &[f64], grid: &QuadratureGrid, prior: &dyn ArrivalPrior) -> Result<f64> {
    check_lengths(log_liks, grid)?;
    let terms: Vec<f64> = log_liks
        .iter()
        .zip(grid.points().iter().zip(grid.weights()))
        .map(|(&l, (&t, &w))| w.ln() + l + prior.density(t).ln())
        .collect();
    log_sum_exp(&terms).ok_or(Error::DegenerateEvidence)
}

/// Discrete arrival-time posterior, `w_i ∝ exp(log_L_i) p(T_i)`.
pub fn arrival_weights(log_liks: &[f64], grid: &QuadratureGrid, prior: &dyn ArrivalPrior) -> Result<Vec<f64>> {
    check_lengths(log_liks, grid)?;
    let terms: Vec<f64> = log_liks.iter().zip(grid.points()).map(|(&l, &t)| l + prior.density(t).ln()).collect();
    let norm = log_sum_exp(&terms).ok_or(Error::DegenerateEvidence)?;
    Ok(terms.iter().map(|&x| (x - norm).exp()).collect())
}

fn check_shared(bank: &FilterBank, grid: &QuadratureGrid) -> Result<()> {
    if bank.arrival_times() != grid.points() {
        return Err(Error::invalid("filter bank and quadrature grid disagree on arrival times"));
    }
    Ok(())
}

pub fn marginal_likelihood_return(bank: &FilterBank, grid: &QuadratureGrid, prior: &dyn ArrivalPrior) -> Result<f64> {
    check_shared(bank, grid)?;
    marginal_log_likelihood(&bank.arrival_log_likelihoods(), grid, prior)
}

pub fn arrival_posterior(bank: &FilterBank, grid: &QuadratureGrid, prior: &dyn ArrivalPrior) -> Result<Vec<f64>> {
    check_shared(bank, grid)?;
    arrival_weights(&bank.arrival_log_likelihoods(), grid, prior)
}

/// Normalized `(p_return, p_not)` from the two evidences and the prior
/// probability of returning. The pair sums to exactly 1.
pub fn hypothesis_posterior(log_l_not: f64, log_l_return: f64, prior_return: f64) -> (f64, f64) {
    let a = log_l_return + prior_return.ln();
    let b = log_l_not + (1.0 - prior_return).ln();
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return (prior_return, 1.0 - prior_return);
    }
    let d = b - a;
    // Compute the smaller probability directly, the other as its complement.
    if d >= 0.0 {
        let e = (-d).exp();
        let p_return = e / (1.0 + e);
        (p_return, 1.0 - p_return)
    } else {
        let e = d.exp();
        let p_not = e / (1.0 + e);
        (1.0 - p_not, p_not)
    }
}

/// MAP arrival time (earliest on ties) and posterior standard deviation.
pub fn arrival_point_estimate(weights: &[f64], grid: &QuadratureGrid) -> (f64, f64) {
    let points = grid.points();
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = i;
        }
    }
    let mean: f64 = weights.iter().zip(points).map(|(w, t)| w * t).sum();
    let var: f64 = weights.iter().zip(points).map(|(w, t)| w * (t - mean) * (t - mean)).sum();
    (points[best], var.max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Returning,
    NotReturning,
    Undecided,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Returning => "returning",
            Decision::NotReturning => "not_returning",
            Decision::Undecided => "undecided",
        }
    }
}

/// Threshold rule; `gamma = 0.5` picks the more probable hypothesis.
pub fn decide(p_return: f64, gamma: f64) -> Decision {
    if p_return >= gamma {
        Decision::Returning
    } else if p_return <= 1.0 - gamma {
        Decision::NotReturning
    } else {
        Decision::Undecided
    }
}

/// Everything inferred after absorbing the fix at `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentReport {
    pub t: f64,
    pub p_return: f64,
    pub p_not: f64,
    #[serde(rename = "T_map")]
    pub t_map: f64,
    #[serde(rename = "T_std")]
    pub t_std: f64,
    pub decision: Decision,
    #[serde(skip)]
    pub arrival_weights: Vec<f64>,
}
