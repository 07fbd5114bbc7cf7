//! Posterior over latent market regimes.
//!
//! The filter is an exact discrete Bayes filter over the `K` regimes of the
//! market family. Evidence is censored: a win reveals the price ratio
//! `rho = m / u`, a loss only reveals that `rho >= bid / u`. Thompson sampling
//! draws one regime hypothesis per slot from the current posterior.
//!
//! The Gaussian KL and negated ELBO of the variational Q-learning objective are
//! kept here as pure functions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::RegimeModel;
use crate::math::{lognormal_log_pdf, norm_log_sf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    /// Uniform prior over `k` regimes.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("belief needs at least one regime".into()));
        }
        Ok(Self {
            probs: vec![1.0 / k as f64; k],
        })
    }

    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("not a probability vector: {probs:?}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the most probable regime (ties to the smaller index).
    pub fn map_regime(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

pub fn init_belief(k: usize) -> Result<Belief> {
    Belief::uniform(k)
}

/// Auction-level evidence from one slot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotEvidence {
    ratio: f64,
    won_prices: Vec<f64>,
    won_utilities: Vec<f64>,
    lost_bids: Vec<f64>,
    lost_utilities: Vec<f64>,
}

impl SlotEvidence {
    pub fn new(ratio: f64) -> Self {
        Self {
            ratio,
            ..Default::default()
        }
    }

    pub fn push_win(&mut self, utility: f64, price: f64) {
        self.won_utilities.push(utility);
        self.won_prices.push(price);
    }

    pub fn push_loss(&mut self, utility: f64, bid: f64) {
        self.lost_utilities.push(utility);
        self.lost_bids.push(bid);
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn wins(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.won_utilities.iter().copied().zip(self.won_prices.iter().copied())
    }

    pub fn losses(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lost_utilities.iter().copied().zip(self.lost_bids.iter().copied())
    }

    pub fn num_wins(&self) -> usize {
        self.won_prices.len()
    }

    pub fn num_losses(&self) -> usize {
        self.lost_bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.won_prices.is_empty() && self.lost_bids.is_empty()
    }
}

/// Censored log-likelihood of one slot's evidence under `regime`.
pub fn slot_log_likelihood(regime: &RegimeModel, evidence: &SlotEvidence) -> Result<f64> {
    let (mu, sigma) = (regime.price_ratio_log_mean, regime.price_ratio_log_std);
    let mut ll = 0.0;
    for (u, price) in evidence.wins() {
        if !(u > 0.0) {
            return Err(Error::InvalidArgument("evidence with non-positive utility".into()));
        }
        ll += lognormal_log_pdf(price / u, mu, sigma);
    }
    for (u, bid) in evidence.losses() {
        if !(u > 0.0) {
            return Err(Error::InvalidArgument("evidence with non-positive utility".into()));
        }
        ll += norm_log_sf(((bid / u).ln() - mu) / sigma);
    }
    Ok(ll)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefUpdate {
    pub belief: Belief,
    /// Every regime assigned zero likelihood; the predict step was kept.
    pub degenerate: bool,
}

/// One predict-correct step of the regime filter.
pub fn update_belief(
    belief: &Belief,
    evidence: &SlotEvidence,
    regimes: &[RegimeModel],
    transition_matrix: &[Vec<f64>],
) -> Result<BeliefUpdate> {
    let k = belief.len();
    if regimes.len() != k || transition_matrix.len() != k {
        return Err(Error::InvalidArgument("belief, regimes and transitions disagree on K".into()));
    }
    let mut predicted = vec![0.0; k];
    for (i, p) in belief.probs.iter().enumerate() {
        for (j, q) in transition_matrix[i].iter().enumerate() {
            predicted[j] += p * q;
        }
    }
    let s: f64 = predicted.iter().sum();
    predicted.iter_mut().for_each(|p| *p /= s);

    if evidence.is_empty() {
        return Ok(BeliefUpdate {
            belief: Belief { probs: predicted },
            degenerate: false,
        });
    }
    let logs: Vec<f64> = predicted
        .iter()
        .zip(regimes)
        .map(|(p, r)| Ok(p.ln() + slot_log_likelihood(r, evidence)?))
        .collect::<Result<_>>()?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Ok(BeliefUpdate {
            belief: Belief { probs: predicted },
            degenerate: true,
        });
    }
    let mut post: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = post.iter().sum();
    post.iter_mut().for_each(|p| *p /= z);
    Ok(BeliefUpdate {
        belief: Belief { probs: post },
        degenerate: false,
    })
}

/// Draws a regime index with probability `probs[z]`.
pub fn thompson_sample(belief: &Belief, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in belief.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    belief.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// `KL(N(mu, diag(sigma^2)) || N(0, I))`.
pub fn gaussian_kl(mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if mu.len() != sigma.len() {
        return Err(Error::InvalidArgument("mu and sigma lengths differ".into()));
    }
    let mut kl = 0.0;
    for (&m, &s) in mu.iter().zip(sigma) {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {s}")));
        }
        kl += 0.5 * (s * s + m * m - 1.0 - 2.0 * s.ln());
    }
    Ok(kl)
}

/// Negated ELBO: mean squared Bellman residual plus the prior KL.
pub fn elbo_loss(squared_residuals: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if squared_residuals.is_empty() {
        return Err(Error::InvalidArgument("no residuals".into()));
    }
    let mean = squared_residuals.iter().sum::<f64>() / squared_residuals.len() as f64;
    Ok(mean + gaussian_kl(mu, sigma)?)
}
