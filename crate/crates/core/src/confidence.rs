//! Closed-form posteriors for precondition and cost-bound hypotheses, and a
//! forward-sampling oracle to check them.
//!
//! Concepts are treated as independent, so `p_c` is always a marginal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::ObservationRates;
use crate::{Error, Result};

/// Posterior that `c` is a precondition after seeing it present in an
/// executable state, with exact detectors.
pub fn posterior_precondition_positive(prior: f64, p_c: f64) -> f64 {
    let chance = p_c * (1.0 - prior);
    1.0 - chance / (chance + prior)
}

/// An exact detector reporting `c` absent in an executable state refutes it.
pub fn posterior_precondition_negative_noiseless(_prior: f64) -> f64 {
    0.0
}

/// Bayes update for a precondition hypothesis from one noisy report.
///
/// Under the hypothesis the concept is present in every executable state;
/// otherwise it is present with probability `p_c`.
pub fn posterior_precondition_noisy(prior: f64, observed: bool, rates: ObservationRates, p_c: f64) -> f64 {
    let l_h = rates.likelihood(observed, true);
    let l_n = rates.likelihood(observed, true) * p_c + rates.likelihood(observed, false) * (1.0 - p_c);
    normalise(l_h * prior, l_n * (1.0 - prior), prior)
}

/// Log-likelihood ratio of one noisy report for "precondition" against
/// "not a precondition"; `None` when the report rules the hypothesis out.
/// Adding it to the prior log-odds gives the log-odds of
/// [`posterior_precondition_noisy`] without saturating at 0 or 1.
pub fn precondition_log_likelihood_ratio(observed: bool, rates: ObservationRates, p_c: f64) -> Option<f64> {
    let l_h = rates.likelihood(observed, true);
    let l_n = rates.likelihood(observed, true) * p_c + rates.likelihood(observed, false) * (1.0 - p_c);
    if l_h == 0.0 {
        None
    } else {
        Some(l_h.ln() - l_n.ln())
    }
}

pub fn log_odds(p: f64) -> f64 {
    p.ln() - (1.0 - p).ln()
}

pub fn from_log_odds(lo: f64) -> f64 {
    if lo >= 0.0 {
        1.0 / (1.0 + (-lo).exp())
    } else {
        let e = lo.exp();
        e / (1.0 + e)
    }
}

/// Posterior that an action costs at least `k` whenever the concept holds,
/// after one sample with the concept present and cost at least `k`.
pub fn posterior_cost(prior: f64, p_geq_k: f64) -> f64 {
    normalise(prior, p_geq_k * (1.0 - prior), prior)
}

/// Noisy-detector form of [`posterior_cost`]: one sample where the detector
/// reports the concept and the cost is at least `k`.
pub fn posterior_cost_noisy(prior: f64, rates: ObservationRates, p_c: f64, p_geq_k: f64) -> f64 {
    let (tp, fp) = (rates.p_true_pos, rates.p_false_pos);
    let reported = tp * p_c + fp * (1.0 - p_c);
    let l_h = tp * p_c + p_geq_k * fp * (1.0 - p_c);
    let l_n = p_geq_k * reported;
    normalise(l_h * prior, l_n * (1.0 - prior), prior)
}

/// Noisy-detector update for a sample where the detector reports the
/// concept but the cost is below `k`. Only a false report is compatible
/// with the hypothesis.
pub fn posterior_cost_noisy_contradiction(prior: f64, rates: ObservationRates, p_c: f64, p_geq_k: f64) -> f64 {
    let (tp, fp) = (rates.p_true_pos, rates.p_false_pos);
    let reported = tp * p_c + fp * (1.0 - p_c);
    let l_h = fp * (1.0 - p_c) * (1.0 - p_geq_k);
    let l_n = (1.0 - p_geq_k) * reported;
    normalise(l_h * prior, l_n * (1.0 - prior), prior)
}

fn normalise(h: f64, n: f64, prior: f64) -> f64 {
    let d = h + n;
    if d > 0.0 {
        (h / d).clamp(0.0, 1.0)
    } else {
        prior
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostTailEstimate {
    pub k: f64,
    pub p_geq_k: f64,
    pub sample_count: usize,
}

/// Fraction of sampled execution costs that are at least `k`.
pub fn estimate_cost_tail(costs: &[f64], k: f64) -> Result<CostTailEstimate> {
    if costs.is_empty() {
        return Err(Error::EmptySamples("cost tail"));
    }
    let n = costs.iter().filter(|&&c| c >= k).count();
    Ok(CostTailEstimate {
        k,
        p_geq_k: n as f64 / costs.len() as f64,
        sample_count: costs.len(),
    })
}

/// Tail estimates for several thresholds, forced non-increasing in `k`.
pub fn cost_tail_curve(costs: &[f64], ks: &[f64]) -> Result<Vec<CostTailEstimate>> {
    let mut order: Vec<usize> = (0..ks.len()).collect();
    order.sort_by(|&a, &b| ks[a].total_cmp(&ks[b]));
    let mut out: Vec<Option<CostTailEstimate>> = vec![None; ks.len()];
    let mut ceiling = 1.0f64;
    for i in order {
        let mut e = estimate_cost_tail(costs, ks[i])?;
        e.p_geq_k = e.p_geq_k.min(ceiling);
        ceiling = e.p_geq_k;
        out[i] = Some(e);
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// Generative models matching the closed forms above.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GenerativeSpec {
    /// hypothesis ~ prior; concept present always under it, else ~ p_c;
    /// a detector report is drawn; condition on the report being `observed`.
    Precondition {
        prior: f64,
        rates: ObservationRates,
        p_c: f64,
        observed: bool,
    },
    /// hypothesis ~ prior; concept ~ p_c; detector report drawn; cost is at
    /// least k for sure when hypothesis and concept hold, else with
    /// probability p_geq_k; condition on a report of presence and cost ≥ k.
    Cost {
        prior: f64,
        rates: ObservationRates,
        p_c: f64,
        p_geq_k: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub posterior: f64,
    pub accepted: usize,
    pub trials: usize,
}

impl MonteCarloEstimate {
    /// Binomial standard error of the estimate.
    pub fn std_error(&self) -> f64 {
        if self.accepted == 0 {
            return f64::INFINITY;
        }
        (self.posterior * (1.0 - self.posterior) / self.accepted as f64).sqrt()
    }
}

pub fn monte_carlo_posterior<R: Rng + ?Sized>(spec: GenerativeSpec, trials: usize, rng: &mut R) -> MonteCarloEstimate {
    let mut accepted = 0usize;
    let mut hits = 0usize;
    for _ in 0..trials {
        let (h, keep) = match spec {
            GenerativeSpec::Precondition {
                prior,
                rates,
                p_c,
                observed,
            } => {
                let h = rng.gen::<f64>() < prior;
                let present = h || rng.gen::<f64>() < p_c;
                let report = rng.gen::<f64>() < rates.likelihood(true, present);
                (h, report == observed)
            }
            GenerativeSpec::Cost {
                prior,
                rates,
                p_c,
                p_geq_k,
            } => {
                let h = rng.gen::<f64>() < prior;
                let present = rng.gen::<f64>() < p_c;
                let report = rng.gen::<f64>() < rates.likelihood(true, present);
                let high = (h && present) || rng.gen::<f64>() < p_geq_k;
                (h, report && high)
            }
        };
        if keep {
            accepted += 1;
            hits += h as usize;
        }
    }
    MonteCarloEstimate {
        posterior: if accepted == 0 { f64::NAN } else { hits as f64 / accepted as f64 },
        accepted,
        trials,
    }
}
