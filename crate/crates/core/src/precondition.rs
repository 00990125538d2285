//! Missing-precondition search by hypothesis elimination.
//!
//! Hypotheses are the concepts absent at the failing state. Every sampled
//! state where the failing action executes is evidence: the exact search
//! drops concepts absent there; the probabilistic search updates a
//! posterior per concept and drops those falling below `kappa`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptId, ConceptMarginals, ObservationModel, Vocabulary};
use crate::confidence::{from_log_odds, log_odds, precondition_log_likelihood_ratio};
use crate::model::{ActionId, BlackBoxModel};
use crate::{Error, Result};

pub const DEFAULT_PRIOR: f64 = 0.5;
pub const DEFAULT_KAPPA: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PreconditionResult {
    Found {
        concept: ConceptId,
        posterior: f64,
        samples_used: usize,
    },
    VocabularyInsufficient {
        samples_used: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub concept: ConceptId,
    pub posterior: f64,
    pub log_odds: f64,
    pub alive: bool,
}

/// Posterior state of every hypothesis after some number of raw samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    pub samples: usize,
    pub hypotheses: Vec<Hypothesis>,
}

impl PosteriorTable {
    pub fn alive(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses.iter().filter(|h| h.alive)
    }

    pub fn get(&self, concept: ConceptId) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.concept == concept)
    }

    /// Alive hypothesis with the highest posterior; ties go to the lowest
    /// concept index.
    pub fn best(&self) -> Option<&Hypothesis> {
        let mut best: Option<&Hypothesis> = None;
        for h in self.alive() {
            if best.is_none_or(|b| h.log_odds > b.log_odds) {
                best = Some(h);
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactRun {
    pub survivors: Vec<ConceptId>,
    pub samples_used: usize,
    pub result: PreconditionResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilisticRun {
    pub result: PreconditionResult,
    pub table: PosteriorTable,
    /// One table per raw sample, starting with the priors.
    pub trace: Vec<PosteriorTable>,
}

impl ProbabilisticRun {
    pub fn survivors(&self) -> Vec<ConceptId> {
        self.table.alive().map(|h| h.concept).collect()
    }
}

/// Concepts absent at the failing state.
pub fn initial_hypotheses<S>(vocab: &Vocabulary<S>, fail_state: &S) -> Vec<ConceptId> {
    vocab.evaluate(fail_state).iter_false().collect()
}

fn require_failure<M: BlackBoxModel>(model: &M, state: &M::State, action: ActionId) -> Result<()> {
    if model.simulate(state, action)?.is_failure() {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "action {} does not fail in the given state",
            model.action_label(action)
        )))
    }
}

pub fn find_missing_precondition<M, I>(
    model: &M,
    fail_state: &M::State,
    fail_action: ActionId,
    vocab: &Vocabulary<M::State>,
    samples: I,
) -> Result<ExactRun>
where
    M: BlackBoxModel,
    I: IntoIterator<Item = M::State>,
{
    require_failure(model, fail_state, fail_action)?;
    let mut hyp = initial_hypotheses(vocab, fail_state);
    let mut used = 0;
    for s in samples {
        if hyp.is_empty() {
            break;
        }
        used += 1;
        if !model.simulate(&s, fail_action)?.is_failure() {
            let cv = vocab.evaluate(&s);
            hyp.retain(|&c| cv.get(c));
        }
    }
    let result = match hyp.first() {
        Some(&concept) => PreconditionResult::Found {
            concept,
            posterior: 1.0,
            samples_used: used,
        },
        None => PreconditionResult::VocabularyInsufficient { samples_used: used },
    };
    Ok(ExactRun {
        survivors: hyp,
        samples_used: used,
        result,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ProbabilisticSettings<'a> {
    pub observation: &'a ObservationModel,
    pub marginals: &'a ConceptMarginals,
    pub prior: f64,
    pub kappa: f64,
    /// Seeds the detector noise.
    pub seed: u64,
}

pub fn find_missing_precondition_probabilistic<M, I>(
    model: &M,
    fail_state: &M::State,
    fail_action: ActionId,
    vocab: &Vocabulary<M::State>,
    samples: I,
    settings: ProbabilisticSettings<'_>,
) -> Result<ProbabilisticRun>
where
    M: BlackBoxModel,
    I: IntoIterator<Item = M::State>,
{
    let ProbabilisticSettings {
        observation,
        marginals,
        prior,
        kappa,
        seed,
    } = settings;
    if !(prior > 0.0 && prior < 1.0) || !(0.0..1.0).contains(&kappa) {
        return Err(Error::Contract("prior must lie in (0,1) and kappa in [0,1)".into()));
    }
    if observation.len() != vocab.len() {
        return Err(Error::Contract("observation model does not match vocabulary".into()));
    }
    require_failure(model, fail_state, fail_action)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = PosteriorTable {
        samples: 0,
        hypotheses: initial_hypotheses(vocab, fail_state)
            .into_iter()
            .map(|concept| Hypothesis {
                concept,
                posterior: prior,
                log_odds: log_odds(prior),
                alive: true,
            })
            .collect(),
    };
    let mut trace = vec![table.clone()];
    for s in samples {
        if table.alive().next().is_none() {
            break;
        }
        table.samples += 1;
        if !model.simulate(&s, fail_action)?.is_failure() {
            let obs = vocab.observe(observation, &s, &mut rng);
            for h in table.hypotheses.iter_mut().filter(|h| h.alive) {
                let ratio = precondition_log_likelihood_ratio(
                    obs.get(h.concept),
                    observation.rates(h.concept),
                    marginals.get(h.concept),
                );
                match ratio {
                    Some(l) => {
                        h.log_odds += l;
                        h.posterior = from_log_odds(h.log_odds);
                    }
                    None => h.posterior = 0.0,
                }
                if ratio.is_none() || h.posterior < kappa {
                    h.alive = false;
                }
            }
        }
        trace.push(table.clone());
    }
    let result = match table.best() {
        Some(h) => PreconditionResult::Found {
            concept: h.concept,
            posterior: h.posterior,
            samples_used: table.samples,
        },
        None => PreconditionResult::VocabularyInsufficient {
            samples_used: table.samples,
        },
    };
    Ok(ProbabilisticRun { result, table, trace })
}

/// Posterior of `concept` after each raw sample (0 once eliminated), padded
/// with the final value up to `len` entries when given.
pub fn posterior_trace(run: &ProbabilisticRun, concept: ConceptId, len: Option<usize>) -> Vec<f64> {
    let mut out: Vec<f64> = run
        .trace
        .iter()
        .map(|t| t.get(concept).map_or(0.0, |h| if h.alive { h.posterior } else { 0.0 }))
        .collect();
    if let Some(n) = len {
        let last = *out.last().unwrap_or(&0.0);
        out.resize(n, last);
    }
    out
}

/// Number of alive hypotheses other than `concept` after each raw sample.
pub fn rivals_alive(run: &ProbabilisticRun, concept: ConceptId, len: Option<usize>) -> Vec<usize> {
    let mut out: Vec<usize> = run
        .trace
        .iter()
        .map(|t| t.alive().filter(|h| h.concept != concept).count())
        .collect();
    if let Some(n) = len {
        let last = *out.last().unwrap_or(&0);
        out.resize(n, last);
    }
    out
}
