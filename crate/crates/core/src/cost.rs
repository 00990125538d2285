//! Abstract cost search: explain a costlier foil by a per-step sequence of
//! concept subsets whose estimated minimum costs add up to more than the
//! plan cost, using as few concepts per step as possible.
//!
//! For each `(action, limit)` one batch of executable samples is drawn
//! (anchored at all foil states) and shared by every step with that action.
//! A subset's estimate is the largest observed cost `k` whose posterior for
//! "cost is at least `k` whenever the subset holds" stays at or above the
//! prior. With exact detectors this is the sample minimum.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptId, ConceptVector, ObservationModel, ObservationRates, Vocabulary};
use crate::confidence::{posterior_cost_noisy, posterior_cost_noisy_contradiction};
use crate::model::{ActionId, BlackBoxModel, Trajectory};
use crate::sampler::{derive_seed, sample_executable, SamplerConfig};
use crate::{Error, Result};

/// One executable sample: true and reported concept maps and the cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSample {
    pub truth: ConceptVector,
    pub observed: ConceptVector,
    pub cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractCostEstimate {
    pub min_cost: f64,
    pub support: usize,
}

/// Minimum cost over samples whose reported concepts include `subset`;
/// `None` when no sample does.
pub fn abstract_cost_estimate(subset: &[ConceptId], samples: &[CostSample]) -> Option<AbstractCostEstimate> {
    let mut support = 0;
    let mut min_cost = f64::INFINITY;
    for s in samples.iter().filter(|s| s.observed.contains_all(subset)) {
        support += 1;
        min_cost = min_cost.min(s.cost);
    }
    (support > 0).then_some(AbstractCostEstimate { min_cost, support })
}

/// Shared executable samples for one action.
#[derive(Clone, Debug, PartialEq)]
pub struct CostBatch {
    pub action: ActionId,
    pub samples: Vec<CostSample>,
    pub raw_samples: usize,
}

impl CostBatch {
    pub fn draw<M: BlackBoxModel>(
        model: &M,
        vocab: &Vocabulary<M::State>,
        obs: &ObservationModel,
        config: &SamplerConfig<M::State>,
        action: ActionId,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xC057));
        let samples = sample_executable(model, config, action)
            .map(|(s, out)| {
                let truth = vocab.evaluate(&s);
                let observed = obs.observe(&truth, &mut rng);
                CostSample {
                    truth,
                    observed,
                    cost: out.cost,
                }
            })
            .collect();
        CostBatch {
            action,
            samples,
            raw_samples: config.budget,
        }
    }

    /// Minimum cost over the whole batch, i.e. the empty subset.
    pub fn baseline(&self) -> Option<f64> {
        abstract_cost_estimate(&[], &self.samples).map(|e| e.min_cost)
    }

    fn p_geq(&self, k: f64) -> f64 {
        if self.samples.is_empty() {
            return 1.0;
        }
        self.samples.iter().filter(|s| s.cost >= k).count() as f64 / self.samples.len() as f64
    }
}

/// Combined detector rates for a conjunction: every member must be reported,
/// and a spurious report is at least as likely as the noisiest member's.
pub fn conjunction_rates(obs: &ObservationModel, subset: &[ConceptId]) -> ObservationRates {
    let tp = subset.iter().map(|&c| obs.rates(c).p_true_pos).product::<f64>();
    let fp = subset.iter().map(|&c| obs.rates(c).p_false_pos).fold(0.0, f64::max);
    ObservationRates {
        p_true_pos: tp,
        p_false_pos: fp,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetChoice {
    pub subset: Vec<ConceptId>,
    pub min_cost: f64,
    pub confidence: f64,
    pub support: usize,
}

/// Estimate for one subset over a batch. See the module docs.
pub fn estimate_subset(
    subset: &[ConceptId],
    batch: &CostBatch,
    obs: &ObservationModel,
    prior: f64,
) -> Option<SubsetChoice> {
    let present: Vec<&CostSample> = batch.samples.iter().filter(|s| s.observed.contains_all(subset)).collect();
    if present.is_empty() {
        return None;
    }
    let rates = conjunction_rates(obs, subset);
    let p_c = batch.samples.iter().filter(|s| s.truth.contains_all(subset)).count() as f64 / batch.samples.len() as f64;
    let mut candidates: Vec<f64> = present.iter().map(|s| s.cost).collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();
    let floor = *candidates.last().unwrap();
    for k in candidates {
        let p_geq = batch.p_geq(k);
        let mut post = prior;
        for s in &present {
            post = if s.cost >= k {
                posterior_cost_noisy(post, rates, p_c, p_geq)
            } else {
                posterior_cost_noisy_contradiction(post, rates, p_c, p_geq)
            };
        }
        if post >= prior || k == floor {
            return Some(SubsetChoice {
                subset: subset.to_vec(),
                min_cost: k,
                confidence: post,
                support: present.len(),
            });
        }
    }
    unreachable!("the smallest candidate always qualifies")
}

fn better(a: &SubsetChoice, b: &SubsetChoice) -> bool {
    use std::cmp::Ordering::*;
    match a.min_cost.total_cmp(&b.min_cost) {
        Greater => return true,
        Less => return false,
        Equal => {}
    }
    match a.confidence.total_cmp(&b.confidence) {
        Greater => return true,
        Less => return false,
        Equal => {}
    }
    match a.subset.len().cmp(&b.subset.len()) {
        Less => return true,
        Greater => return false,
        Equal => {}
    }
    a.subset < b.subset
}

/// Best-valued subset of the concepts true at a foil step with at most
/// `limit` members and some support in the batch. Ranking: estimated cost,
/// then confidence, then fewer concepts, then lexicographic order.
pub fn find_min_conc_set(
    concepts_at_step: &ConceptVector,
    limit: usize,
    batch: &CostBatch,
    obs: &ObservationModel,
    prior: f64,
) -> Option<SubsetChoice> {
    let pool: Vec<ConceptId> = concepts_at_step.iter_true().collect();
    // Support per concept, as a bitset over batch samples.
    let words = batch.samples.len().div_ceil(64);
    let support: Vec<Vec<u64>> = pool
        .iter()
        .map(|&c| {
            let mut bits = vec![0u64; words];
            for (i, s) in batch.samples.iter().enumerate() {
                if s.observed.get(c) {
                    bits[i / 64] |= 1 << (i % 64);
                }
            }
            bits
        })
        .collect();
    let mut best: Option<SubsetChoice> = None;
    let mut chosen = Vec::new();
    let all = vec![u64::MAX; words];
    dfs(&pool, &support, 0, limit, &all, &mut chosen, &mut |subset| {
        if let Some(c) = estimate_subset(subset, batch, obs, prior) {
            if best.as_ref().is_none_or(|b| better(&c, b)) {
                best = Some(c);
            }
        }
    });
    best
}

fn dfs(
    pool: &[ConceptId],
    support: &[Vec<u64>],
    start: usize,
    limit: usize,
    mask: &[u64],
    chosen: &mut Vec<ConceptId>,
    visit: &mut dyn FnMut(&[ConceptId]),
) {
    if chosen.len() == limit {
        return;
    }
    for i in start..pool.len() {
        let next: Vec<u64> = mask.iter().zip(&support[i]).map(|(a, b)| a & b).collect();
        if next.iter().all(|&w| w == 0) {
            continue;
        }
        chosen.push(pool[i]);
        visit(chosen);
        dfs(pool, support, i + 1, limit, &next, chosen, visit);
        chosen.pop();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostAbstractionEntry {
    pub step_index: usize,
    pub action: ActionId,
    pub subset: Vec<ConceptId>,
    pub min_cost: f64,
    pub confidence: f64,
    /// The action's unconditioned sampled minimum.
    pub baseline: f64,
}

impl CostAbstractionEntry {
    pub fn raises_cost(&self) -> bool {
        self.min_cost > self.baseline
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostExplanation {
    pub entries: Vec<CostAbstractionEntry>,
    pub total_abstract_cost: f64,
    pub plan_cost: f64,
    pub conc_limit: usize,
}

impl CostExplanation {
    /// Lowest confidence among the entries that lift cost above the
    /// action's baseline (over all entries when none do).
    pub fn confidence(&self) -> f64 {
        let raising: Vec<f64> = self.entries.iter().filter(|e| e.raises_cost()).map(|e| e.confidence).collect();
        let pool = if raising.is_empty() {
            self.entries.iter().map(|e| e.confidence).collect()
        } else {
            raising
        };
        pool.into_iter().fold(1.0, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CostSearchOutcome {
    Found(CostExplanation),
    VocabularyInsufficient { conc_limit: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct CostSearchSettings<'a, S> {
    pub observation: &'a ObservationModel,
    /// Sampled neighbourhoods start from the foil states plus these, usually
    /// the plan states so that cheap executions are seen too.
    pub extra_anchors: &'a [S],
    pub prior: f64,
    pub walk_length: usize,
    pub budget: usize,
    pub seed: u64,
    pub memoize: bool,
}

fn batch_seed(seed: u64, action: ActionId, limit: usize) -> u64 {
    derive_seed(derive_seed(seed, action.0 as u64), limit as u64)
}

/// Runs the greedy search over increasing subset limits for a valid foil
/// trajectory that is costlier than the plan.
pub fn find_cost_abstraction<M: BlackBoxModel>(
    model: &M,
    foil: &Trajectory<M::State>,
    plan_cost: f64,
    vocab: &Vocabulary<M::State>,
    settings: CostSearchSettings<'_, M::State>,
) -> Result<CostSearchOutcome> {
    if !foil.is_valid() {
        return Err(Error::Contract("cost search needs a valid foil".into()));
    }
    if foil.total_cost() <= plan_cost {
        return Err(Error::Contract("foil is not costlier than the plan".into()));
    }
    let step_concepts: Vec<ConceptVector> = foil.states[..foil.actions.len()].iter().map(|s| vocab.evaluate(s)).collect();
    let widest = step_concepts.iter().map(|c| c.count_true()).max().unwrap_or(0);
    let mut memo: HashMap<(ActionId, usize), CostBatch> = HashMap::new();
    let mut limit = 0;
    for l in 1..=vocab.len().max(1) {
        limit = l;
        let mut entries = Vec::with_capacity(foil.actions.len());
        for (i, &a) in foil.actions.iter().enumerate() {
            let fresh;
            let batch = if settings.memoize {
                memo.entry((a, l)).or_insert_with(|| draw(model, vocab, foil, &settings, a, l))
            } else {
                fresh = draw(model, vocab, foil, &settings, a, l);
                &fresh
            };
            let baseline = batch.baseline().unwrap_or(0.0);
            let choice = find_min_conc_set(&step_concepts[i], l, batch, settings.observation, settings.prior)
                .filter(|c| c.min_cost >= baseline);
            let entry = match choice {
                Some(c) => CostAbstractionEntry {
                    step_index: i,
                    action: a,
                    subset: c.subset,
                    min_cost: c.min_cost,
                    confidence: c.confidence,
                    baseline,
                },
                None => CostAbstractionEntry {
                    step_index: i,
                    action: a,
                    subset: Vec::new(),
                    min_cost: baseline,
                    confidence: 1.0,
                    baseline,
                },
            };
            entries.push(entry);
        }
        let total: f64 = entries.iter().map(|e| e.min_cost).sum();
        if total > plan_cost {
            return Ok(CostSearchOutcome::Found(CostExplanation {
                entries,
                total_abstract_cost: total,
                plan_cost,
                conc_limit: l,
            }));
        }
        if l >= widest {
            break;
        }
    }
    Ok(CostSearchOutcome::VocabularyInsufficient { conc_limit: limit })
}

fn draw<M: BlackBoxModel>(
    model: &M,
    vocab: &Vocabulary<M::State>,
    foil: &Trajectory<M::State>,
    settings: &CostSearchSettings<'_, M::State>,
    action: ActionId,
    limit: usize,
) -> CostBatch {
    let config = SamplerConfig {
        anchors: foil.states.iter().chain(settings.extra_anchors).cloned().collect(),
        walk_length: settings.walk_length,
        budget: settings.budget,
        seed: batch_seed(settings.seed, action, limit),
    };
    CostBatch::draw(model, vocab, settings.observation, &config, action)
}
