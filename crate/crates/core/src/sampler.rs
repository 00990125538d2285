//! Seeded random-walk state sampling around plan and foil states.
//!
//! Each episode starts at an anchor picked uniformly, emits it, then takes up
//! to `walk_length` uniformly random actions, emitting every live state it
//! reaches. A failing action ends the episode early. The budget counts
//! emitted states.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{ActionId, BlackBoxModel, TransitionOutcome};
use crate::{Error, Result};

pub const DEFAULT_WALK_LENGTH: usize = 10;
pub const DEFAULT_PRECONDITION_BUDGET: usize = 500;
pub const DEFAULT_COST_BUDGET: usize = 750;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig<S> {
    pub anchors: Vec<S>,
    pub walk_length: usize,
    pub budget: usize,
    pub seed: u64,
}

impl<S> SamplerConfig<S> {
    pub fn new(anchors: Vec<S>, walk_length: usize, budget: usize, seed: u64) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Contract("sampler needs at least one anchor".into()));
        }
        Ok(SamplerConfig {
            anchors,
            walk_length,
            budget,
            seed,
        })
    }
}

/// Mixes a tag into a seed so that independent consumers get unrelated
/// streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Iterator over sampled states; see [`sample_states`].
pub struct StateStream<'a, M: BlackBoxModel> {
    model: &'a M,
    config: &'a SamplerConfig<M::State>,
    emitted: usize,
    episode: u64,
    rng: ChaCha8Rng,
    current: Option<M::State>,
    steps: usize,
}

impl<'a, M: BlackBoxModel> StateStream<'a, M> {
    pub fn emitted(&self) -> usize {
        self.emitted
    }
}

impl<M: BlackBoxModel> Iterator for StateStream<'_, M> {
    type Item = M::State;

    fn next(&mut self) -> Option<M::State> {
        if self.emitted >= self.config.budget {
            return None;
        }
        let n_actions = self.model.action_count();
        loop {
            let Some(cur) = &self.current else {
                self.rng = episode_rng(self.config.seed, self.episode);
                self.episode += 1;
                let i = self.rng.gen_range(0..self.config.anchors.len());
                let anchor = self.config.anchors[i].clone();
                self.current = Some(anchor.clone());
                self.steps = 0;
                self.emitted += 1;
                return Some(anchor);
            };
            if self.steps >= self.config.walk_length || n_actions == 0 {
                self.current = None;
                continue;
            }
            let a = ActionId(self.rng.gen_range(0..n_actions));
            self.steps += 1;
            match self.model.simulate(cur, a) {
                Ok(TransitionOutcome { next: Some(s), .. }) => {
                    self.current = Some(s.clone());
                    self.emitted += 1;
                    return Some(s);
                }
                _ => self.current = None,
            }
        }
    }
}

pub fn sample_states<'a, M: BlackBoxModel>(model: &'a M, config: &'a SamplerConfig<M::State>) -> StateStream<'a, M> {
    StateStream {
        model,
        config,
        emitted: 0,
        episode: 0,
        rng: episode_rng(config.seed, 0),
        current: None,
        steps: 0,
    }
}

/// Sampled states where `action` executes, paired with the outcome. The
/// budget still counts every raw sample drawn.
pub fn sample_executable<'a, M: BlackBoxModel>(
    model: &'a M,
    config: &'a SamplerConfig<M::State>,
    action: ActionId,
) -> impl Iterator<Item = (M::State, TransitionOutcome<M::State>)> + 'a {
    sample_states(model, config).filter_map(move |s| match model.simulate(&s, action) {
        Ok(out) if !out.is_failure() => Some((s, out)),
        _ => None,
    })
}

/// Wraps a model and counts `simulate` calls.
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicUsize,
}

impl<M> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        CountingModel {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<M: BlackBoxModel> BlackBoxModel for CountingModel<M> {
    type State = M::State;

    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    fn action_label(&self, action: ActionId) -> &str {
        self.inner.action_label(action)
    }

    fn simulate(&self, state: &Self::State, action: ActionId) -> Result<TransitionOutcome<Self::State>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.simulate(state, action)
    }

    fn is_goal(&self, state: &Self::State) -> bool {
        self.inner.is_goal(state)
    }
}
