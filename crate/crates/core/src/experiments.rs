//! Batch experiments: posterior curves across seeds and the check of the
//! concept independence assumption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptId, ObservationRates, Vocabulary};
use crate::confidence::{
    monte_carlo_posterior, posterior_cost, posterior_cost_noisy, posterior_precondition_noisy,
    posterior_precondition_positive, GenerativeSpec,
};
use crate::dialogue::{precondition_search, Session, SessionConfig};
use crate::env::{bundled, ground_truth, parse_action_list, GridState, GridWorld, Variant};
use crate::model::{ActionId, BlackBoxModel};
use crate::precondition::{posterior_trace, rivals_alive};
use crate::sampler::{derive_seed, sample_states, SamplerConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Precondition,
    Cost,
}

/// A bundled foil together with the variant it is posed under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub map_id: &'static str,
    pub variant: Option<Variant>,
    pub foil: &'static str,
    pub kind: ScenarioKind,
}

pub const SCENARIOS: [Scenario; 8] = [
    Scenario {
        map_id: "sokoban_switch",
        variant: Some(Variant::SokobanSwitchPrec),
        foil: "push",
        kind: ScenarioKind::Precondition,
    },
    Scenario {
        map_id: "key_quest_s1",
        variant: None,
        foil: "a",
        kind: ScenarioKind::Precondition,
    },
    Scenario {
        map_id: "key_quest_s1",
        variant: None,
        foil: "b",
        kind: ScenarioKind::Precondition,
    },
    Scenario {
        map_id: "key_quest_s1",
        variant: None,
        foil: "c",
        kind: ScenarioKind::Precondition,
    },
    Scenario {
        map_id: "key_quest_s4",
        variant: None,
        foil: "d",
        kind: ScenarioKind::Precondition,
    },
    Scenario {
        map_id: "sokoban_switch",
        variant: Some(Variant::SokobanSwitchCost),
        foil: "push",
        kind: ScenarioKind::Cost,
    },
    Scenario {
        map_id: "sokoban_cell",
        variant: None,
        foil: "pink",
        kind: ScenarioKind::Cost,
    },
    Scenario {
        map_id: "key_quest_s1",
        variant: None,
        foil: "attack",
        kind: ScenarioKind::Cost,
    },
];

impl Scenario {
    pub fn name(&self) -> String {
        match self.variant {
            Some(v) => format!("{}[{v}]/{}", self.map_id, self.foil),
            None => format!("{}/{}", self.map_id, self.foil),
        }
    }

    pub fn world(&self) -> GridWorld {
        let w = bundled(self.map_id).expect("scenario maps are bundled").world();
        match self.variant {
            Some(v) => w.with_variant(v).expect("compatible variant"),
            None => w,
        }
    }

    pub fn plan(&self) -> Vec<ActionId> {
        parse_action_list(&self.world(), bundled(self.map_id).unwrap().plan).expect("bundled plans parse")
    }

    pub fn foil(&self) -> Vec<ActionId> {
        let text = bundled(self.map_id).unwrap().foil(self.foil).expect("scenario foils are bundled");
        parse_action_list(&self.world(), text).expect("bundled foils parse")
    }

    pub fn foil_mnemonics(&self) -> Vec<String> {
        self.world().mnemonics(&self.foil())
    }

    pub fn session(&self, seed: u64, config: SessionConfig) -> Result<Session> {
        Session::from_bundled(self.name(), self.map_id, self.variant, seed, config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub budget_step: usize,
    pub mean_posterior: f64,
    pub std: f64,
    pub max_rivals_alive: usize,
}

pub const CURVE_HEADER: [&str; 4] = ["budget_step", "mean_posterior", "std", "max_rivals_alive"];

/// Posterior of one concept against the sampling budget, averaged over
/// `seeds`. The concept defaults to the ground-truth precondition among the
/// hypotheses. Row `i` is the state after `i` raw samples, so a budget of
/// `b` gives `b + 1` rows.
pub fn precondition_curves(template: &Session, foil: &[String], seeds: &[u64], target: Option<&str>) -> Result<Vec<CurveRow>> {
    if seeds.is_empty() {
        return Err(Error::Contract("at least one seed is required".into()));
    }
    let len = template.config.precondition_budget + 1;
    let world = template.context()?.world;
    let truth = ground_truth(&world);
    let mut posts = Vec::with_capacity(seeds.len());
    let mut rivals = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let session = Session {
            seed,
            history: Vec::new(),
            ..template.clone()
        };
        let search = precondition_search(&session, foil, 0)?
            .ok_or_else(|| Error::Contract("the foil is valid; curves need a failing foil".into()))?;
        let id = match target {
            Some(name) => search
                .vocab
                .find(name)
                .ok_or_else(|| Error::Contract(format!("unknown concept `{name}`")))?,
            None => search.run.trace[0]
                .hypotheses
                .iter()
                .map(|h| h.concept)
                .find(|&c| truth.is_precondition(&search.fail_action, search.vocab.name(c)))
                .ok_or_else(|| Error::Contract("no ground-truth precondition among the hypotheses".into()))?,
        };
        posts.push(posterior_trace(&search.run, id, Some(len)));
        rivals.push(rivals_alive(&search.run, id, Some(len)));
    }
    let n = seeds.len() as f64;
    Ok((0..len)
        .map(|i| {
            let mean = posts.iter().map(|p| p[i]).sum::<f64>() / n;
            let var = posts.iter().map(|p| (p[i] - mean).powi(2)).sum::<f64>() / n;
            CurveRow {
                budget_step: i,
                mean_posterior: mean,
                std: var.sqrt(),
                max_rivals_alive: rivals.iter().map(|r| r[i]).max().unwrap_or(0),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionSettings {
    pub anchors: Vec<GridState>,
    pub samples: usize,
    pub walk_length: usize,
    pub seed: u64,
    /// Gaps above this are flagged.
    pub flag_threshold: f64,
    /// Adds a concept that holds exactly when this action executes.
    pub plant: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub action: String,
    pub concept: String,
    pub p_executed: f64,
    pub p_all: f64,
    pub gap: f64,
    /// Precondition or cost concept of the action (or its negation).
    pub excluded: bool,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub action: String,
    pub executed: usize,
    pub max_gap: f64,
    pub mean_gap: f64,
    pub max_concept: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub samples: usize,
    pub flag_threshold: f64,
    pub rows: Vec<GapRow>,
    pub summaries: Vec<ActionSummary>,
}

pub const GAP_HEADER: [&str; 7] = ["action", "concept", "p_executed", "p_all", "gap", "excluded", "flagged"];

fn strip_not(name: &str) -> &str {
    name.strip_prefix("not_").unwrap_or(name)
}

/// Compares each concept's frequency over states where an action executes
/// with its frequency over all sampled states.
pub fn assumption_report(world: &GridWorld, settings: &AssumptionSettings) -> Result<AssumptionReport> {
    let mut vocab: Vocabulary<GridState> = world.vocabulary();
    if let Some(label) = &settings.plant {
        let a = world
            .action_by_label(label)
            .ok_or_else(|| Error::UnknownMnemonic(label.clone()))?;
        let w = world.clone();
        vocab.add_base(format!("planted_{label}_ok"), format!("{label} executes here"), move |s: &GridState| {
            w.simulate(s, a).is_ok_and(|o| !o.is_failure())
        })?;
    }
    let config = SamplerConfig::new(settings.anchors.clone(), settings.walk_length, settings.samples, settings.seed)?;
    let states: Vec<GridState> = sample_states(world, &config).collect();
    if states.is_empty() {
        return Err(Error::EmptySamples("assumption report"));
    }
    let vectors: Vec<_> = states.iter().map(|s| vocab.evaluate(s)).collect();
    let freq = |idx: &[usize], c: ConceptId| idx.iter().filter(|&&i| vectors[i].get(c)).count() as f64 / idx.len() as f64;
    let all: Vec<usize> = (0..states.len()).collect();
    let truth = ground_truth(world);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for a in world.actions() {
        let label = world.action_label(a);
        let mut executed = Vec::new();
        for (i, s) in states.iter().enumerate() {
            if !world.simulate(s, a)?.is_failure() {
                executed.push(i);
            }
        }
        let related: Vec<&str> = truth
            .preconditions_of(label)
            .iter()
            .map(String::as_str)
            .chain(
                truth
                    .cost_rules
                    .iter()
                    .filter(|r| r.action == label)
                    .flat_map(|r| r.concepts.iter().map(String::as_str)),
            )
            .map(strip_not)
            .collect();
        let mut summary = ActionSummary {
            action: label.to_string(),
            executed: executed.len(),
            max_gap: 0.0,
            mean_gap: 0.0,
            max_concept: None,
        };
        if !executed.is_empty() {
            let mut counted = 0usize;
            for c in vocab.ids() {
                let name = vocab.name(c);
                let p_executed = freq(&executed, c);
                let p_all = freq(&all, c);
                let gap = (p_executed - p_all).abs();
                let excluded = related.contains(&strip_not(name));
                if !excluded {
                    counted += 1;
                    summary.mean_gap += gap;
                    if gap > summary.max_gap || summary.max_concept.is_none() {
                        summary.max_gap = gap;
                        summary.max_concept = Some(name.to_string());
                    }
                }
                rows.push(GapRow {
                    action: label.to_string(),
                    concept: name.to_string(),
                    p_executed,
                    p_all,
                    gap,
                    excluded,
                    flagged: !excluded && gap > settings.flag_threshold,
                });
            }
            if counted > 0 {
                summary.mean_gap /= counted as f64;
            }
        }
        summaries.push(summary);
    }
    Ok(AssumptionReport {
        samples: states.len(),
        flag_threshold: settings.flag_threshold,
        rows,
        summaries,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    PreconditionPositive,
    PreconditionNoisy,
    Cost,
    CostNoisy,
}

impl Formula {
    pub const ALL: [Formula; 4] = [
        Formula::PreconditionPositive,
        Formula::PreconditionNoisy,
        Formula::Cost,
        Formula::CostNoisy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Formula::PreconditionPositive => "precondition_positive",
            Formula::PreconditionNoisy => "precondition_noisy",
            Formula::Cost => "cost",
            Formula::CostNoisy => "cost_noisy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub formula: Formula,
    pub draw: usize,
    pub prior: f64,
    pub p_c: f64,
    pub p_geq_k: f64,
    pub p_true_pos: f64,
    pub p_false_pos: f64,
    pub observed: bool,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub accepted: usize,
    /// Binomial standard deviation of the estimate at the closed-form value.
    pub sigma: f64,
}

impl AgreementRow {
    pub fn deviation(&self) -> f64 {
        (self.closed_form - self.monte_carlo).abs()
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.accepted > 0 && self.deviation() <= sigmas * self.sigma
    }
}

pub const AGREEMENT_HEADER: [&str; 12] = [
    "formula",
    "draw",
    "prior",
    "p_c",
    "p_geq_k",
    "p_true_pos",
    "p_false_pos",
    "observed",
    "closed_form",
    "monte_carlo",
    "accepted",
    "sigma",
];

/// Parameters for the fixed checks: the positive form and the noisy absent
/// report, both at prior 0.5 and p_c 0.5.
fn pinned(formula: Formula) -> Option<(f64, f64, f64, ObservationRates, bool)> {
    match formula {
        Formula::PreconditionPositive => Some((0.5, 0.5, 0.0, ObservationRates::EXACT, true)),
        Formula::PreconditionNoisy => Some((0.5, 0.5, 0.0, ObservationRates { p_true_pos: 0.95, p_false_pos: 0.05 }, false)),
        _ => None,
    }
}

/// Compares each closed-form posterior with forward sampling at `draws`
/// random parameter settings. Draw 0 of the two precondition forms uses the
/// pinned parameters instead.
pub fn posterior_agreement(draws: usize, trials: usize, seed: u64) -> Vec<AgreementRow> {
    let mut out = Vec::with_capacity(draws * Formula::ALL.len());
    for (fi, formula) in Formula::ALL.into_iter().enumerate() {
        let mut params = ChaCha8Rng::seed_from_u64(derive_seed(seed, fi as u64));
        let mut mc_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100 + fi as u64));
        for draw in 0..draws {
            let drawn = (
                params.gen_range(0.05..0.95),
                params.gen_range(0.05..0.95),
                params.gen_range(0.05..0.95),
                ObservationRates {
                    p_true_pos: params.gen_range(0.6..1.0),
                    p_false_pos: params.gen_range(0.0..0.4),
                },
                params.gen_bool(0.5),
            );
            let (prior, p_c, p_geq_k, rates, observed) = match pinned(formula) {
                Some(p) if draw == 0 => p,
                _ => drawn,
            };
            let (closed, spec) = match formula {
                Formula::PreconditionPositive => (
                    posterior_precondition_positive(prior, p_c),
                    GenerativeSpec::Precondition {
                        prior,
                        rates: ObservationRates::EXACT,
                        p_c,
                        observed: true,
                    },
                ),
                Formula::PreconditionNoisy => (
                    posterior_precondition_noisy(prior, observed, rates, p_c),
                    GenerativeSpec::Precondition {
                        prior,
                        rates,
                        p_c,
                        observed,
                    },
                ),
                Formula::Cost => (
                    posterior_cost(prior, p_geq_k),
                    GenerativeSpec::Cost {
                        prior,
                        rates: ObservationRates::EXACT,
                        p_c: 1.0,
                        p_geq_k,
                    },
                ),
                Formula::CostNoisy => (
                    posterior_cost_noisy(prior, rates, p_c, p_geq_k),
                    GenerativeSpec::Cost {
                        prior,
                        rates,
                        p_c,
                        p_geq_k,
                    },
                ),
            };
            let (rates, observed) = match formula {
                Formula::PreconditionPositive => (ObservationRates::EXACT, true),
                Formula::Cost => (ObservationRates::EXACT, true),
                _ => (rates, observed),
            };
            let mc = monte_carlo_posterior(spec, trials, &mut mc_rng);
            let sigma = if mc.accepted == 0 {
                f64::INFINITY
            } else {
                (closed * (1.0 - closed) / mc.accepted as f64).sqrt()
            };
            out.push(AgreementRow {
                formula,
                draw,
                prior,
                p_c: if formula == Formula::Cost { 1.0 } else { p_c },
                p_geq_k: if matches!(formula, Formula::Cost | Formula::CostNoisy) { p_geq_k } else { 0.0 },
                p_true_pos: rates.p_true_pos,
                p_false_pos: rates.p_false_pos,
                observed,
                closed_form: closed,
                monte_carlo: mc.posterior,
                accepted: mc.accepted,
                sigma,
            });
        }
    }
    out
}
