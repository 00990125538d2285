//! Sessions: classify each foil against the plan, run the matching search,
//! and render the answer.

use serde::{Deserialize, Serialize};

use crate::concepts::{estimate_marginals, ConceptId, ObservationModel, ObservationRates, Vocabulary};
use crate::cost::{find_cost_abstraction, CostSearchOutcome, CostSearchSettings};
use crate::env::{bundled, parse_action_list, GridState, GridWorld, Variant};
use crate::manifest::VocabularyManifest;
use crate::model::{
    classify_compiled, compile_goal_action, ActionId, BlackBoxModel, Classification, Compiled, ContrastiveQuery, GoalCompiled,
    QueryKind,
};
use crate::precondition::{
    find_missing_precondition_probabilistic, posterior_trace, rivals_alive, PreconditionResult, ProbabilisticRun,
    ProbabilisticSettings,
};
use crate::sampler::{derive_seed, sample_states, SamplerConfig};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub precondition_budget: usize,
    pub cost_budget: usize,
    pub walk_length: usize,
    pub kappa: f64,
    pub prior: f64,
    pub threshold: f64,
    pub obs_tp: f64,
    pub obs_fp: f64,
    pub marginal_samples: usize,
    pub include_trace: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            precondition_budget: crate::sampler::DEFAULT_PRECONDITION_BUDGET,
            cost_budget: crate::sampler::DEFAULT_COST_BUDGET,
            walk_length: crate::sampler::DEFAULT_WALK_LENGTH,
            kappa: crate::precondition::DEFAULT_KAPPA,
            prior: crate::precondition::DEFAULT_PRIOR,
            threshold: 0.5,
            obs_tp: 1.0,
            obs_fp: 0.0,
            marginal_samples: 2000,
            include_trace: false,
        }
    }
}

impl SessionConfig {
    pub fn rates(&self) -> Result<ObservationRates> {
        ObservationRates::new(self.obs_tp, self.obs_fp)
    }

    fn validate(&self) -> Result<()> {
        self.rates()?;
        if !(self.prior > 0.0 && self.prior < 1.0) || !(0.0..1.0).contains(&self.kappa) {
            return Err(Error::Contract("prior must lie in (0,1) and kappa in [0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Contract("threshold must lie in [0,1]".into()));
        }
        if self.marginal_samples == 0 {
            return Err(Error::Contract("marginal_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Precondition,
    Cost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEntryRecord {
    pub step_index: usize,
    pub action: String,
    pub concepts: Vec<String>,
    pub min_cost: f64,
    pub confidence: f64,
    pub raises_cost: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub posterior: f64,
    pub rivals_alive: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExplanationKind {
    MissingPrecondition {
        concept: String,
        fail_action: String,
        fail_index: usize,
        confidence: f64,
        samples_used: usize,
    },
    CostAbstraction {
        entries: Vec<CostEntryRecord>,
        total: f64,
        plan_cost: f64,
        foil_cost: f64,
        conc_limit: usize,
        confidence: f64,
    },
    FoilPreferred {
        plan_cost: f64,
        foil_cost: f64,
    },
    VocabularyInsufficient {
        phase: Phase,
        fail_action: Option<String>,
        fail_index: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub kind: ExplanationKind,
    pub threshold: f64,
    pub threshold_met: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TracePoint>>,
}

impl Explanation {
    pub fn confidence(&self) -> Option<f64> {
        match &self.kind {
            ExplanationKind::MissingPrecondition { confidence, .. }
            | ExplanationKind::CostAbstraction { confidence, .. } => Some(*confidence),
            _ => None,
        }
    }

    fn new(kind: ExplanationKind, threshold: f64, trace: Option<Vec<TracePoint>>) -> Self {
        let mut e = Explanation {
            kind,
            threshold,
            threshold_met: true,
            trace,
        };
        e.threshold_met = e.confidence().is_none_or(|c| c >= threshold);
        e
    }
}

/// Formats a number without a trailing `.0` for integral values.
pub fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub const FOIL_PREFERRED_TEXT: &str =
    "The proposed alternative is at least as good as the current plan; the agent can adopt it.";

pub fn render_text(e: &Explanation) -> String {
    if !e.threshold_met {
        return format!(
            "No explanation can be given with confidence of at least {}: the best candidate reaches only {:.4}.",
            fmt_num(e.threshold),
            e.confidence().unwrap_or(0.0)
        );
    }
    match &e.kind {
        ExplanationKind::MissingPrecondition {
            concept, fail_action, ..
        } => format!("The action {fail_action} failed in the state as the precondition {concept} was false in the state."),
        ExplanationKind::CostAbstraction {
            entries,
            total,
            plan_cost,
            ..
        } => {
            let mut lines: Vec<String> = entries
                .iter()
                .filter(|e| e.raises_cost)
                .map(|e| {
                    let noun = if e.concepts.len() == 1 { "concept" } else { "concepts" };
                    format!(
                        "Executing the action {} in the presence of the {noun} {} will cost at least {}.",
                        e.action,
                        e.concepts.join(", "),
                        fmt_num(e.min_cost)
                    )
                })
                .collect();
            lines.push(format!(
                "Altogether the alternative will cost at least {}, more than the plan's cost of {}.",
                fmt_num(*total),
                fmt_num(*plan_cost)
            ));
            lines.join("\n")
        }
        ExplanationKind::FoilPreferred { .. } => FOIL_PREFERRED_TEXT.to_string(),
        ExplanationKind::VocabularyInsufficient { phase, .. } => {
            let what = match phase {
                Phase::Precondition => "why the alternative fails",
                Phase::Cost => "why the alternative costs more",
            };
            format!(
                "The current concept vocabulary is insufficient to explain {what}; consider adding concepts that describe this situation."
            )
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub foil: Vec<String>,
    pub explanation: Explanation,
    pub rendered_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub v: u32,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_id: Option<String>,
    /// Full map text including the header.
    pub map: String,
    pub variant: Variant,
    /// Vocabulary manifest text; the environment's full vocabulary when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<String>,
    pub plan: Vec<String>,
    pub seed: u64,
    pub config: SessionConfig,
    pub history: Vec<HistoryEntry>,
}

/// Everything an explanation run needs, rebuilt from a session.
pub struct Context {
    pub world: GridWorld,
    pub vocab: Vocabulary<GridState>,
    pub observation: ObservationModel,
}

impl Context {
    pub fn lifted_vocab(&self) -> Vocabulary<Compiled<GridState>> {
        self.vocab.lift(Compiled::inner)
    }
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        map: impl Into<String>,
        variant: Option<Variant>,
        plan: &str,
        vocabulary: Option<String>,
        seed: u64,
        config: SessionConfig,
    ) -> Result<Self> {
        let map = map.into();
        let world = GridWorld::parse(&map)?;
        let variant = variant.unwrap_or(world.variant());
        let world = world.with_variant(variant)?;
        let plan_ids = parse_action_list(&world, plan)?;
        let session = Session {
            v: FORMAT_VERSION,
            id: id.into(),
            map_id: None,
            map,
            variant,
            vocabulary,
            plan: world.mnemonics(&plan_ids),
            seed,
            config,
            history: Vec::new(),
        };
        session.config.validate()?;
        let ctx = session.context()?;
        let q = ContrastiveQuery::new(world.initial_state(), plan_ids.clone(), plan_ids)?;
        crate::model::classify_query(&ctx.world, &q)?;
        Ok(session)
    }

    pub fn from_bundled(id: impl Into<String>, map_id: &str, variant: Option<Variant>, seed: u64, config: SessionConfig) -> Result<Self> {
        let b = bundled(map_id).ok_or_else(|| Error::Session(format!("unknown map `{map_id}`")))?;
        let mut s = Session::new(id, b.map, variant, b.plan, None, seed, config)?;
        s.map_id = Some(map_id.to_string());
        Ok(s)
    }

    pub fn context(&self) -> Result<Context> {
        let world = GridWorld::parse(&self.map)?.with_variant(self.variant)?;
        let rates = self.config.rates()?;
        let (vocab, observation) = match &self.vocabulary {
            Some(text) => VocabularyManifest::parse(text)?.build(&world.base_detectors(), rates)?,
            None => {
                let v = world.vocabulary();
                let n = v.len();
                (v, ObservationModel::uniform(n, rates))
            }
        };
        Ok(Context {
            world,
            vocab,
            observation,
        })
    }

    /// Explains a foil given as mnemonics and appends it to the history.
    pub fn explain(&mut self, foil: &[String]) -> Result<Explanation> {
        let ctx = self.context()?;
        let e = explain_with(&ctx, self, foil, self.history.len())?;
        self.history.push(HistoryEntry {
            foil: foil.to_vec(),
            rendered_text: render_text(&e),
            explanation: e.clone(),
        });
        Ok(e)
    }

    pub fn explain_text(&mut self, foil: &str) -> Result<Explanation> {
        let ctx = self.context()?;
        let ids = parse_action_list(&ctx.world, foil)?;
        self.explain(&ctx.world.mnemonics(&ids))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sessions serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Session = serde_json::from_str(text).map_err(|e| Error::Session(e.to_string()))?;
        if s.v != FORMAT_VERSION {
            return Err(Error::Session(format!("unsupported session format version {}", s.v)));
        }
        s.config.validate()?;
        Ok(s)
    }

    /// Re-runs every recorded foil on a fresh copy of this session.
    pub fn replay(&self) -> Result<Session> {
        let mut fresh = Session {
            history: Vec::new(),
            ..self.clone()
        };
        for h in &self.history {
            fresh.explain(&h.foil)?;
        }
        Ok(fresh)
    }
}

struct Prepared<'w> {
    compiled: GoalCompiled<&'w GridWorld>,
    class: Classification<Compiled<GridState>>,
    vocab: Vocabulary<Compiled<GridState>>,
}

fn prepare<'w>(ctx: &'w Context, session: &Session, foil: &[String]) -> Result<Prepared<'w>> {
    let world = &ctx.world;
    let mut foil_ids = Vec::with_capacity(foil.len());
    for m in foil {
        foil_ids.push(
            world
                .action_by_label(m)
                .ok_or_else(|| Error::UnknownMnemonic(m.clone()))?,
        );
    }
    let plan_ids = parse_action_list(world, &session.plan.join("\n"))?;
    let query = ContrastiveQuery::new(world.initial_state(), plan_ids, foil_ids)?;
    let compiled = GoalCompiled::new(world);
    let cq = compile_goal_action(&compiled, &query);
    let class = classify_compiled(&compiled, &cq)?;
    Ok(Prepared {
        compiled,
        class,
        vocab: ctx.lifted_vocab(),
    })
}

fn precondition_run(
    ctx: &Context,
    p: &Prepared<'_>,
    cfg: &SessionConfig,
    fail_state: &Compiled<GridState>,
    fail_action: ActionId,
    seed: u64,
) -> Result<ProbabilisticRun> {
    let mut anchors = p.class.plan.states.clone();
    anchors.extend(p.class.foil.states.iter().cloned());
    let marg_cfg = SamplerConfig::new(anchors.clone(), cfg.walk_length, cfg.marginal_samples, derive_seed(seed, 3))?;
    let marginals = estimate_marginals(&p.vocab, sample_states(&p.compiled, &marg_cfg))?;
    let sample_cfg = SamplerConfig::new(anchors, cfg.walk_length, cfg.precondition_budget, derive_seed(seed, 1))?;
    find_missing_precondition_probabilistic(
        &p.compiled,
        fail_state,
        fail_action,
        &p.vocab,
        sample_states(&p.compiled, &sample_cfg),
        ProbabilisticSettings {
            observation: &ctx.observation,
            marginals: &marginals,
            prior: cfg.prior,
            kappa: cfg.kappa,
            seed: derive_seed(seed, 2),
        },
    )
}

/// A raw precondition search with the vocabulary its concept ids refer to.
pub struct PreconditionSearch {
    pub run: ProbabilisticRun,
    pub vocab: Vocabulary<Compiled<GridState>>,
    pub fail_action: String,
    pub fail_index: usize,
}

/// The probabilistic search `explain` would run for an invalid foil at
/// history position `index`; `None` when the foil is valid.
pub fn precondition_search(session: &Session, foil: &[String], index: usize) -> Result<Option<PreconditionSearch>> {
    let ctx = session.context()?;
    let p = prepare(&ctx, session, foil)?;
    match &p.class.kind {
        QueryKind::InvalidFoil {
            fail_state,
            fail_action,
            fail_index,
        } => {
            let seed = derive_seed(session.seed, index as u64);
            let run = precondition_run(&ctx, &p, &session.config, fail_state, *fail_action, seed)?;
            Ok(Some(PreconditionSearch {
                run,
                fail_action: p.compiled.action_label(*fail_action).to_string(),
                fail_index: *fail_index,
                vocab: p.vocab,
            }))
        }
        _ => Ok(None),
    }
}

fn explain_with(ctx: &Context, session: &Session, foil: &[String], index: usize) -> Result<Explanation> {
    let p = prepare(ctx, session, foil)?;
    let Prepared { compiled, class, vocab } = &p;
    let cfg = &session.config;
    let seed = derive_seed(session.seed, index as u64);
    let threshold = cfg.threshold;
    match &class.kind {
        &QueryKind::FoilPreferred { plan_cost, foil_cost } => Ok(Explanation::new(
            ExplanationKind::FoilPreferred { plan_cost, foil_cost },
            threshold,
            None,
        )),
        QueryKind::InvalidFoil {
            fail_index,
            fail_state,
            fail_action,
        } => {
            let run = precondition_run(ctx, &p, cfg, fail_state, *fail_action, seed)?;
            let action = compiled.action_label(*fail_action).to_string();
            let fail_index = *fail_index;
            match run.result {
                PreconditionResult::Found {
                    concept,
                    posterior,
                    samples_used,
                } => {
                    let trace = cfg.include_trace.then(|| trace_points(&run, concept, cfg.precondition_budget + 1));
                    Ok(Explanation::new(
                        ExplanationKind::MissingPrecondition {
                            concept: vocab.name(concept).to_string(),
                            fail_action: action,
                            fail_index,
                            confidence: posterior,
                            samples_used,
                        },
                        threshold,
                        trace,
                    ))
                }
                PreconditionResult::VocabularyInsufficient { .. } => Ok(Explanation::new(
                    ExplanationKind::VocabularyInsufficient {
                        phase: Phase::Precondition,
                        fail_action: Some(action),
                        fail_index: Some(fail_index),
                    },
                    threshold,
                    None,
                )),
            }
        }
        &QueryKind::CostlierFoil { plan_cost, foil_cost } => {
            let outcome = find_cost_abstraction(
                compiled,
                &class.foil,
                plan_cost,
                vocab,
                CostSearchSettings {
                    observation: &ctx.observation,
                    extra_anchors: &class.plan.states,
                    prior: cfg.prior,
                    walk_length: cfg.walk_length,
                    budget: cfg.cost_budget,
                    seed: derive_seed(seed, 4),
                    memoize: true,
                },
            )?;
            let kind = match outcome {
                CostSearchOutcome::Found(x) => ExplanationKind::CostAbstraction {
                    confidence: x.confidence(),
                    entries: x
                        .entries
                        .iter()
                        .map(|e| CostEntryRecord {
                            step_index: e.step_index,
                            action: compiled.action_label(e.action).to_string(),
                            concepts: e.subset.iter().map(|&c| vocab.name(c).to_string()).collect(),
                            min_cost: e.min_cost,
                            confidence: e.confidence,
                            raises_cost: e.raises_cost(),
                        })
                        .collect(),
                    total: x.total_abstract_cost,
                    plan_cost,
                    foil_cost,
                    conc_limit: x.conc_limit,
                },
                CostSearchOutcome::VocabularyInsufficient { .. } => ExplanationKind::VocabularyInsufficient {
                    phase: Phase::Cost,
                    fail_action: None,
                    fail_index: None,
                },
            };
            Ok(Explanation::new(kind, threshold, None))
        }
    }
}

fn trace_points(run: &ProbabilisticRun, concept: ConceptId, len: usize) -> Vec<TracePoint> {
    let post = posterior_trace(run, concept, Some(len));
    let rivals = rivals_alive(run, concept, Some(len));
    post.into_iter()
        .zip(rivals)
        .enumerate()
        .map(|(step, (posterior, rivals_alive))| TracePoint {
            step,
            posterior,
            rivals_alive,
        })
        .collect()
}
