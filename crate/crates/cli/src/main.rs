//! `foilscope` command-line tool.
//!
//! Exit codes: 0 on success, 1 when a check fails (or, with `--strict`, when
//! no explanation meets the threshold), 2 on bad input.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use foilscope::dialogue::{render_text, ExplanationKind, Session, SessionConfig};
use foilscope::env::{bundled, ground_truth, parse_action_list, GridState, GridWorld, Variant};
use foilscope::experiments::{
    assumption_report, posterior_agreement, precondition_curves, AssumptionSettings, AGREEMENT_HEADER, CURVE_HEADER,
    GAP_HEADER,
};
use foilscope::manifest::VocabularyManifest;
use foilscope::model::{execute_sequence, BlackBoxModel};
use foilscope::oracle::{
    construct_trivial_approximation, enumerate_local_states, true_abstract_cost, true_preconditions, verify_local_approximation,
    DEFAULT_STATE_CAP,
};
use foilscope::sampler::{DEFAULT_COST_BUDGET, DEFAULT_PRECONDITION_BUDGET, DEFAULT_WALK_LENGTH};
use foilscope_service::{AppState, ServiceConfig, DEFAULT_COMPUTE_CAP};

#[derive(Parser)]
#[command(name = "foilscope", version, about = "Explain why a plan beats a proposed alternative")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explain one foil against the plan.
    Explain {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// Bundled foil name, action-list file, or comma-separated mnemonics.
        #[arg(long)]
        foil: String,
        /// Print the explanation as JSON instead of text.
        #[arg(long)]
        json: bool,
        /// Record the posterior trace (JSON output only).
        #[arg(long)]
        trace: bool,
        /// Exit with 1 when no explanation meets the threshold.
        #[arg(long)]
        strict: bool,
    },
    /// Posterior of the true precondition against samples, averaged over seeds (CSV).
    Curves {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        foil: String,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Concept to track instead of the ground-truth precondition.
        #[arg(long)]
        concept: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-action concept frequency gaps between executable and all states (CSV).
    AssumptionReport {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_WALK_LENGTH)]
        walk_length: usize,
        #[arg(long, env = "FOILSCOPE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        flag_threshold: f64,
        /// Add a concept that holds exactly where this action executes.
        #[arg(long)]
        plant: Option<String>,
        /// Write per-action summaries instead of every row.
        #[arg(long)]
        summary: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare closed-form posteriors with forward sampling (CSV).
    Agreement {
        #[arg(long, default_value_t = 50)]
        draws: usize,
        #[arg(long, default_value_t = 1_000_000)]
        trials: usize,
        #[arg(long, env = "FOILSCOPE_SEED", default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3.0)]
        sigmas: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a map: plan validity, ground truth and a local approximation.
    Validate {
        #[command(flatten)]
        map: MapArgs,
        /// Region radius around the plan, in actions.
        #[arg(long, default_value_t = 4)]
        radius: usize,
    },
    /// Print the vocabulary manifest of a map.
    Vocab {
        #[command(flatten)]
        map: MapArgs,
    },
    /// Explain several foils in one session and write it as JSON.
    Session {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// Repeat for each foil, in order.
        #[arg(long, required = true)]
        foil: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a stored session and compare with its history.
    Replay { file: PathBuf },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_COMPUTE_CAP)]
        compute_cap: usize,
    },
}

#[derive(Args, Clone)]
struct MapArgs {
    /// Bundled map id or path to a map file.
    #[arg(long)]
    map: String,
    #[arg(long)]
    variant: Option<Variant>,
    /// Plan file or comma-separated mnemonics; defaults to the bundled plan.
    #[arg(long)]
    plan: Option<String>,
    /// Vocabulary manifest file.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SearchArgs {
    #[arg(long, env = "FOILSCOPE_SEED", default_value_t = 0)]
    seed: u64,
    /// Precondition sampling budget.
    #[arg(long, default_value_t = DEFAULT_PRECONDITION_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = DEFAULT_COST_BUDGET)]
    cost_budget: usize,
    #[arg(long, default_value_t = foilscope::precondition::DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value_t = DEFAULT_WALK_LENGTH)]
    walk_length: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    obs_tp: f64,
    #[arg(long, default_value_t = 0.0)]
    obs_fp: f64,
}

impl SearchArgs {
    fn config(&self) -> SessionConfig {
        SessionConfig {
            precondition_budget: self.budget,
            cost_budget: self.cost_budget,
            kappa: self.kappa,
            walk_length: self.walk_length,
            threshold: self.threshold,
            obs_tp: self.obs_tp,
            obs_fp: self.obs_fp,
            ..SessionConfig::default()
        }
    }
}

/// A failure to report: exit code and message.
struct Fail(u8, String);

impl From<foilscope::Error> for Fail {
    fn from(e: foilscope::Error) -> Self {
        Fail(2, e.to_string())
    }
}

impl From<io::Error> for Fail {
    fn from(e: io::Error) -> Self {
        Fail(2, e.to_string())
    }
}

impl From<csv::Error> for Fail {
    fn from(e: csv::Error) -> Self {
        Fail(2, e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Fail>;

/// A list given inline (comma-separated) or as a file.
fn action_text(spec: &str) -> CliResult<String> {
    if Path::new(spec).is_file() {
        Ok(fs::read_to_string(spec)?)
    } else {
        Ok(spec.split(',').map(str::trim).collect::<Vec<_>>().join("\n"))
    }
}

impl MapArgs {
    fn session(&self, seed: u64, config: SessionConfig) -> CliResult<Session> {
        let vocab = self.vocab.as_ref().map(fs::read_to_string).transpose()?;
        let b = bundled(&self.map);
        let (text, default_plan) = match b {
            Some(b) => (b.map.to_string(), Some(b.plan.to_string())),
            None => (fs::read_to_string(&self.map).map_err(|e| Fail(2, format!("{}: {e}", self.map)))?, None),
        };
        let plan = match (&self.plan, default_plan) {
            (Some(p), _) => action_text(p)?,
            (None, Some(p)) => p,
            (None, None) => return Err(Fail(2, "--plan is required for a map file".into())),
        };
        let mut s = Session::new(session_id(&self.map), text, self.variant, &plan, vocab, seed, config)?;
        if b.is_some() {
            s.map_id = Some(self.map.clone());
        }
        s.context()?;
        Ok(s)
    }

    fn foil(&self, spec: &str) -> CliResult<Vec<String>> {
        let text = match bundled(&self.map).and_then(|b| b.foil(spec)) {
            Some(t) => t.to_string(),
            None => action_text(spec)?,
        };
        let world = self.world()?;
        let ids = parse_action_list(&world, &text)?;
        if ids.is_empty() {
            return Err(Fail(2, "the foil has no actions".into()));
        }
        Ok(world.mnemonics(&ids))
    }

    fn world(&self) -> CliResult<GridWorld> {
        let w = match bundled(&self.map) {
            Some(b) => b.world(),
            None => GridWorld::parse(&fs::read_to_string(&self.map)?)?,
        };
        Ok(match self.variant {
            Some(v) => w.with_variant(v)?,
            None => w,
        })
    }
}

fn session_id(map: &str) -> String {
    Path::new(map)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "session".into())
}

fn output(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_csv<T>(out: &Option<PathBuf>, header: &[&str], rows: &[T], record: impl Fn(&T) -> Vec<String>) -> CliResult {
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(record(r))?;
    }
    w.flush()?;
    Ok(())
}

fn explain(map: MapArgs, search: SearchArgs, foil: String, json: bool, trace: bool, strict: bool) -> CliResult {
    let config = SessionConfig {
        include_trace: trace,
        ..search.config()
    };
    let mut session = map.session(search.seed, config)?;
    let foil = map.foil(&foil)?;
    let e = session.explain(&foil)?;
    let mut out = io::stdout().lock();
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&e).expect("explanations serialise"))?;
    } else {
        writeln!(out, "{}", render_text(&e))?;
    }
    let explained = e.threshold_met && !matches!(e.kind, ExplanationKind::VocabularyInsufficient { .. });
    if strict && !explained {
        return Err(Fail(1, "no explanation meets the threshold".into()));
    }
    Ok(())
}

fn curves(map: MapArgs, search: SearchArgs, foil: String, seeds: u64, concept: Option<String>, out: Option<PathBuf>) -> CliResult {
    let template = map.session(search.seed, search.config())?;
    let foil = map.foil(&foil)?;
    let seeds: Vec<u64> = (0..seeds).map(|i| search.seed.wrapping_add(i)).collect();
    let rows = precondition_curves(&template, &foil, &seeds, concept.as_deref())?;
    write_csv(&out, &CURVE_HEADER, &rows, |r| {
        vec![
            r.budget_step.to_string(),
            r.mean_posterior.to_string(),
            r.std.to_string(),
            r.max_rivals_alive.to_string(),
        ]
    })
}

fn plan_states(map: &MapArgs) -> CliResult<(GridWorld, Vec<GridState>)> {
    let session = map.session(0, SessionConfig::default())?;
    let world = session.context()?.world;
    let plan = parse_action_list(&world, &session.plan.join("\n"))?;
    let traj = execute_sequence(&world, &world.initial_state(), &plan)?;
    Ok((world, traj.states))
}

#[allow(clippy::too_many_arguments)]
fn report(
    map: MapArgs,
    samples: usize,
    walk_length: usize,
    seed: u64,
    flag_threshold: f64,
    plant: Option<String>,
    summary: bool,
    out: Option<PathBuf>,
) -> CliResult {
    let (world, anchors) = plan_states(&map)?;
    let settings = AssumptionSettings {
        anchors,
        samples,
        walk_length,
        seed,
        flag_threshold,
        plant,
    };
    let r = assumption_report(&world, &settings)?;
    if summary {
        write_csv(&out, &["action", "executed", "max_gap", "mean_gap", "max_concept"], &r.summaries, |s| {
            vec![
                s.action.clone(),
                s.executed.to_string(),
                s.max_gap.to_string(),
                s.mean_gap.to_string(),
                s.max_concept.clone().unwrap_or_default(),
            ]
        })
    } else {
        write_csv(&out, &GAP_HEADER, &r.rows, |g| {
            vec![
                g.action.clone(),
                g.concept.clone(),
                g.p_executed.to_string(),
                g.p_all.to_string(),
                g.gap.to_string(),
                g.excluded.to_string(),
                g.flagged.to_string(),
            ]
        })
    }
}

fn agreement(draws: usize, trials: usize, seed: u64, sigmas: f64, out: Option<PathBuf>) -> CliResult {
    let rows = posterior_agreement(draws, trials, seed);
    write_csv(&out, &AGREEMENT_HEADER, &rows, |r| {
        vec![
            r.formula.name().to_string(),
            r.draw.to_string(),
            r.prior.to_string(),
            r.p_c.to_string(),
            r.p_geq_k.to_string(),
            r.p_true_pos.to_string(),
            r.p_false_pos.to_string(),
            r.observed.to_string(),
            r.closed_form.to_string(),
            r.monte_carlo.to_string(),
            r.accepted.to_string(),
            r.sigma.to_string(),
        ]
    })?;
    let outside = rows.iter().filter(|r| !r.within(sigmas)).count();
    eprintln!("{outside} of {} draws outside {sigmas} sigma", rows.len());
    if outside > 0 {
        return Err(Fail(1, format!("{outside} draws disagree")));
    }
    Ok(())
}

fn validate(map: MapArgs, radius: usize) -> CliResult {
    let (world, anchors) = plan_states(&map)?;
    let mut out = io::stdout().lock();
    let session = map.session(0, SessionConfig::default())?;
    let plan = parse_action_list(&world, &session.plan.join("\n"))?;
    let traj = execute_sequence(&world, &world.initial_state(), &plan)?;
    writeln!(out, "map: {} ({}x{}, {})", map.map, world.rows(), world.cols(), world.variant())?;
    writeln!(
        out,
        "plan: {} actions, cost {}, reaches goal {}",
        plan.len(),
        traj.total_cost(),
        world.is_goal(traj.last_state())
    )?;
    let region = enumerate_local_states(&world, &anchors, radius, DEFAULT_STATE_CAP)?;
    writeln!(out, "region: {} states within {radius} actions of the plan", region.len())?;

    let vocab = world.vocabulary();
    let truth = ground_truth(&world);
    let mut bad = 0usize;
    for (action, concepts) in &truth.preconditions {
        let a = world.action_by_label(action).expect("ground truth names real actions");
        if let Some(local) = true_preconditions(&world, a, &region, &vocab)? {
            for c in concepts {
                let id = vocab.find(c).expect("ground truth names real concepts");
                if !local.contains(&id) {
                    bad += 1;
                    writeln!(out, "ground truth: {c} is not a local precondition of {action}")?;
                }
            }
        }
    }
    for rule in &truth.cost_rules {
        let a = world.action_by_label(rule.action).expect("ground truth names real actions");
        let subset: Vec<_> = rule.concepts.iter().map(|c| vocab.find(c).expect("known concept")).collect();
        if let Some(cost) = true_abstract_cost(&world, &subset, a, &region, &vocab)? {
            if cost < rule.min_cost {
                bad += 1;
                writeln!(out, "ground truth: {} with {:?} costs {cost} < {}", rule.action, rule.concepts, rule.min_cost)?;
            }
        }
    }
    writeln!(out, "ground truth: {} violations", bad)?;

    let (tvocab, table) = construct_trivial_approximation(&world, &region)?;
    let check = verify_local_approximation(&table, &world, &region, &tvocab)?;
    writeln!(
        out,
        "trivial approximation: {} concepts, {} violations",
        tvocab.len(),
        check.violations.len()
    )?;
    if bad > 0 || !check.is_clean() {
        return Err(Fail(1, "validation failed".into()));
    }
    Ok(())
}

fn vocab(map: MapArgs) -> CliResult {
    let session = map.session(0, SessionConfig::default())?;
    let ctx = session.context()?;
    let m = VocabularyManifest::from_vocabulary(&ctx.vocab, None);
    write!(io::stdout().lock(), "{}", m.serialize())?;
    Ok(())
}

fn session(map: MapArgs, search: SearchArgs, foils: Vec<String>, out: Option<PathBuf>) -> CliResult {
    let mut s = map.session(search.seed, search.config())?;
    for f in &foils {
        let foil = map.foil(f)?;
        s.explain(&foil)?;
    }
    let mut w = output(&out)?;
    writeln!(w, "{}", s.to_json())?;
    Ok(())
}

fn replay(file: PathBuf) -> CliResult {
    let s = Session::from_json(&fs::read_to_string(&file)?)?;
    let fresh = s.replay()?;
    let mut out = io::stdout().lock();
    for (i, h) in fresh.history.iter().enumerate() {
        writeln!(out, "[{i}] {}", h.foil.join(","))?;
        writeln!(out, "{}", h.rendered_text)?;
    }
    if fresh.history != s.history {
        return Err(Fail(1, "replayed history differs from the stored one".into()));
    }
    Ok(())
}

fn serve(addr: String, data_dir: Option<PathBuf>, compute_cap: usize) -> CliResult {
    let (state, report) = AppState::new(ServiceConfig { data_dir, compute_cap })?;
    if let Some(r) = report {
        eprintln!("loaded {} sessions", r.loaded.len());
        for id in r.diverged {
            eprintln!("warning: session {id} does not replay identically");
        }
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        foilscope_service::serve(listener, state).await
    })?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Explain {
            map,
            search,
            foil,
            json,
            trace,
            strict,
        } => explain(map, search, foil, json, trace, strict),
        Command::Curves {
            map,
            search,
            foil,
            seeds,
            concept,
            out,
        } => curves(map, search, foil, seeds, concept, out),
        Command::AssumptionReport {
            map,
            samples,
            walk_length,
            seed,
            flag_threshold,
            plant,
            summary,
            out,
        } => report(map, samples, walk_length, seed, flag_threshold, plant, summary, out),
        Command::Agreement {
            draws,
            trials,
            seed,
            sigmas,
            out,
        } => agreement(draws, trials, seed, sigmas, out),
        Command::Validate { map, radius } => validate(map, radius),
        Command::Vocab { map } => vocab(map),
        Command::Session { map, search, foil, out } => session(map, search, foil, out),
        Command::Replay { file } => replay(file),
        Command::Serve {
            addr,
            data_dir,
            compute_cap,
        } => serve(addr, data_dir, compute_cap),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
