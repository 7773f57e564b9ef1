use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use csi_core::baselines::{
    self, filter_bad_actors, iq_score, load_key, paired_t_test, percentile, sign_test, ResponseMatrix, ScoreDistribution, WocParams,
};
use csi_core::conviction::{Estimator, LexicalEstimator};
use csi_core::model::{Question, QuestionBank};
use csi_core::orchestrator::events::decode_jsonl;
use csi_core::orchestrator::replay::replay;
use csi_core::orchestrator::report::DEFAULT_RATIONALE_K;
use csi_core::sim::{compare, synthetic_questions, CompareSummary, ExperimentConfig};

#[derive(Parser)]
#[command(name = "csi", version, about = "Conversational swarm deliberation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a fraction-correct score to the IQ scale of a reference distribution.
    Score {
        #[arg(long)]
        x: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
    },
    /// Bootstrap wisdom-of-crowd accuracy from a response matrix.
    Woc(WocArgs),
    /// Paired t-test (and sign test) between two score columns.
    Ttest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Run the individual / wisdom-of-crowd / deliberation comparison on synthetic participants.
    Simulate(SimulateArgs),
    /// Rebuild answers and reports from an exported event log.
    Replay {
        #[arg(long)]
        events: PathBuf,
        /// Re-estimate conviction from message text instead of using the logged values.
        #[arg(long)]
        reestimate: bool,
        #[arg(long, default_value_t = DEFAULT_RATIONALE_K)]
        top_k: usize,
    },
    /// Serve sessions over HTTP and WebSocket.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, env = "CSI_MODERATOR_TOKEN")]
        moderator_token: Option<String>,
    },
}

#[derive(Args)]
struct WocArgs {
    #[arg(long)]
    responses: PathBuf,
    /// Answer key: `{"q1": "A", ...}` or a question bank.
    #[arg(long)]
    key: PathBuf,
    #[arg(long, default_value_t = 6)]
    groups: usize,
    #[arg(long, default_value_t = 5)]
    group_min: usize,
    #[arg(long, default_value_t = 6)]
    group_max: usize,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Respondents faster than this are dropped.
    #[arg(long, default_value_t = baselines::DEFAULT_MIN_ELAPSED_S)]
    min_elapsed_s: f64,
    /// Keep every respondent.
    #[arg(long)]
    no_filter: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 35)]
    participants: usize,
    /// Question bank file, or a number of synthetic questions.
    #[arg(long, default_value = "36")]
    questions: String,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "results.json")]
    out: PathBuf,
    /// Experiment config JSON; command-line values override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bootstrap repetitions for the wisdom-of-crowd baseline.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    truth_bonus: Option<f64>,
    /// Run deliberation without relay agents.
    #[arg(long)]
    no_relay: bool,
    /// Skip writing per-run event logs.
    #[arg(long)]
    no_logs: bool,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Reads a column of numbers: one per line, last comma-separated field,
/// non-numeric lines (headers) skipped.
fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().filter_map(|l| l.rsplit(',').next()).filter_map(|f| f.trim().parse().ok()).collect())
}

fn load_questions(source: &str, seed: u64) -> Result<Vec<Question>> {
    if let Ok(n) = source.parse::<usize>() {
        return Ok(synthetic_questions(n, seed));
    }
    Ok(QuestionBank::load(source).with_context(|| format!("loading question bank {source}"))?.questions)
}

fn woc(args: WocArgs) -> Result<()> {
    let matrix = ResponseMatrix::load_csv(&args.responses).with_context(|| format!("reading {}", args.responses.display()))?;
    let key = load_key(&args.key).with_context(|| format!("reading {}", args.key.display()))?;
    let (matrix, flagged) = if args.no_filter { (matrix, Vec::new()) } else { filter_bad_actors(&matrix, args.min_elapsed_s) };
    let params = WocParams {
        n_groups: args.groups,
        group_size_low: args.group_min,
        group_size_high: args.group_max,
        reps: args.reps,
        seed: args.seed,
    };
    let result = baselines::woc_bootstrap(&matrix, &key, &params)?;
    let individual = baselines::score_individuals(&matrix, &key)?;
    print_json(&json!({
        "respondents": matrix.n_respondents(),
        "flagged": flagged,
        "individual": individual.distribution,
        "incomplete": individual.incomplete,
        "woc": {
            "accuracy": result.overall,
            "per_question": matrix.questions.iter().zip(&result.per_question).map(|(q, a)| json!({"question_id": q, "accuracy": a})).collect::<Vec<_>>(),
            "group_ties": result.group_ties,
            "population_ties": result.population_ties,
            "iq": iq_score(result.overall, &individual.distribution).ok(),
        },
        "params": params,
    }))
}

#[derive(Serialize)]
struct SimulationOutput {
    summary: CompareSummary,
    event_logs: Vec<PathBuf>,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config: ExperimentConfig = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    config.participants = args.participants;
    config.runs = args.runs;
    config.seed = args.seed;
    if let Some(reps) = args.reps {
        config.woc.reps = reps;
    }
    if let Some(b) = args.truth_bonus {
        config.model.truth_quality_bonus = b;
    }
    if args.no_relay {
        config.session.relay_cadence_s = None;
    }
    if config.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let questions = load_questions(&args.questions, args.seed)?;

    let log_dir = args.out.with_extension("logs");
    if !args.no_logs {
        fs::create_dir_all(&log_dir).with_context(|| format!("creating {}", log_dir.display()))?;
    }
    let log_path = |run: usize| log_dir.join(format!("run-{run:03}.jsonl"));
    let write_failures = std::sync::Mutex::new(Vec::new());
    let summary = compare(&config, &questions, &|run, session| {
        if !args.no_logs {
            if let Err(e) = fs::write(log_path(run), session.export_event_log()) {
                write_failures.lock().expect("lock").push(format!("run {run}: {e}"));
            }
        }
    })?;
    let failures = write_failures.into_inner().expect("lock");
    if !failures.is_empty() {
        bail!("writing event logs failed: {}", failures.join("; "));
    }

    let event_logs = if args.no_logs { Vec::new() } else { (0..config.runs).map(log_path).collect() };
    let out = SimulationOutput { summary, event_logs };
    fs::write(&args.out, serde_json::to_string_pretty(&out)?).with_context(|| format!("writing {}", args.out.display()))?;

    let s = &out.summary;
    eprintln!(
        "individual {:.3}  woc {:.3} (iq {:.1})  csi {:.3} (iq {:.1})  -> {}",
        s.individual.accuracy,
        s.woc.accuracy,
        s.woc.iq.unwrap_or(f64::NAN),
        s.csi.accuracy,
        s.csi.iq.unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

fn replay_log(path: &Path, reestimate: bool, top_k: usize) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records = decode_jsonl(&text)?;
    let estimator: Option<&dyn Estimator> = if reestimate { Some(&LexicalEstimator) } else { None };
    let r = replay(&records, estimator, top_k)?;
    let questions: Vec<_> = r
        .questions
        .iter()
        .map(|q| {
            json!({
                "question_id": q.record.question_id,
                "selection": q.record.selection,
                "correct": q.record.correct,
                "matches_log": q.logged_selection.map(|l| l == q.record.selection),
                "report": q.report,
            })
        })
        .collect();
    print_json(&json!({ "session_id": r.session_id, "subgroups": r.subgroups.len(), "questions": questions }))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Score { x, mu, sigma } => {
            let iq = iq_score(x, &ScoreDistribution { mu, sigma, n: 0 })?;
            print_json(&json!({ "iq": iq, "percentile": percentile(iq) }))
        }
        Command::Woc(args) => woc(args),
        Command::Ttest { a, b } => {
            let (a, b) = (read_column(&a)?, read_column(&b)?);
            let t = paired_t_test(&a, &b)?;
            print_json(&json!({ "t_test": t, "sign_test": sign_test(&a, &b)? }))
        }
        Command::Simulate(args) => simulate(args),
        Command::Replay { events, reestimate, top_k } => replay_log(&events, reestimate, top_k),
        Command::Serve { addr, moderator_token } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let config = csi_server::ServerConfig { moderator_token, ..Default::default() };
            tokio::runtime::Runtime::new()?.block_on(csi_server::serve(addr, config))?;
            Ok(())
        }
    }
}
