//! The `hintgen` command line.

pub mod server;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hintgen_core::analytics::correlate::{compare_aggregations, metric_scores};
use hintgen_core::analytics::difficulty::{FileRetriever, HttpRetriever};
use hintgen_core::analytics::sweep::parse_range;
use hintgen_core::analytics::{
    answer_difficulty, best_n, correlate, curve_csv, dataset_stats, hicos_sweep,
    question_difficulty, relevance_fraction, CandidateMode, DifficultyLabel, DifficultyLevel,
    HumanScores, Metric, Retriever,
};
use hintgen_core::annotation::{AnnotationStore, AnswerRow, AssignmentPlan, EventLog, RatingRow};
use hintgen_core::familiarity::{build_calibration, AggregateMode, FamiliarityNormalizer};
use hintgen_core::jsonl;
use hintgen_core::pipeline::{
    open_client, run_pipeline, run_stage, Components, PipelineConfig, Rows, RunOptions, Stage,
    StageReport,
};
use hintgen_core::record::read_dataset;
use hintgen_core::services::{ClientOptions, ServiceClient};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "hintgen",
    version,
    about = "Build and score hint datasets for factoid questions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    /// Pipeline configuration (TOML); defaults apply without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input JSONL; defaults to the config's input.
    #[arg(long = "in", alias = "input")]
    pub input: Option<PathBuf>,
    /// Output JSONL.
    #[arg(long = "out", alias = "output")]
    pub output: PathBuf,
    /// Answer only from the replay fixture.
    #[arg(long)]
    pub offline: bool,
    /// Replay fixture; overrides the config's.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Admission filters, type classification and stratified sampling.
    Sample {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Answer elicitation, verification and hint generation.
    GenerateHints {
        #[command(flatten)]
        stage: StageArgs,
        /// Chat model name.
        #[arg(long)]
        provider: Option<String>,
    },
    /// Leak and rephrase filtering, then pruning of short hint lists.
    FilterHints {
        #[command(flatten)]
        stage: StageArgs,
        /// Cosine similarity at or above which a hint counts as a rephrase.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        min_hints: Option<usize>,
    },
    /// Convergence scores for every hint.
    ScoreHicos {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        candidates: Option<usize>,
    },
    /// Familiarity scores for every hint.
    ScoreHifas {
        #[command(flatten)]
        stage: StageArgs,
        /// Fitted normalizer (`.json`) or calibration corpus (`.jsonl`).
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        mode: Option<AggregateMode>,
    },
    /// Every stage end to end, with a manifest.
    RunAll {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        offline: bool,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this stage (e.g. `hints`).
        #[arg(long)]
        stop_after: Option<Stage>,
    },
    /// Difficulty labels per question, and answerability per level when
    /// annotation answers are given.
    Difficulty {
        #[arg(long = "in")]
        input: PathBuf,
        /// Question difficulty needs a retriever: `stub` reads `--passages`,
        /// `http` queries `--url`.
        #[arg(long, value_enum)]
        retriever: Option<RetrieverKind>,
        /// JSONL of `{"question", "passages"}` rows.
        #[arg(long)]
        passages: Option<PathBuf>,
        /// Retrieval endpoint taking `{"query", "k"}`.
        #[arg(long)]
        url: Option<String>,
        #[arg(long, default_value_t = 500)]
        k: usize,
        /// Exported annotation answers.
        #[arg(long)]
        answers: Option<PathBuf>,
    },
    /// Dataset statistics as JSON.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        /// Also write the report here.
        #[arg(long = "out")]
        output: Option<PathBuf>,
    },
    /// Agreement between a metric and human ratings.
    Correlate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Exported ratings JSONL.
        #[arg(long)]
        human: PathBuf,
        #[arg(long)]
        metric: Metric,
        /// Aggregation for familiarity; ignored for convergence.
        #[arg(long, default_value = "avg")]
        mode: AggregateMode,
        /// Report every familiarity aggregation mode.
        #[arg(long)]
        compare_modes: bool,
    },
    /// Convergence/human correlation across candidate counts.
    Sweep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        human: PathBuf,
        /// Candidate counts, e.g. `1..20`.
        #[arg(long = "n", default_value = "1..20")]
        range: String,
        /// Replay fixture for offline runs.
        #[arg(long, conflicts_with = "config")]
        fixture: Option<PathBuf>,
        /// Configuration for live runs.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "truncate")]
        mode: SweepMode,
        /// Also write the curve as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Serve the annotation protocol over HTTP.
    Serve {
        #[arg(long = "in")]
        input: PathBuf,
        /// Append-only event log; replayed on start.
        #[arg(long)]
        events: PathBuf,
        /// JSON `{"assignments": {annotator: [q_id, ...]}}`.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Require `Authorization: Bearer <token>`.
        #[arg(long, env = "HINTGEN_TOKEN")]
        token: Option<String>,
    },
    /// Fetch page views for a title list and fit the familiarity normalizer.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// One article title per line.
        #[arg(long)]
        titles: PathBuf,
        /// Calibration corpus JSONL to write.
        #[arg(long)]
        corpus: PathBuf,
        /// Fitted normalizer JSON to write.
        #[arg(long)]
        normalizer: PathBuf,
        #[arg(long)]
        offline: bool,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum RetrieverKind {
    Stub,
    Http,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SweepMode {
    Truncate,
    Regenerate,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_config(path: &Path, offline: bool) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load(path)?;
    config.apply_env()?;
    if offline {
        config.offline = true;
    }
    Ok(config)
}

fn stage_config(args: &StageArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(p) => load_config(p, args.offline)?,
        None => {
            let mut c = PipelineConfig::default();
            c.apply_env()?;
            c.offline |= args.offline;
            c
        }
    };
    if let Some(f) = &args.fixture {
        config.fixture = Some(f.clone());
    }
    Ok(config)
}

fn run_stages(args: &StageArgs, config: PipelineConfig, stages: &[Stage]) -> Result<()> {
    let familiarity = stages.contains(&Stage::ScoreHifas);
    config.validate_stages(familiarity)?;
    let client = open_client(&config)?;
    let parts = Components::build(&config, &client, familiarity)?;
    let ctx = parts.context(&config, &client);
    let input = args.input.clone().unwrap_or_else(|| config.input.clone());
    let mut rows = match stages[0] {
        Stage::Filter | Stage::Generate => Rows::Raw(jsonl::read(&input)?),
        _ => Rows::Records(read_dataset(&input)?),
    };
    let mut reports: Vec<StageReport> = Vec::new();
    for &stage in stages {
        let r = run_stage(stage, rows, &ctx)?;
        rows = r.rows;
        reports.push(r.report);
    }
    rows.write(&args.output)?;
    print_json(&reports)
}

fn run_sweep(
    dataset: &Path,
    ratings: &Path,
    range: &str,
    client: &ServiceClient,
    config: &hintgen_core::convergence::ConvergenceConfig,
    mode: SweepMode,
    csv: Option<&Path>,
) -> Result<()> {
    let records = read_dataset(dataset)?;
    let rows: Vec<RatingRow> = jsonl::read(ratings)?;
    let human = HumanScores::from_rows(&rows, Metric::Hicos.attribute())?;
    let mode = match mode {
        SweepMode::Truncate => CandidateMode::Truncate,
        SweepMode::Regenerate => CandidateMode::Regenerate,
    };
    let points = hicos_sweep(&records, &human, parse_range(range)?, client, config, mode)?;
    if let Some(path) = csv {
        std::fs::write(path, curve_csv(&points)).with_context(|| path.display().to_string())?;
    }
    #[derive(Serialize)]
    struct Out<'a> {
        best_n: Option<usize>,
        points: &'a [hintgen_core::analytics::SweepPoint],
    }
    print_json(&Out {
        best_n: best_n(&points),
        points: &points,
    })
}

#[derive(Debug, Serialize)]
struct DifficultyRow {
    q_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    answer: Option<DifficultyLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    question: Option<DifficultyLabel>,
}

#[derive(Debug, Default, Serialize)]
struct Answerability {
    questions: usize,
    answered: usize,
    answered_before_hints: usize,
    mean_hints_revealed: f64,
}

fn difficulty(
    dataset: &Path,
    retriever: Option<&dyn Retriever>,
    k: usize,
    answers: Option<&Path>,
) -> Result<()> {
    let records = read_dataset(dataset)?;
    let mut rows = Vec::new();
    for r in &records {
        let answer = r
            .exact_answer_popularity
            .map(answer_difficulty)
            .transpose()?;
        let question = match retriever {
            Some(ret) => Some(question_difficulty(relevance_fraction(
                &r.question,
                &r.exact_answer,
                ret,
                k,
            )?)?),
            None => None,
        };
        rows.push(DifficultyRow {
            q_id: r.q_id.clone(),
            answer,
            question,
        });
    }
    let Some(path) = answers else {
        let mut out = std::io::stdout().lock();
        for row in &rows {
            writeln!(out, "{}", serde_json::to_string(row)?)?;
        }
        return Ok(());
    };
    // Answerability of annotated questions per answer-difficulty level.
    let level: BTreeMap<&str, DifficultyLevel> = rows
        .iter()
        .filter_map(|r| r.answer.map(|l| (r.q_id.as_str(), l.level)))
        .collect();
    let answered: Vec<AnswerRow> = jsonl::read(path)?;
    let mut by_level: BTreeMap<DifficultyLevel, (Answerability, usize)> = BTreeMap::new();
    for a in &answered {
        let Some(l) = level.get(a.q_id.as_str()) else {
            continue;
        };
        let (e, revealed) = by_level.entry(*l).or_default();
        e.questions += 1;
        e.answered += usize::from(a.status == hintgen_core::annotation::QuestionStatus::Correct);
        e.answered_before_hints += usize::from(a.answered_before_hints);
        *revealed += a.revealed_hint_count;
    }
    let summary: BTreeMap<DifficultyLevel, Answerability> = by_level
        .into_iter()
        .map(|(l, (mut e, revealed))| {
            e.mean_hints_revealed = revealed as f64 / e.questions as f64;
            (l, e)
        })
        .collect();
    #[derive(Serialize)]
    struct Out {
        labels: Vec<DifficultyRow>,
        answerability: BTreeMap<DifficultyLevel, Answerability>,
    }
    print_json(&Out {
        labels: rows,
        answerability: summary,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample {
            stage,
            fraction,
            seed,
        } => {
            let mut config = stage_config(&stage)?;
            if let Some(f) = fraction {
                config.sample_fraction = f;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            run_stages(
                &stage,
                config,
                &[Stage::Filter, Stage::Classify, Stage::Sample],
            )
        }
        Command::GenerateHints { stage, provider } => {
            let mut config = stage_config(&stage)?;
            if let Some(p) = provider {
                config.services.chat_model = p;
            }
            run_stages(
                &stage,
                config,
                &[Stage::Generate, Stage::Verify, Stage::Hints],
            )
        }
        Command::FilterHints {
            stage,
            threshold,
            min_hints,
        } => {
            let mut config = stage_config(&stage)?;
            if let Some(t) = threshold {
                config.similarity_threshold = t;
            }
            if let Some(m) = min_hints {
                config.min_hints = m;
            }
            run_stages(&stage, config, &[Stage::FilterHints, Stage::Prune])
        }
        Command::ScoreHicos { stage, candidates } => {
            let mut config = stage_config(&stage)?;
            if let Some(c) = candidates {
                config.candidate_count = c;
            }
            run_stages(&stage, config, &[Stage::ScoreHicos])
        }
        Command::ScoreHifas {
            stage,
            calibration,
            mode,
        } => {
            let mut config = stage_config(&stage)?;
            if let Some(c) = calibration {
                if c.extension().is_some_and(|e| e == "jsonl") {
                    config.calibration_corpus = Some(c);
                    config.normalizer = None;
                } else {
                    config.normalizer = Some(c);
                }
            }
            if let Some(m) = mode {
                config.aggregate_mode = m;
            }
            run_stages(&stage, config, &[Stage::ScoreHifas])
        }
        Command::RunAll {
            config,
            out,
            offline,
            resume,
            stop_after,
        } => {
            let mut config = load_config(&config, offline)?;
            if let Some(out) = out {
                config.output_dir = out;
            }
            let client = open_client(&config)?;
            let summary = run_pipeline(&config, &client, RunOptions { resume, stop_after })?;
            match summary.manifest {
                Some(m) => print_json(&serde_json::json!({
                    "output_dir": summary.output_dir,
                    "final_count": m.final_count,
                    "config_digest": m.config_digest,
                })),
                None => print_json(&serde_json::json!({
                    "output_dir": summary.output_dir,
                    "stopped_after": summary.last_stage,
                })),
            }
        }
        Command::Difficulty {
            input,
            retriever,
            passages,
            url,
            k,
            answers,
        } => {
            let retriever: Option<Box<dyn Retriever>> = match retriever {
                Some(RetrieverKind::Stub) => Some(Box::new(FileRetriever::load(
                    &passages.context("--retriever stub needs --passages")?,
                )?)),
                Some(RetrieverKind::Http) => Some(Box::new(HttpRetriever::new(
                    url.context("--retriever http needs --url")?,
                )?)),
                None => None,
            };
            difficulty(&input, retriever.as_deref(), k, answers.as_deref())
        }
        Command::Stats { input, output } => {
            let report = dataset_stats(&read_dataset(&input)?)?;
            if let Some(path) = output {
                let mut text = serde_json::to_string_pretty(&report)?;
                text.push('\n');
                std::fs::write(&path, text).with_context(|| path.display().to_string())?;
            }
            print_json(&report)
        }
        Command::Correlate {
            input,
            human,
            metric,
            mode,
            compare_modes,
        } => {
            let records = read_dataset(&input)?;
            let rows: Vec<RatingRow> = jsonl::read(&human)?;
            let human = HumanScores::from_rows(&rows, metric.attribute())?;
            if compare_modes {
                if metric != Metric::Hifas {
                    bail!("--compare-modes applies to hifas only");
                }
                let per_mode: Vec<_> = AggregateMode::ALL
                    .into_iter()
                    .map(|m| (m, metric_scores(&records, metric, m)))
                    .collect();
                print_json(&compare_aggregations(&human, &per_mode))
            } else {
                print_json(&correlate(&metric_scores(&records, metric, mode), &human)?)
            }
        }
        Command::Sweep {
            input,
            human,
            range,
            fixture,
            config,
            mode,
            csv,
        } => match (fixture, config) {
            (Some(f), _) => {
                let client = ServiceClient::replay(&f, ClientOptions::default())?;
                run_sweep(
                    &input,
                    &human,
                    &range,
                    &client,
                    &Default::default(),
                    mode,
                    csv.as_deref(),
                )
            }
            (None, Some(c)) => {
                let config = load_config(&c, false)?;
                let client = open_client(&config)?;
                run_sweep(
                    &input,
                    &human,
                    &range,
                    &client,
                    &config.convergence(),
                    mode,
                    csv.as_deref(),
                )
            }
            (None, None) => bail!("sweep needs --fixture or --config"),
        },
        Command::Serve {
            input,
            events,
            plan,
            addr,
            token,
        } => {
            let records = read_dataset(&input)?;
            let plan: AssignmentPlan = match plan {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)
                    .with_context(|| p.display().to_string())?,
                None => AssignmentPlan::default(),
            };
            let store = AnnotationStore::new(records, plan)?.with_log(EventLog::open(&events)?)?;
            let app = server::router(server::AppState::new(store, token));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await?;
                log::info!("listening on http://{}/v1", listener.local_addr()?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })
        }
        Command::Calibrate {
            config,
            titles,
            corpus,
            normalizer,
            offline,
        } => {
            let config = load_config(&config, offline)?;
            let client = open_client(&config)?;
            let list: Vec<String> = std::fs::read_to_string(&titles)
                .with_context(|| titles.display().to_string())?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_owned)
                .collect();
            let entries = build_calibration(&list, &client)?;
            jsonl::write(&corpus, &entries)?;
            let views: Vec<f64> = entries.iter().map(|e| e.mean_monthly_views).collect();
            let fitted = FamiliarityNormalizer::fit(&views)?;
            fitted.save(&normalizer)?;
            print_json(&fitted)
        }
    }
}
