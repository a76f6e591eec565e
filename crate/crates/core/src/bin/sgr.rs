//! `sgr` — one subcommand per pipeline stage. All diagnostics go to stderr,
//! all data to files or stdout. Exit codes: 0 success, 1 validation error,
//! 2 runtime error.

use std::collections::HashSet;
use std::io::Read;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sgr_core::eval;
use sgr_core::grammar::{serialize_graph, truncate_graph_text};
use sgr_core::graph::build_graph;
use sgr_core::loss;
use sgr_core::pretrain::{PretrainSample, Sampler, SamplerConfig};
use sgr_core::rank::{
    bucket_sessions, emit_qrels, emit_run_file, rank_candidates, FailPolicy, RankError,
    RankOptions, RankedList,
};
use sgr_core::scorer::{build_scorer, AnswerScore, ScorerConfig, ScorerKind};
use sgr_core::session::{compute_stats, make_context, parse_session_str, to_jsonl, Session};
use sgr_core::util::parallel_map;

#[derive(Parser)]
#[command(
    name = "sgr",
    version,
    about = "Session-search toolkit: session graphs, symbolic text, pretraining data, ranking, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Link,
    Node,
    Contrastive,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StepsArg {
    /// Every step of every session.
    All,
    /// Only each session's final step.
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GraphFormat {
    Json,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ContrastiveFormArg {
    /// Bradley-Terry negative log-sigmoid (proper loss, default).
    LogSigmoid,
    /// Raw negated sigmoid; negative-valued, kept for comparison.
    NegSigmoid,
}

impl From<ContrastiveFormArg> for loss::ContrastiveForm {
    fn from(arg: ContrastiveFormArg) -> Self {
        match arg {
            ContrastiveFormArg::LogSigmoid => loss::ContrastiveForm::LogSigmoid,
            ContrastiveFormArg::NegSigmoid => loss::ContrastiveForm::NegSigmoid,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a session log and re-emit it in canonical JSONL form.
    Ingest {
        /// Session JSONL ("-" for stdin).
        #[arg(long, default_value = "-")]
        input: String,
        /// Output path ("-" for stdout).
        #[arg(long, default_value = "-")]
        out: String,
        /// Keep going and exit 0 even when some lines are invalid.
        #[arg(long)]
        lenient: bool,
    },
    /// Print corpus statistics as JSON.
    Stats {
        #[arg(long, default_value = "-")]
        input: String,
    },
    /// Dump session graphs as JSON, or one graph as JSON/DOT.
    BuildGraph {
        #[arg(long, default_value = "-")]
        input: String,
        #[arg(long, default_value = "-")]
        out: String,
        /// Select one session (requires --step for DOT output).
        #[arg(long)]
        session: Option<String>,
        /// 1-based step within the selected session.
        #[arg(long)]
        step: Option<usize>,
        #[arg(long, value_enum, default_value_t = GraphFormat::Json)]
        format: GraphFormat,
    },
    /// Write one symbolic graph string per (session, step) as JSONL.
    Serialize {
        #[arg(long, default_value = "-")]
        input: String,
        #[arg(long, default_value = "-")]
        out: String,
        /// Character budget for each graph text (drops oldest edges first).
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Generate the self-supervised pretraining datasets as JSONL.
    GenPretrain {
        #[arg(long, default_value = "-")]
        input: String,
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, value_enum, default_value_t = TaskArg::All)]
        task: TaskArg,
        /// Negatives per positive for link prediction.
        #[arg(long, default_value_t = 1.0)]
        neg_ratio: f64,
        /// Inclusion probability per eligible target.
        #[arg(long, default_value_t = 1.0)]
        sample_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Character budget for prompt graph segments.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_enum, default_value_t = StepsArg::Last)]
        steps: StepsArg,
        /// Worker threads; output is identical for any value.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Rank every candidate list and emit a TREC run file.
    Rank {
        #[arg(long, default_value = "-")]
        input: String,
        #[arg(long, value_enum, default_value_t = ScorerKind::Mock)]
        scorer: ScorerKind,
        /// Scorer config file (JSON; unknown keys rejected).
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        /// Run tag written in column six.
        #[arg(long, default_value = "sgr")]
        tag: String,
        #[arg(long, default_value = "-")]
        out: String,
        /// Also write click-label qrels for the ranked steps.
        #[arg(long)]
        qrels_out: Option<String>,
        #[arg(long, value_enum, default_value_t = StepsArg::All)]
        steps: StepsArg,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Mock scorer seed (overrides the config file).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = FailPolicy::FailQuery)]
        on_scorer_error: FailPolicy,
    },
    /// Compute per-sample and aggregate losses from scorer outputs.
    AuditLoss {
        /// Pretraining samples JSONL.
        #[arg(long)]
        samples: String,
        /// Scorer outputs JSONL, one line per sample line.
        #[arg(long)]
        scores: String,
        #[arg(long, default_value = "-")]
        out: String,
        /// Contrastive pair loss form.
        #[arg(long, value_enum, default_value_t = ContrastiveFormArg::LogSigmoid)]
        contrastive_form: ContrastiveFormArg,
    },
    /// Score a run file against qrels (MAP, MRR, NDCG@k).
    Evaluate {
        #[arg(long)]
        run: String,
        #[arg(long)]
        qrels: String,
        /// NDCG cutoffs.
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
        k: Vec<usize>,
        /// Include per-query rows in the output.
        #[arg(long)]
        per_query: bool,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        format: ReportFormat,
    },
    /// Partition sessions into short/medium/long length buckets.
    Buckets {
        #[arg(long, default_value = "-")]
        input: String,
        #[arg(long, default_value = "-")]
        out: String,
    },
}

/// Validation failures exit 1, runtime failures (scorers, I/O mid-pipeline)
/// exit 2.
enum AppError {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

fn validation<E: Into<anyhow::Error>>(e: E) -> AppError {
    AppError::Validation(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> AppError {
    AppError::Runtime(e.into())
}

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => match run(cli.command) {
            Ok(()) => 0,
            Err(AppError::Validation(e)) => {
                eprintln!("error: {e:#}");
                1
            }
            Err(AppError::Runtime(e)) => {
                eprintln!("error: {e:#}");
                2
            }
        },
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            }
        }
    };
    std::process::exit(code);
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .context("reading stdin")?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

fn write_output(path: &str, content: &str) -> Result<()> {
    if path == "-" {
        print!("{content}");
        Ok(())
    } else {
        std::fs::write(path, content).with_context(|| format!("writing {path}"))
    }
}

/// Reject unwritable output paths before any expensive work starts.
fn check_writable(path: &str) -> Result<(), AppError> {
    if path == "-" {
        return Ok(());
    }
    let parent = std::path::Path::new(path)
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| std::path::Path::new("."));
    if !parent.is_dir() {
        return Err(validation(anyhow!(
            "output directory {} does not exist",
            parent.display()
        )));
    }
    Ok(())
}

/// Load and validate sessions, reporting line errors on stderr. In strict
/// mode any invalid line is a validation failure.
fn load_sessions(path: &str, lenient: bool) -> Result<Vec<Session>, AppError> {
    let text = read_input(path).map_err(validation)?;
    let (sessions, errors) = parse_session_str(&text);
    for e in &errors {
        eprintln!("{e}");
    }
    eprintln!(
        "read {} sessions, {} invalid lines",
        sessions.len(),
        errors.len()
    );
    if !errors.is_empty() && !lenient {
        return Err(validation(anyhow!(
            "{} invalid lines in {path}",
            errors.len()
        )));
    }
    Ok(sessions)
}

fn steps_of(session: &Session, which: StepsArg) -> Vec<usize> {
    match which {
        StepsArg::All => (1..=session.queries.len()).collect(),
        StepsArg::Last => vec![session.queries.len()],
    }
}

fn load_scorer_config(
    path: Option<&str>,
    kind: ScorerKind,
    seed: Option<u64>,
) -> Result<ScorerConfig, AppError> {
    let mut cfg = match path {
        Some(p) => {
            let text = read_input(p).map_err(validation)?;
            serde_json::from_str::<ScorerConfig>(&text)
                .with_context(|| format!("parsing scorer config {p}"))
                .map_err(validation)?
        }
        None => ScorerConfig::new(kind),
    };
    cfg.kind = kind;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(validation)?;
    Ok(cfg)
}

fn run(command: Command) -> Result<(), AppError> {
    match command {
        Command::Ingest {
            input,
            out,
            lenient,
        } => {
            let sessions = load_sessions(&input, lenient)?;
            write_output(&out, &to_jsonl(&sessions)).map_err(runtime)
        }

        Command::Stats { input } => {
            let sessions = load_sessions(&input, false)?;
            let stats = compute_stats(&sessions).map_err(validation)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&stats).expect("stats serialize")
            );
            Ok(())
        }

        Command::BuildGraph {
            input,
            out,
            session,
            step,
            format,
        } => {
            let sessions = load_sessions(&input, false)?;
            if session.is_none() && step.is_some() {
                return Err(validation(anyhow!("--step requires --session")));
            }
            match (&session, format) {
                (None, GraphFormat::Dot) => {
                    Err(validation(anyhow!("DOT output needs --session and --step")))
                }
                (Some(id), _) => {
                    let s = sessions
                        .iter()
                        .find(|s| s.session_id == *id)
                        .ok_or_else(|| validation(anyhow!("session `{id}` not found")))?;
                    let step =
                        step.ok_or_else(|| validation(anyhow!("--session requires --step")))?;
                    let ctx = make_context(s, step).map_err(validation)?;
                    let g = build_graph(&ctx);
                    let text = match format {
                        GraphFormat::Dot => g.to_dot(),
                        GraphFormat::Json => {
                            format!(
                                "{}\n",
                                serde_json::to_string_pretty(&g).expect("graph serialize")
                            )
                        }
                    };
                    write_output(&out, &text).map_err(runtime)
                }
                (None, GraphFormat::Json) => {
                    let mut lines = String::new();
                    for s in &sessions {
                        for step in 1..=s.queries.len() {
                            let ctx = make_context(s, step).map_err(validation)?;
                            let g = build_graph(&ctx);
                            let record = serde_json::json!({
                                "session_id": s.session_id,
                                "step": step,
                                "graph": g,
                            });
                            lines.push_str(&record.to_string());
                            lines.push('\n');
                        }
                    }
                    write_output(&out, &lines).map_err(runtime)
                }
            }
        }

        Command::Serialize { input, out, budget } => {
            let sessions = load_sessions(&input, false)?;
            let mut lines = String::new();
            let mut count = 0usize;
            for s in &sessions {
                for step in 1..=s.queries.len() {
                    let ctx = make_context(s, step).map_err(validation)?;
                    let g = build_graph(&ctx);
                    let text = match budget {
                        Some(b) => truncate_graph_text(&g, b),
                        None => serialize_graph(&g),
                    };
                    let record = serde_json::json!({
                        "session_id": s.session_id,
                        "step": step,
                        "text": text.text,
                    });
                    lines.push_str(&record.to_string());
                    lines.push('\n');
                    count += 1;
                }
            }
            eprintln!("serialized {count} graphs");
            write_output(&out, &lines).map_err(runtime)
        }

        Command::GenPretrain {
            input,
            out,
            task,
            neg_ratio,
            sample_rate,
            seed,
            budget,
            steps,
            jobs,
        } => {
            if neg_ratio < 0.0 || !(0.0..=1.0).contains(&sample_rate) {
                return Err(validation(anyhow!(
                    "--neg-ratio must be >= 0 and --sample-rate in [0, 1]"
                )));
            }
            check_writable(&out)?;
            let sessions = load_sessions(&input, false)?;
            let sampler = Sampler::new(SamplerConfig {
                neg_ratio,
                sample_rate,
                seed,
                budget,
            });
            let work: Vec<(Session, Vec<usize>)> = sessions
                .into_iter()
                .map(|s| {
                    let st = steps_of(&s, steps);
                    (s, st)
                })
                .collect();
            let chunks: Vec<String> = parallel_map(work, jobs, |(session, steps)| {
                let mut chunk = String::new();
                for step in steps {
                    let ctx = make_context(&session, step).expect("step within session");
                    let g = build_graph(&ctx);
                    let mut samples: Vec<PretrainSample> = Vec::new();
                    if matches!(task, TaskArg::Link | TaskArg::All) {
                        samples.extend(sampler.link_samples(&g, &session.session_id, step));
                    }
                    if matches!(task, TaskArg::Node | TaskArg::All) {
                        samples.extend(sampler.node_samples(&g, &session.session_id, step));
                    }
                    if matches!(task, TaskArg::Contrastive | TaskArg::All) {
                        // Graphs without click edges simply contribute none.
                        if let Ok(more) = sampler.contrastive_samples(&g, &session.session_id, step)
                        {
                            samples.extend(more);
                        }
                    }
                    for s in &samples {
                        chunk.push_str(&serde_json::to_string(s).expect("sample serialize"));
                        chunk.push('\n');
                    }
                }
                chunk
            });
            let body: String = chunks.concat();
            eprintln!("generated {} samples", body.lines().count());
            write_output(&out, &body).map_err(runtime)
        }

        Command::Rank {
            input,
            scorer,
            config,
            budget,
            tag,
            out,
            qrels_out,
            steps,
            jobs,
            seed,
            on_scorer_error,
        } => {
            check_writable(&out)?;
            if let Some(q) = &qrels_out {
                check_writable(q)?;
            }
            let sessions = load_sessions(&input, false)?;
            let mut ids: HashSet<&str> = HashSet::new();
            for s in &sessions {
                if !ids.insert(&s.session_id) {
                    return Err(validation(anyhow!(
                        "duplicate session_id `{}` in input",
                        s.session_id
                    )));
                }
            }
            let cfg = load_scorer_config(config.as_deref(), scorer, seed)?;
            let scorer = build_scorer(&cfg, Some(&sessions)).map_err(validation)?;
            let candidate_jobs = match cfg.kind {
                ScorerKind::Remote => cfg.max_in_flight,
                _ => 1,
            };
            let opts = RankOptions {
                budget,
                policy: on_scorer_error,
                jobs: candidate_jobs,
                ..RankOptions::default()
            };

            let mut work: Vec<(Session, usize)> = Vec::new();
            for s in &sessions {
                for step in steps_of(s, steps) {
                    work.push((s.clone(), step));
                }
            }
            let results: Vec<Result<RankedList, RankError>> =
                parallel_map(work, jobs, |(session, step)| {
                    let ctx = make_context(&session, step).expect("step within session");
                    rank_candidates(&ctx, scorer.as_ref(), &opts)
                });

            let mut lists: Vec<RankedList> = Vec::new();
            for result in results {
                match result {
                    Ok(list) => lists.push(list),
                    Err(RankError::NoCandidates) => {
                        // Steps without candidates cannot be ranked; say so
                        // and move on.
                        continue;
                    }
                    Err(e) => return Err(runtime(e)),
                }
            }
            eprintln!("ranked {} queries", lists.len());
            let run_text = emit_run_file(&lists, &tag).map_err(validation)?;
            write_output(&out, &run_text).map_err(runtime)?;
            if let Some(qrels_path) = qrels_out {
                let qrels = emit_qrels(&sessions, steps == StepsArg::Last);
                write_output(&qrels_path, &qrels).map_err(runtime)?;
            }
            Ok(())
        }

        Command::AuditLoss {
            samples,
            scores,
            out,
            contrastive_form,
        } => audit_loss(&samples, &scores, &out, contrastive_form.into()),

        Command::Evaluate {
            run,
            qrels,
            k,
            per_query,
            format,
        } => {
            if k.is_empty() || k.contains(&0) {
                return Err(validation(anyhow!("--k cutoffs must be positive")));
            }
            let run_text = read_input(&run).map_err(validation)?;
            let qrels_text = read_input(&qrels).map_err(validation)?;
            let report = eval::evaluate(&run_text, &qrels_text, &k).map_err(validation)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            match format {
                ReportFormat::Table => print!("{}", report.to_table(per_query)),
                ReportFormat::Json => {
                    let mut value = serde_json::to_value(&report).expect("report serializes");
                    if !per_query {
                        if let Some(map) = value.as_object_mut() {
                            map.remove("per_query");
                        }
                    }
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&value).expect("report json")
                    );
                }
            }
            Ok(())
        }

        Command::Buckets { input, out } => {
            let sessions = load_sessions(&input, false)?;
            let (assignments, counts) = bucket_sessions(&sessions);
            let mut lines = String::new();
            for (session_id, length, bucket) in &assignments {
                let record = serde_json::json!({
                    "session_id": session_id,
                    "length": length,
                    "bucket": bucket,
                });
                lines.push_str(&record.to_string());
                lines.push('\n');
            }
            let summary = serde_json::json!({
                "bucket_counts": {
                    "short": counts[0],
                    "medium": counts[1],
                    "long": counts[2],
                }
            });
            lines.push_str(&summary.to_string());
            lines.push('\n');
            eprintln!(
                "short {} medium {} long {}",
                counts[0], counts[1], counts[2]
            );
            write_output(&out, &lines).map_err(runtime)
        }
    }
}

/// Scorer output record paired 1:1 with sample lines.
#[derive(serde::Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
enum ScoreRecord {
    Link {
        #[serde(default)]
        yes_logit: Option<f64>,
        #[serde(default)]
        no_logit: Option<f64>,
        #[serde(default)]
        prob_yes: Option<f64>,
    },
    Node {
        token_logprobs: Vec<f64>,
    },
    Contrastive {
        with_history: Vec<f64>,
        without_history: Vec<f64>,
    },
}

fn audit_loss(
    samples_path: &str,
    scores_path: &str,
    out: &str,
    contrastive_form: loss::ContrastiveForm,
) -> Result<(), AppError> {
    use sgr_core::grammar::TaskKind;
    use sgr_core::scorer::ContinuationScore;

    let samples_text = read_input(samples_path).map_err(validation)?;
    let scores_text = read_input(scores_path).map_err(validation)?;
    let samples: Vec<PretrainSample> = samples_text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{samples_path} line {}", i + 1))
        })
        .collect::<Result<_>>()
        .map_err(validation)?;
    let scores: Vec<ScoreRecord> = scores_text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{scores_path} line {}", i + 1))
        })
        .collect::<Result<_>>()
        .map_err(validation)?;
    if samples.len() != scores.len() {
        return Err(validation(anyhow!(
            "{} samples but {} score records",
            samples.len(),
            scores.len()
        )));
    }

    let mut lines = String::new();
    let mut total = 0.0f64;
    let mut per_task: std::collections::BTreeMap<&str, (usize, f64)> = Default::default();
    for (i, (sample, score)) in samples.iter().zip(&scores).enumerate() {
        let line_no = i + 1;
        let (task_name, value) = match (&sample.task, score) {
            (
                TaskKind::LinkPred,
                ScoreRecord::Link {
                    yes_logit,
                    no_logit,
                    prob_yes,
                },
            ) => {
                let p = match (prob_yes, yes_logit) {
                    (Some(p), _) => *p,
                    (None, Some(yes)) => {
                        AnswerScore::from_logits(*yes, no_logit.unwrap_or(0.0)).prob_yes
                    }
                    (None, None) => {
                        return Err(validation(anyhow!(
                            "line {line_no}: link record needs prob_yes or yes_logit"
                        )))
                    }
                };
                let z = sample.label.ok_or_else(|| {
                    validation(anyhow!("line {line_no}: link sample has no label"))
                })?;
                ("link", loss::link_loss(p, z == 1))
            }
            (TaskKind::NodeGen, ScoreRecord::Node { token_logprobs }) => (
                "node",
                loss::node_loss(&ContinuationScore::new(token_logprobs.clone()))
                    .map_err(|e| validation(anyhow!("line {line_no}: {e}")))?,
            ),
            (
                TaskKind::Contrastive,
                ScoreRecord::Contrastive {
                    with_history,
                    without_history,
                },
            ) => (
                "contrastive",
                loss::contrastive_loss_with(
                    contrastive_form,
                    &ContinuationScore::new(with_history.clone()),
                    &ContinuationScore::new(without_history.clone()),
                ),
            ),
            _ => {
                return Err(validation(anyhow!(
                    "line {line_no}: sample task and score record task differ"
                )))
            }
        };
        total += value.value;
        let slot = per_task.entry(task_name).or_insert((0, 0.0));
        slot.0 += 1;
        slot.1 += value.value;
        let record = serde_json::json!({
            "line": line_no,
            "task": task_name,
            "loss": value.value,
            "components": value.components,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    let count = samples.len();
    let aggregate = serde_json::json!({
        "aggregate": true,
        "count": count,
        "total_loss": total,
        "mean_loss": if count == 0 { 0.0 } else { total / count as f64 },
        "per_task": per_task
            .iter()
            .map(|(task, (n, sum))| {
                (
                    task.to_string(),
                    serde_json::json!({ "count": n, "mean": sum / *n as f64 }),
                )
            })
            .collect::<serde_json::Map<String, serde_json::Value>>(),
    });
    lines.push_str(&aggregate.to_string());
    lines.push('\n');
    write_output(out, &lines).map_err(runtime)
}
