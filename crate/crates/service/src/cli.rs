use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use repograph_core::agent::{run, AgentAction, AgentContext, TraceRecord};
use repograph_core::eval::{load_questions, load_ratings, read_jsonl, report, run_eval, AnswerRecord};

use crate::config::{ConfigError, SystemConfig};
use crate::ops::{build_and_save, load_graph, render_report, OpError};
use crate::server::{serve, AppState};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUILD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "repograph", version, about = "Multi-repository code knowledge graph")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the graph and write the snapshot.
    Build {
        #[arg(short, long)]
        config: PathBuf,
        /// Print the extraction report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a graph query against the snapshot.
    Query {
        #[arg(short, long)]
        config: PathBuf,
        query: String,
        #[arg(long)]
        json: bool,
    },
    /// Ask questions; one agent run per input line.
    Chat {
        #[arg(short, long)]
        config: PathBuf,
        /// Ask a single question instead of reading stdin.
        #[arg(short, long)]
        question: Option<String>,
        /// Write each trace as JSONL into this directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(short, long, required = true)]
        config: Vec<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: SocketAddr,
    },
    /// Evaluation harness.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// One fresh agent run per question.
    Run(EvalRunArgs),
    /// Percentage tables from human ratings.
    Report {
        #[arg(short, long)]
        ratings: PathBuf,
        #[arg(short, long)]
        answers: PathBuf,
        #[arg(long)]
        by_category: bool,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(short, long)]
    pub questions: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
}

fn load_config(path: &Path, err: &mut dyn Write) -> Result<SystemConfig, i32> {
    SystemConfig::load(path).map_err(|e: ConfigError| {
        let _ = writeln!(err, "error: {e}");
        EXIT_CONFIG
    })
}

fn op_failed(e: &OpError, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "error: {e}");
    EXIT_BUILD
}

/// Runs a parsed command; returns the process exit code.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write, input: &mut dyn BufRead) -> i32 {
    match cli.command {
        Command::Build { config, json } => {
            let cfg = match load_config(&config, err) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let provider = match cfg.make_provider() {
                Ok(p) => p,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let mut on_phase = |phase, _: &_| tracing::info!(?phase, "build phase");
            match build_and_save(&cfg, provider.as_ref(), &mut on_phase) {
                Ok((_, report)) => {
                    if json {
                        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
                    } else {
                        let _ = write!(out, "{}", render_report(&report));
                        let _ = writeln!(out, "snapshot: {}", cfg.snapshot.display());
                    }
                    0
                }
                Err(e) => op_failed(&e, err),
            }
        }
        Command::Query { config, query, json } => {
            let cfg = match load_config(&config, err) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let graph = match load_graph(&cfg.snapshot) {
                Ok(g) => g,
                Err(e) => return op_failed(&e, err),
            };
            match graph.execute_query(&query) {
                Ok(rows) if json => {
                    let _ = writeln!(out, "{}", serde_json::to_string(&rows).expect("rows serialize"));
                    0
                }
                Ok(rows) => {
                    let _ = write!(out, "{rows}");
                    0
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_CONFIG
                }
            }
        }
        Command::Chat { config, question, trace_dir } => {
            let cfg = match load_config(&config, err) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let provider = match cfg.make_provider() {
                Ok(p) => p,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let graph = match load_graph(&cfg.snapshot) {
                Ok(g) => g,
                Err(e) => return op_failed(&e, err),
            };
            let ctx = AgentContext::new(&graph, provider.as_ref(), cfg.agent_config());
            let questions: Box<dyn Iterator<Item = String>> = match question {
                Some(q) => Box::new(std::iter::once(q)),
                None => Box::new(input.lines().map_while(Result::ok)),
            };
            for (n, q) in questions.enumerate() {
                let q = q.trim().to_string();
                if q.is_empty() {
                    continue;
                }
                let trace = run(&q, &ctx, &mut |r| print_record(r, out));
                if let Some(dir) = &trace_dir {
                    let path = dir.join(format!("chat-{}.jsonl", n + 1));
                    if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, trace.to_jsonl())) {
                        let _ = writeln!(err, "error: {}: {e}", path.display());
                        return EXIT_BUILD;
                    }
                }
            }
            0
        }
        Command::Serve { config, addr } => {
            let state = AppState::new();
            for path in &config {
                let cfg = match load_config(path, err) {
                    Ok(c) => c,
                    Err(code) => return code,
                };
                if let Err(e) = state.register(cfg) {
                    let _ = writeln!(err, "error: {}: {e:?}", path.display());
                    return EXIT_CONFIG;
                }
            }
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            match rt.block_on(serve(state, addr)) {
                Ok(()) => 0,
                Err(e) => {
                    let _ = writeln!(err, "error: {addr}: {e}");
                    EXIT_BUILD
                }
            }
        }
        Command::Eval(EvalCommand::Run(args)) => {
            let cfg = match load_config(&args.config, err) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let questions = match load_questions(&args.questions) {
                Ok(q) => q,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let provider = match cfg.make_provider() {
                Ok(p) => p,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let graph = match load_graph(&cfg.snapshot) {
                Ok(g) => g,
                Err(e) => return op_failed(&e, err),
            };
            match run_eval(&questions, &graph, provider.as_ref(), cfg.agent_config(), &args.out) {
                Ok(answers) => {
                    let failed = answers.iter().filter(|a| a.answer.is_none()).count();
                    let _ = writeln!(out, "{} questions, {} failed; answers in {}", answers.len(), failed, args.out.join("answers.jsonl").display());
                    0
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_BUILD
                }
            }
        }
        Command::Eval(EvalCommand::Report { ratings, answers, by_category, json }) => {
            let loaded = load_ratings(&ratings).and_then(|r| read_jsonl::<AnswerRecord>(&answers).map(|a| (r, a)));
            let result = loaded.and_then(|(r, a)| report(&r, &a, by_category));
            match result {
                Ok(rep) if json => {
                    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
                    0
                }
                Ok(rep) => {
                    let _ = write!(out, "{rep}");
                    0
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_CONFIG
                }
            }
        }
    }
}

fn print_record(record: &TraceRecord, out: &mut dyn Write) {
    match record {
        TraceRecord::Start { .. } => {}
        TraceRecord::Step(step) => {
            if !step.thought.is_empty() {
                let _ = writeln!(out, "[{}] thought: {}", step.index, step.thought);
            }
            match (&step.action, &step.observation) {
                (Some(AgentAction::ToolCall(call)), Some(obs)) => {
                    let _ = writeln!(out, "[{}] {}", step.index, call.wire());
                    for line in obs.text.lines() {
                        let _ = writeln!(out, "    {line}");
                    }
                }
                (Some(AgentAction::FinalAnswer { .. }), _) => {}
                _ => {
                    let _ = writeln!(out, "[{}] no action: {}", step.index, step.error.as_deref().unwrap_or("unknown"));
                }
            }
        }
        TraceRecord::Final { final_answer, error, .. } => match (final_answer, error) {
            (Some(a), _) => {
                let _ = writeln!(out, "answer: {a}\n");
            }
            (None, e) => {
                let _ = writeln!(out, "error: {}\n", e.as_deref().unwrap_or("no answer"));
            }
        },
    }
}
