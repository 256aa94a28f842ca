use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::rc::Rc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use hearth_core::harness::{
    compare_golden, dump, replay, run_to_end, score_benchmark, Annotation, ExactJudge, Judge, MetricsReport,
    Prediction, RemoteJudge, Repl, ReplOutput, ScenarioDoc, ScenarioError,
};
use hearth_core::transport::{Transport, TransportError};

const EXIT_DIVERGED: u8 = 1;
const EXIT_INVALID: u8 = 2;

#[derive(Parser)]
#[command(name = "hearth", version, about = "Household agent runtime and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpTarget {
    Tasks,
    Graph,
    History,
}

impl DumpTarget {
    fn as_str(self) -> &'static str {
        match self {
            DumpTarget::Tasks => "tasks",
            DumpTarget::Graph => "graph",
            DumpTarget::History => "history",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeKind {
    Exact,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to its horizon and print metrics.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON Lines trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Check the scenario's golden milestones; exit 1 on divergence.
        #[arg(long)]
        golden: bool,
        /// Print a state dump after the run.
        #[arg(long, value_enum)]
        dump: Vec<DumpTarget>,
    },
    /// Interactive console over a scenario's world.
    Repl {
        scenario: PathBuf,
        /// Save the accepted-command transcript here on exit.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Replay a saved REPL transcript and write its trace.
    Replay {
        scenario: PathBuf,
        transcript: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score proposal predictions against annotations.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        judge: JudgeKind,
        /// Judge service URL, required with `--judge remote`.
        #[arg(long)]
        endpoint: Option<String>,
    },
}

struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl Transport for HttpTransport {
    fn post_json(&self, endpoint: &str, body: &Value) -> Result<Value, TransportError> {
        self.client
            .post(endpoint)
            .json(body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json::<Value>())
            .map_err(|e| TransportError(e.to_string()))
    }
}

fn load(path: &Path) -> Result<ScenarioDoc, ScenarioError> {
    let doc = ScenarioDoc::from_path(path)?;
    let issues = doc.validate();
    if issues.is_empty() {
        Ok(doc)
    } else {
        Err(ScenarioError::Invalid(issues))
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            trace,
            golden,
            dump: dumps,
        } => {
            let mut doc = match load(&scenario) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(EXIT_INVALID));
                }
            };
            if let Some(s) = seed {
                doc = doc.with_seed(s);
            }
            let (tr, rt) = match run_to_end(&doc) {
                Ok(x) => x,
                Err(e) if e.is_validation() => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(EXIT_INVALID));
                }
                Err(e) => return Err(e.into()),
            };
            if let Some(path) = trace {
                std::fs::write(&path, tr.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
            }
            let verdict = if golden {
                Some(compare_golden(&tr, &doc.milestones()?))
            } else {
                None
            };
            let metrics = MetricsReport::collect(&doc.name, &rt, &tr, verdict.clone());
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            for d in dumps {
                println!("# {}", d.as_str());
                println!("{}", dump(&rt, d.as_str()).unwrap_or_default());
            }
            match verdict {
                Some(v) if !v.is_match() => {
                    eprintln!("{v}");
                    Ok(ExitCode::from(EXIT_DIVERGED))
                }
                _ => Ok(ExitCode::SUCCESS),
            }
        }
        Command::Repl { scenario, transcript } => {
            let doc = match load(&scenario) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(EXIT_INVALID));
                }
            };
            let mut repl = Repl::new(&doc)?;
            let stdin = std::io::stdin();
            let mut out = std::io::stdout();
            write!(out, "> ")?;
            out.flush()?;
            for line in stdin.lock().lines() {
                match repl.execute(&line?) {
                    ReplOutput::Quit => break,
                    ReplOutput::Text(t) if t.is_empty() => {}
                    ReplOutput::Text(t) | ReplOutput::Usage(t) => writeln!(out, "{t}")?,
                }
                write!(out, "> ")?;
                out.flush()?;
            }
            if let Some(path) = transcript {
                let mut text = repl.transcript().join("\n");
                text.push('\n');
                std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            scenario,
            transcript,
            trace,
        } => {
            let doc = match load(&scenario) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(EXIT_INVALID));
                }
            };
            let text = read_text(&transcript)?;
            let lines: Vec<String> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect();
            let tr = match replay(&doc, &lines) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(EXIT_INVALID));
                }
            };
            match trace {
                Some(path) => {
                    std::fs::write(&path, tr.to_jsonl()).with_context(|| format!("writing {}", path.display()))?
                }
                None => print!("{}", tr.to_jsonl()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Score {
            pred,
            gold,
            judge,
            endpoint,
        } => {
            let preds: Vec<Prediction> =
                serde_json::from_str(&read_text(&pred)?).with_context(|| format!("parsing {}", pred.display()))?;
            let golds: Vec<Annotation> =
                serde_json::from_str(&read_text(&gold)?).with_context(|| format!("parsing {}", gold.display()))?;
            let mut j: Box<dyn Judge> = match judge {
                JudgeKind::Exact => Box::new(ExactJudge),
                JudgeKind::Remote => {
                    let Some(endpoint) = endpoint else {
                        eprintln!("--judge remote needs --endpoint");
                        return Ok(ExitCode::from(EXIT_INVALID));
                    };
                    Box::new(RemoteJudge {
                        transport: Rc::new(HttpTransport {
                            client: reqwest::blocking::Client::new(),
                        }),
                        endpoint,
                    })
                }
            };
            match score_benchmark(&preds, &golds, j.as_mut()) {
                Ok(r) => {
                    println!("{}", serde_json::to_string_pretty(&r)?);
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("{e}");
                    Ok(ExitCode::from(EXIT_INVALID))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
