//! The `inspect` command line.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Diagnostics go to
//! stderr; data goes to stdout or the `--out` file.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};
use serde_json::json;

use crate::campaign::{evaluate, read_records, run_campaign, spawn_for, CampaignConfig, SCHEMA_VERSION};
use crate::config::{FileConfig, Fixtures};
use crate::model::GranularityLevel;
use crate::parse::ParseResult;
use crate::stats::{
    aggregate, emit_report, paired_comparison, reconcile_fixture, CountTable, RateTable, ReportFormat, TableFixture,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "inspect", about = "Reliability harness for LLM-generated robot policy code", disable_version_flag = true)]
struct Cli {
    /// Print name and version as JSON and exit.
    #[arg(long, global = false)]
    version: bool,
    /// Print the JSON schema of a trial record and exit.
    #[arg(long)]
    schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a trial campaign and write JSON-lines records.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Disable feedback rounds regardless of the config.
        #[arg(long)]
        no_feedback: bool,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of worker threads.
        #[arg(long)]
        concurrency: Option<usize>,
        /// Record file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a record file into success-rate and behavior tables.
    Report {
        #[arg(long)]
        records: PathBuf,
        /// A second record file over the same seeds (typically with
        /// feedback) for a paired comparison.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the transcribed failure counts against the transcribed rates.
    Reconcile {
        /// Behavior-count table; the built-in one when absent.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Success-rate table; the built-in one when absent.
        #[arg(long)]
        rates: Option<PathBuf>,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a completion file and print the three-way result as JSON.
    Parse { file: PathBuf },
    /// Classify a completion file against a seeded scene.
    Classify {
        file: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, default_value = "A")]
        level: GranularityLevel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Config file for fixture and simulator overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-score recorded completions against freshly spawned scenes.
    Replay {
        #[arg(long)]
        records: PathBuf,
        /// Zero-based record line to replay; all records when absent.
        #[arg(long)]
        index: Option<usize>,
        /// Config file for fixture and simulator overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

struct Failure(i32, String);

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_DOMAIN, e.to_string())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| domain(format!("cannot read {}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| domain(format!("cannot write {}: {e}", p.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(domain),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig, Failure> {
    match path {
        Some(p) => FileConfig::load(p).map_err(domain),
        None => Ok(FileConfig::default()),
    }
}

fn load_records(path: &Path) -> Result<Vec<crate::campaign::TrialRecord>, Failure> {
    let f = File::open(path).map_err(|e| domain(format!("cannot read {}: {e}", path.display())))?;
    read_records(BufReader::new(f)).map_err(domain)
}

/// Every flag of every subcommand, appended to the top-level help.
fn flag_reference() -> String {
    let mut out = String::from("Flags by subcommand:\n");
    let cmd = Cli::command();
    for sub in cmd.get_subcommands() {
        let flags: Vec<String> = sub
            .get_arguments()
            .filter(|a| a.get_id() != "help")
            .map(|a| match a.get_long() {
                Some(l) => format!("--{l}"),
                None => format!("<{}>", a.get_id().as_str().to_uppercase()),
            })
            .collect();
        out.push_str(&format!("  {:<10} {}\n", sub.get_name(), flags.join(" ")));
    }
    out.push_str("\nExit codes: 0 ok, 1 domain error, 2 usage error.");
    out
}

fn command() -> clap::Command {
    Cli::command().after_help(flag_reference())
}

pub fn version_json() -> String {
    json!({
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "record_schema_version": SCHEMA_VERSION,
    })
    .to_string()
}

/// JSON schema of one record line.
pub fn record_schema() -> serde_json::Value {
    let outcome = json!({
        "type": "object",
        "required": ["status"],
        "properties": {
            "status": {"enum": ["success", "special_success", "failure"]},
            "refusal": {"type": "string"},
            "behavior": {"enum": ["Nonsense", "Disorder", "Infeasible", "Badpose"]},
            "evidence": {
                "type": "object",
                "required": ["kind", "location", "message"],
                "properties": {
                    "kind": {"type": "string"},
                    "location": {"type": ["string", "null"]},
                    "message": {"type": "string"}
                }
            }
        }
    });
    let completion = json!({
        "type": "object",
        "required": ["text", "backend_id", "latency_ms"],
        "properties": {
            "text": {"type": "string"},
            "backend_id": {"type": "string"},
            "latency_ms": {"type": "integer", "minimum": 0}
        }
    });
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "TrialRecord",
        "type": "object",
        "required": ["schema_version", "cell", "trial_index", "seed", "prompt_digest", "completion", "result",
                     "feedback_rounds_used", "attempts", "wall_ms"],
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "cell": {
                "type": "object",
                "required": ["task", "level", "model"],
                "properties": {
                    "task": {"type": "string"},
                    "level": {"enum": ["A", "P", "C"]},
                    "model": {"type": "string"}
                }
            },
            "trial_index": {"type": "integer", "minimum": 0},
            "seed": {"type": "integer", "minimum": 0},
            "prompt_digest": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
            "completion": {"oneOf": [completion, {"type": "null"}]},
            "result": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["scored", "aborted"]},
                    "outcome": outcome,
                    "error": {"type": "string"}
                }
            },
            "feedback_rounds_used": {"type": "integer", "minimum": 0},
            "attempts": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["prompt_digest", "scene_digest", "completion", "outcome"],
                    "properties": {
                        "prompt_digest": {"type": "string"},
                        "scene_digest": {"type": "string"},
                        "completion": completion,
                        "outcome": outcome
                    }
                }
            },
            "wall_ms": {"type": "integer", "minimum": 0}
        }
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    let cli = match <Cli as clap::FromArgMatches>::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = stderr.write_all(e.render().to_string().as_bytes());
            return EXIT_USAGE;
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            code
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    if cli.version {
        return writeln!(stdout, "{}", version_json()).map_err(domain);
    }
    if cli.schema {
        let text = serde_json::to_string_pretty(&record_schema()).expect("schema serializes");
        return writeln!(stdout, "{text}").map_err(domain);
    }
    let Some(cmd) = cli.command else {
        return Err(Failure(EXIT_USAGE, format!("a subcommand is required\n\n{}", command().render_help())));
    };
    match cmd {
        Command::Run { config, no_feedback, seed, concurrency, out } => {
            let file = FileConfig::load(&config).map_err(domain)?;
            let fx = file.fixtures().map_err(domain)?;
            let mut cfg = CampaignConfig::from_file(&file, &fx).map_err(domain)?;
            if no_feedback {
                cfg.feedback_enabled = false;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(c) = concurrency {
                cfg.concurrency = c;
            }
            let records = match &out {
                Some(p) => {
                    let mut f = File::create(p).map_err(|e| domain(format!("cannot write {}: {e}", p.display())))?;
                    run_campaign(&cfg, &fx, &mut f)
                }
                None => run_campaign(&cfg, &fx, stdout),
            }
            .map_err(domain)?;
            let aborted = records.iter().filter(|r| r.is_aborted()).count();
            let _ = writeln!(stderr, "{} records written, {aborted} aborted", records.len());
            Ok(())
        }
        Command::Report { records, compare, format, out } => {
            let base = load_records(&records)?;
            let treated = compare.as_deref().map(load_records).transpose()?;
            let stats = aggregate(treated.as_ref().unwrap_or(&base));
            let paired = treated.as_ref().map(|t| paired_comparison(&base, t)).transpose().map_err(domain)?;
            let doc = emit_report(&stats, paired.as_ref(), format).map_err(domain)?;
            emit(&out, stdout, &doc)
        }
        Command::Reconcile { counts, rates, format, out } => {
            let counts = match counts {
                Some(p) => CountTable::from_fixture(&TableFixture::parse("counts", &read_text(&p)?).map_err(domain)?),
                None => Ok(CountTable::builtin()),
            }
            .map_err(domain)?;
            let rates = match rates {
                Some(p) => RateTable::from_fixture(&TableFixture::parse("rates", &read_text(&p)?).map_err(domain)?),
                None => Ok(RateTable::builtin()),
            }
            .map_err(domain)?;
            let report = reconcile_fixture(&counts, &rates).map_err(domain)?;
            let doc = match format {
                ReportFormat::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
                ReportFormat::Md => report.to_markdown(),
                ReportFormat::Csv => {
                    let mut s = String::from("task,level,model,failures,computed,published,delta,flagged\n");
                    for d in &report.cells {
                        s.push_str(&format!(
                            "{},{},{},{},{:.2},{:.2},{:.2},{}\n",
                            d.cell.task, d.cell.level, d.cell.model, d.failures, d.computed, d.published, d.delta, d.flagged
                        ));
                    }
                    s
                }
            };
            emit(&out, stdout, &doc)
        }
        Command::Parse { file } => {
            let text = read_text(&file)?;
            let fx = Fixtures::builtin();
            let result: ParseResult = fx.parser.parse(&text);
            let json = serde_json::to_string_pretty(&result).expect("parse result serializes");
            writeln!(stdout, "{json}").map_err(domain)
        }
        Command::Classify { file, task, level, seed, config } => {
            let text = read_text(&file)?;
            let fx = load_config(&config)?.fixtures().map_err(domain)?;
            let world = spawn_for(&fx, &task, seed).map_err(domain)?;
            let eval = evaluate(&fx, &task, level, &world, &text).map_err(domain)?;
            let doc = json!({
                "task": task,
                "level": level,
                "seed": seed,
                "target_out_of_workspace": world.target_out_of_workspace(),
                "outcome": eval.outcome,
                "sim": eval.sim,
            });
            writeln!(stdout, "{}", serde_json::to_string_pretty(&doc).expect("serializes")).map_err(domain)
        }
        Command::Replay { records, index, config } => {
            let recs = load_records(&records)?;
            let fx = load_config(&config)?.fixtures().map_err(domain)?;
            let chosen: Vec<(usize, &crate::campaign::TrialRecord)> = match index {
                Some(i) => vec![(i, recs.get(i).ok_or_else(|| domain(format!("no record at index {i}")))?)],
                None => recs.iter().enumerate().collect(),
            };
            let mut mismatches = 0;
            for (i, r) in chosen {
                let world = spawn_for(&fx, &r.cell.task, r.seed).map_err(domain)?;
                let mut rounds = Vec::new();
                for a in &r.attempts {
                    let eval = evaluate(&fx, &r.cell.task, r.cell.level, &world, &a.completion.text).map_err(domain)?;
                    let same = eval.outcome == a.outcome && world.digest() == a.scene_digest;
                    mismatches += !same as usize;
                    rounds.push(json!({"recorded": a.outcome, "replayed": eval.outcome, "matches": same}));
                }
                let line = json!({"index": i, "cell": r.cell, "trial_index": r.trial_index, "seed": r.seed, "rounds": rounds});
                writeln!(stdout, "{line}").map_err(domain)?;
            }
            if mismatches > 0 {
                return Err(domain(format!("{mismatches} replayed rounds differ from the record")));
            }
            Ok(())
        }
    }
}
