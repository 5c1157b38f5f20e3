use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use scenforge::dsl::ComponentKind;
use scenforge::harness::{evaluate_policies, run_finetune_eval, run_generation, HarnessError, RunConfig};
use scenforge::kb::{seed_kb, HashingEncoder, KnowledgeBase};
use scenforge::metrics::{aggregate, ScenarioReport, SceneRecord};
use scenforge::sim::replay;

#[derive(Parser)]
#[command(
    name = "scenforge",
    version,
    about = "Generate, run and score adversarial driving scenes"
)]
struct Cli {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or query the snippet knowledge base.
    Kb {
        #[command(subcommand)]
        action: KbAction,
    },
    /// Generate scripts, simulate every cell and select scenes.
    Gen,
    /// Generation followed by evaluation.
    Run,
    /// Evaluate the surrogate and configured policies on the selected scenes.
    Eval,
    /// Finetune the policy on training routes and compare on held-out routes.
    Finetune,
    /// Print the aggregated report of an artifact directory.
    Report {
        #[arg(long)]
        include_padded: bool,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Re-run a recorded trace and compare it byte for byte.
    Replay { trace: PathBuf },
}

#[derive(Subcommand)]
enum KbAction {
    /// Write the seed knowledge base to a directory (default `<out>/kb`).
    Build {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Show the closest entries for a description.
    Query {
        #[arg(long, value_parser = parse_kind)]
        kind: ComponentKind,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
        /// Knowledge-base directory; the seed knowledge base when absent.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(required = true)]
        text: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Tsv,
    Json,
}

fn parse_kind(s: &str) -> Result<ComponentKind, String> {
    ComponentKind::parse(s).ok_or_else(|| format!("unknown kind {s:?}; expected behavior, geometry or spawn"))
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Other(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn load_kb(dir: Option<&Path>) -> Result<KnowledgeBase, Failure> {
    match dir {
        Some(d) => KnowledgeBase::load_dir(d, Arc::new(HashingEncoder::default()))
            .map_err(|e| Failure::Config(format!("kb {}: {e}", d.display()))),
        None => Ok(seed_kb()),
    }
}

fn read_records(path: &Path) -> Result<Vec<SceneRecord>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| other(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| other(format!("{}: {e}", path.display()))))
        .collect()
}

fn print_report(report: &ScenarioReport, format: Format) {
    match format {
        Format::Table => print!("{}", report.to_table()),
        Format::Tsv => print!("{}", report.to_tsv()),
        Format::Json => println!("{}", report.to_json()),
    }
}

/// Generation; reports failed cells on stderr and returns whether all succeeded.
fn generate(config: &RunConfig) -> Result<bool, Failure> {
    let summary = run_generation(config)?;
    for c in &summary.cells {
        if let Some(e) = &c.error {
            eprintln!("cell {} failed: {e}", c.cell.name());
        }
    }
    println!(
        "{} cells, {} selected scenes, {} failed cells -> {}",
        summary.cells.len(),
        summary.selected.len(),
        summary.failed_cells(),
        summary.out.display()
    );
    Ok(summary.failed_cells() == 0)
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    match &cli.command {
        Command::Kb { action } => match action {
            KbAction::Build { dir } => {
                let dir = match dir {
                    Some(d) => d.clone(),
                    None => load_config(cli)?.out.join("kb"),
                };
                let kb = seed_kb();
                kb.save_dir(&dir).map_err(other)?;
                println!("{} entries -> {}", kb.len(), dir.display());
                Ok(true)
            }
            KbAction::Query { kind, k, dir, text } => {
                let kb = load_kb(dir.as_deref())?.freeze().map_err(other)?;
                let hits = kb.query(*kind, &text.join(" "), *k).map_err(other)?;
                for (rank, hit) in hits.iter().enumerate() {
                    let entry = kb.entry(hit.entry).expect("hit refers to an entry");
                    println!("{}\t{:.4}\t{}\t{}", rank + 1, hit.score, hit.entry, entry.description);
                }
                Ok(true)
            }
        },
        Command::Gen => generate(&load_config(cli)?),
        Command::Run => {
            let config = load_config(cli)?;
            let ok = generate(&config)?;
            print!("{}", evaluate_policies(&config)?.to_table());
            Ok(ok)
        }
        Command::Eval => {
            print!("{}", evaluate_policies(&load_config(cli)?)?.to_table());
            Ok(true)
        }
        Command::Finetune => {
            let r = run_finetune_eval(&load_config(cli)?)?;
            println!(
                "train {} scenes: CR {:.4} -> {:.4}, OS {:.4} -> {:.4}",
                r.train_scenes, r.train_before.cr, r.train_after.cr, r.train_before.os, r.train_after.os
            );
            println!(
                "test {} scenes: CR {:.4} -> {:.4}, OS {:.4} -> {:.4}",
                r.test_scenes, r.test_before.cr, r.test_after.cr, r.test_before.os, r.test_after.os
            );
            print!("{}", r.table.to_table());
            Ok(true)
        }
        Command::Report { include_padded, format } => {
            let reports = load_config(cli)?.out.join("reports");
            let mut records = read_records(&reports.join("scenes.jsonl"))?;
            let eval = reports.join("eval_scenes.jsonl");
            if eval.exists() {
                records.extend(read_records(&eval)?.into_iter().filter(|r| r.policy != "surrogate"));
            }
            print_report(&aggregate(&records, *include_padded), *format);
            Ok(true)
        }
        Command::Replay { trace } => {
            let text = std::fs::read_to_string(trace).map_err(|e| other(format!("{}: {e}", trace.display())))?;
            let r = replay(&text).map_err(other)?;
            match r.first_difference {
                None => println!("identical: {} frames", r.frames),
                Some(line) => println!("differs at line {line} ({} frames)", r.frames),
            }
            Ok(r.identical)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
