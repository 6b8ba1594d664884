//! `heurgen` command-line driver.
//!
//! Exit status: 0 on success, 1 when a command fails, 2 on usage errors.

mod config;
mod report;

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use heurgen::eval::{generate_instances, InstanceSet, Split};
use heurgen::evolve::{resume_search, run_search, SearchOutcome, SearchServices};
use heurgen::heuristic::{Heuristic, HeuristicId, Origin};
use heurgen::journal::{journal_replay, masked_lines, read_journal, RunSummary};
use heurgen::llm::{CacheMode, ReplayCache, TemplateStore};
use heurgen::task::{SolverParams, TaskId};
use heurgen::worker::builtin::{builtin_source, runtime_tag_for};
use heurgen::worker::WorkerRegistration;

use config::{Loaded, Mode};

#[derive(Parser)]
#[command(name = "heurgen", version, about = "LLM-driven heuristic generation for combinatorial optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Start a search from a run file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        journal: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        task: Option<TaskId>,
        /// Also write the run summary as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue an interrupted search. The run file must match the journal.
    Resume {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        journal: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        task: Option<TaskId>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gain table on stdout and the best-so-far curve as CSV.
    Report {
        #[arg(long)]
        journal: PathBuf,
        /// Curve file; defaults to `<journal>.curve.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one heuristic on an instance directory.
    EvalHeuristic {
        #[arg(long)]
        task: TaskId,
        #[arg(long)]
        instances: PathBuf,
        /// Candidate source file.
        #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
        source: Option<PathBuf>,
        /// Name of a builtin heuristic.
        #[arg(long)]
        builtin: Option<String>,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Run file supplying solver parameters and workers.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Runtime tag for sources without a builtin directive.
        #[arg(long, default_value = "python")]
        runtime: String,
    },
    /// Write seeded random instances.
    GenInstances {
        #[arg(long)]
        task: TaskId,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Entropy and information gain of direction partitions (`k p_0 .. p_k` per line).
    AnalyzeIg {
        /// Partition file, or `-` for stdin.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy, correlation and band counts of the predictions in a journal.
    CalibratePpp {
        #[arg(long)]
        journal: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a journal against its exchange cache and compare byte for byte.
    ReplayCheck {
        #[arg(long)]
        journal: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        /// Run file supplying templates and workers.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_outcome(outcome: &SearchOutcome, out: Option<&Path>) -> Result<()> {
    let s = &outcome.summary;
    if outcome.already_finished {
        println!("journal {} already finished", outcome.journal.display());
    }
    println!("best heuristic {} ({})", s.best.id, s.best.runtime_tag);
    println!("{}", s.best.source.trim_end());
    println!();
    print!("{}", report::summary_table(s));
    if let Some(p) = out {
        std::fs::write(p, serde_json::to_string_pretty(s)?)?;
    }
    Ok(())
}

fn search_services<'a>(svc: &'a config::Services, label: &str) -> SearchServices<'a> {
    SearchServices {
        gateway: &svc.gateway,
        templates: &svc.templates,
        evaluator: &svc.evaluator,
        provider_label: label.to_string(),
    }
}

fn cmd_run(
    config: &Path,
    journal: &Path,
    mode: Option<Mode>,
    seed: Option<u64>,
    task: Option<TaskId>,
    out: Option<&Path>,
) -> Result<()> {
    if journal.exists() {
        bail!("journal {} exists; use `resume` or choose another path", journal.display());
    }
    let loaded = Loaded::read(config)?;
    let cfg = loaded.run_config(seed)?;
    let spec = loaded.task_spec(task)?;
    loaded.ensure_instances(&spec)?;
    let mode = loaded.mode(mode);
    let svc = config::services(loaded.provider(mode, spec.task_id)?, loaded.templates()?, &loaded.workers(), &spec)?;
    let outcome = run_search(&cfg, &spec, &search_services(&svc, mode.label()), journal)?;
    print_outcome(&outcome, out)
}

fn cmd_resume(
    config: &Path,
    journal: &Path,
    mode: Option<Mode>,
    seed: Option<u64>,
    task: Option<TaskId>,
    out: Option<&Path>,
) -> Result<()> {
    let loaded = Loaded::read(config)?;
    let cfg = loaded.run_config(seed)?;
    let spec = loaded.task_spec(task)?;
    let replay = journal_replay(journal)?;
    if cfg.digest() != replay.config.digest() {
        bail!("run configuration differs from the one in {}; refusing to resume", journal.display());
    }
    if spec != replay.task {
        bail!("task specification differs from the one in {}; refusing to resume", journal.display());
    }
    let mode = loaded.mode(mode);
    let svc = config::services(loaded.provider(mode, spec.task_id)?, loaded.templates()?, &loaded.workers(), &spec)?;
    let outcome = resume_search(&search_services(&svc, &replay.provider), journal)?;
    print_outcome(&outcome, out)
}

fn cmd_report(journal: &Path, out: Option<&Path>) -> Result<()> {
    let log = read_journal(journal)?;
    if log.truncated {
        eprintln!("warning: {} ends in a partial line; reporting the complete prefix", journal.display());
    }
    let summary: Option<&RunSummary> = log.events.iter().rev().find_map(|e| match &e.payload {
        heurgen::journal::EventPayload::RunFinished { summary } => Some(summary),
        _ => None,
    });
    match summary {
        Some(s) => print!("{}", report::summary_table(s)),
        None => {
            println!("run not finished");
            println!("{}", report::usage_line(&heurgen::llm::usage_totals(&log.events)));
        }
    }
    let curve = out.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = journal.as_os_str().to_owned();
        p.push(".curve.csv");
        PathBuf::from(p)
    });
    std::fs::write(&curve, report::curve_csv(&log.events)).with_context(|| format!("writing {}", curve.display()))?;
    println!("curve: {}", curve.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    task: TaskId,
    instances: &Path,
    source: Option<&Path>,
    builtin: Option<&str>,
    split: SplitArg,
    config: Option<&Path>,
    runtime: &str,
) -> Result<()> {
    let (params, workers) = match config {
        Some(c) => {
            let l = Loaded::read(c)?;
            (l.file.task.solver.clone(), l.workers())
        }
        None => (SolverParams::default(), WorkerRegistration::default()),
    };
    let src = match (source, builtin) {
        (Some(p), _) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        (None, Some(name)) => builtin_source(name, &[], task),
        (None, None) => bail!("pass --source or --builtin"),
    };
    let tag = runtime_tag_for(&src, runtime);
    let h = Heuristic::new(HeuristicId(0), src, tag, Origin::Seed, vec![], 0)?;
    let set = InstanceSet::load(task, instances)?;
    if set.is_empty() {
        bail!("no instances in {}", instances.display());
    }
    let evaluator = config::evaluator(&workers, task, &params)?;
    let split = match split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let e = evaluator.evaluate_heuristic(&h, &set, split, 0);
    println!("instances,{}", set.len());
    println!("clamped,{}", e.clamped);
    match (e.raw_objective, e.failure) {
        (Some(raw), _) => {
            println!("objective,{raw:.6}");
            Ok(())
        }
        (None, why) => bail!("evaluation failed: {}", why.unwrap_or_default()),
    }
}

fn cmd_replay_check(journal: &Path, cache: &Path, config: Option<&Path>) -> Result<bool> {
    if !cache.is_dir() {
        bail!("cache directory {} does not exist", cache.display());
    }
    let replay = journal_replay(journal)?;
    let (templates, workers) = match config {
        Some(c) => {
            let l = Loaded::read(c)?;
            (l.templates()?, l.workers())
        }
        None => (TemplateStore::default(), WorkerRegistration::default()),
    };
    let provider = Box::new(ReplayCache::new(cache, CacheMode::Strict)?);
    let svc = config::services(provider, templates, &workers, &replay.task)?;
    let dir = tempfile::tempdir()?;
    let fresh = dir.path().join("replay.jsonl");
    run_search(&replay.config, &replay.task, &search_services(&svc, &replay.provider), &fresh)?;
    let (a, b) = (masked_lines(journal)?, masked_lines(&fresh)?);
    if a == b {
        println!("identical: {} events", a.len());
        return Ok(true);
    }
    let at = a.iter().zip(&b).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
    println!("differs at event {at} ({} recorded, {} replayed)", a.len(), b.len());
    Ok(false)
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run { config, journal, mode, seed, task, out } => {
            cmd_run(&config, &journal, mode, seed, task, out.as_deref())?
        }
        Command::Resume { config, journal, mode, seed, task, out } => {
            cmd_resume(&config, &journal, mode, seed, task, out.as_deref())?
        }
        Command::Report { journal, out } => cmd_report(&journal, out.as_deref())?,
        Command::EvalHeuristic { task, instances, source, builtin, split, config, runtime } => cmd_eval(
            task,
            &instances,
            source.as_deref(),
            builtin.as_deref(),
            split,
            config.as_deref(),
            &runtime,
        )?,
        Command::GenInstances { task, count, size, seed, out } => {
            for p in generate_instances(task, count, size, seed, &out)? {
                println!("{}", p.display());
            }
        }
        Command::AnalyzeIg { input, out } => write_or_print(out.as_deref(), &report::ig_table(&read_input(&input)?)?)?,
        Command::CalibratePpp { journal, out } => {
            let log = read_journal(&journal)?;
            let c = report::calibrate(&log.events)?;
            write_or_print(out.as_deref(), &report::calibration_text(&c))?;
        }
        Command::ReplayCheck { journal, cache, config } => return cmd_replay_check(&journal, &cache, config.as_deref()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
