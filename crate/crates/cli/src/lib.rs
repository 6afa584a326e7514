//! Command-line front end: argument parsing, config layering, the four
//! pipeline commands and their output files.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};
use log::info;
use serde::Serialize;
use thiserror::Error;

use fedrec_core::config::KEYS;
use fedrec_core::data::{leave_one_out_split, load_interactions, SplitDataset};
use fedrec_core::eval::{EvalPhase, EvalResult};
use fedrec_core::server::training::{initial_table, run_pretrain, Simulator, TrainingOutcome, TrainingState};
use fedrec_core::{privacy_budget, EmbeddingTable, ExperimentConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const RESULTS_FILE: &str = "results.json";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const PRETRAIN_FILE: &str = "pretrain.json";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Usage(#[from] clap::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Output(_) => 1,
            CliError::Usage(e) => e.exit_code(),
        }
    }
}

impl From<fedrec_core::Error> for CliError {
    fn from(e: fedrec_core::Error) -> Self {
        use fedrec_core::Error as E;
        match e {
            E::Config { .. } => CliError::Config(e.to_string()),
            E::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

pub fn command() -> Command {
    let mut cmd = Command::new("fedrec")
        .about("Simulate personalized federated recommendation with graph embeddings")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("config file of `key = value` lines"),
        )
        .arg(
            Arg::new("seed")
                .long("seed")
                .value_name("N")
                .global(true)
                .value_parser(clap::value_parser!(u64))
                .help("run seed (same as --train.seed)"),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .global(true)
                .value_parser(clap::value_parser!(usize))
                .help("worker threads for client updates and evaluation"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .global(true)
                .default_value("out")
                .help("output directory"),
        )
        .arg(
            Arg::new("verbose")
                .short('v')
                .long("verbose")
                .global(true)
                .action(ArgAction::Count)
                .help("more logging (repeat for debug)"),
        );
    for (key, help) in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .global(true)
                .overrides_with(*key)
                .help(*help)
                .hide_short_help(true),
        );
    }
    let checkpoint = || Arg::new("checkpoint").long("checkpoint").value_name("FILE");
    cmd.subcommand(Command::new("pretrain").about("contrastive pre-training only; writes a checkpoint"))
        .subcommand(
            Command::new("train")
                .about("federated training, optionally warm-started from a checkpoint")
                .arg(checkpoint().help("warm-start checkpoint")),
        )
        .subcommand(
            Command::new("evaluate")
                .about("rank held-out items with a checkpoint's global table")
                .arg(checkpoint().required(true).help("checkpoint to evaluate")),
        )
        .subcommand(Command::new("simulate").about("pre-train, train and evaluate"))
        .subcommand(
            Command::new("gen-synthetic")
                .about("write the bundled two-community dataset")
                .arg(Arg::new("path").required(true).value_name("FILE")),
        )
}

/// Defaults, then `--config`, then individual flags.
pub fn resolve_config(m: &ArgMatches) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("config file {path}: {e}")))?;
        cfg.apply_text(&text)?;
    }
    for (key, _) in KEYS {
        if m.value_source(key) == Some(ValueSource::CommandLine) {
            let v = m.get_one::<String>(key).expect("flag has a value");
            cfg.set(key, v)?;
        }
    }
    if let Some(&seed) = m.get_one::<u64>("seed") {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_split(cfg: &ExperimentConfig) -> Result<(SplitDataset, fedrec_core::InteractionDataset), CliError> {
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required key `data.path`".into()))?;
    let ds = load_interactions(path)?;
    let split = leave_one_out_split(&ds)?;
    info!(
        "{}: {} users, {} items, {} interactions, density {:.6}",
        path.display(),
        ds.n_users,
        ds.n_items,
        ds.interactions.len(),
        ds.density()
    );
    Ok((split, ds))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| output_err(path, e))
}

#[derive(Serialize)]
struct ResultRow {
    phase: EvalPhase,
    k: usize,
    recall: f64,
    ndcg: f64,
    n_users: usize,
    seed: u64,
    round: Option<usize>,
    /// Per-upload bound of the run's noise, absent without LDP.
    #[serde(skip_serializing_if = "Option::is_none")]
    privacy_budget: Option<f64>,
}

fn result_rows(results: &[EvalResult], seed: u64, round: Option<usize>, budget: Option<f64>) -> Vec<ResultRow> {
    results
        .iter()
        .flat_map(|r| {
            r.cutoffs.iter().enumerate().map(move |(j, &k)| ResultRow {
                phase: r.phase,
                k,
                recall: r.recall[j],
                ndcg: r.ndcg[j],
                n_users: r.n_users,
                seed,
                round,
                privacy_budget: budget,
            })
        })
        .collect()
}

fn write_results(
    out: &Path,
    results: &[EvalResult],
    seed: u64,
    round: Option<usize>,
    budget: Option<f64>,
) -> Result<(), CliError> {
    let rows = result_rows(results, seed, round, budget);
    let text = serde_json::to_string_pretty(&rows).expect("results serialize");
    write_file(&out.join(RESULTS_FILE), &(text + "\n"))
}

#[derive(Serialize)]
struct PretrainSummary<'a> {
    epochs: usize,
    seed: u64,
    /// Loss before each epoch's step, then after the last one.
    losses: &'a [f64],
}

fn pretrain_checkpoint(cfg: &ExperimentConfig, split: &SplitDataset, out: &Path) -> Result<EmbeddingTable, CliError> {
    let init = initial_table(cfg, split);
    let (table, losses) = if cfg.pretrain_epochs > 0 {
        let o = run_pretrain(cfg, split, &init)?;
        (o.table, o.losses)
    } else {
        (init, Vec::new())
    };
    let epochs = cfg.pretrain_epochs.to_string();
    let seed = cfg.seed.to_string();
    let path = out.join(CHECKPOINT_FILE);
    table
        .write_checkpoint(&path, &[("pretrained", "true"), ("epochs", &epochs), ("seed", &seed)])
        .map_err(|e| output_err(&path, e))?;
    let summary = PretrainSummary {
        epochs: cfg.pretrain_epochs,
        seed: cfg.seed,
        losses: &losses,
    };
    write_file(
        &out.join(PRETRAIN_FILE),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    Ok(table)
}

fn write_training(
    cfg: &ExperimentConfig,
    sim: &Simulator<'_>,
    ds: &fedrec_core::InteractionDataset,
    outcome: &TrainingOutcome,
    out: &Path,
) -> Result<(), CliError> {
    let rounds_path = out.join(ROUNDS_FILE);
    let mut rounds = fs::File::create(&rounds_path).map_err(|e| output_err(&rounds_path, e))?;
    for r in &outcome.reports {
        let line = serde_json::to_string(r).expect("report serializes");
        writeln!(rounds, "{line}").map_err(|e| output_err(&rounds_path, e))?;
    }

    let mut csv = String::from("user_id,cluster_id\n");
    for (u, c) in outcome.state.clustering.assignment.iter().enumerate() {
        csv.push_str(&format!("{},{c}\n", ds.user_ids[u]));
    }
    write_file(&out.join(CLUSTERS_FILE), &csv)?;

    let rounds_run = outcome.reports.len().to_string();
    let seed = cfg.seed.to_string();
    let path = out.join(CHECKPOINT_FILE);
    outcome
        .state
        .table
        .write_checkpoint(&path, &[("trained", "true"), ("rounds", &rounds_run), ("seed", &seed)])
        .map_err(|e| output_err(&path, e))?;

    let results = personalized_results(sim, &outcome.state);
    let budget = cfg
        .ldp()
        .ok()
        .filter(|l| l.enabled)
        .and_then(|l| privacy_budget(&l).ok());
    write_results(out, &results, cfg.seed, outcome.best_round, budget)
}

fn personalized_results(sim: &Simulator<'_>, state: &TrainingState) -> Vec<EvalResult> {
    [EvalPhase::Validation, EvalPhase::Test]
        .into_iter()
        .map(|p| sim.evaluate(state, p))
        .collect()
}

fn train(
    cfg: &ExperimentConfig,
    split: &SplitDataset,
    ds: &fedrec_core::InteractionDataset,
    warm: Option<&EmbeddingTable>,
    out: &Path,
) -> Result<(), CliError> {
    let sim = Simulator::new(cfg, split)?;
    let outcome = fedrec_core::run_training(cfg, split, warm)?;
    write_training(cfg, &sim, ds, &outcome, out)
}

fn read_checkpoint(path: &str) -> Result<EmbeddingTable, CliError> {
    Ok(EmbeddingTable::read_checkpoint(Path::new(path))?.table)
}

fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    split: &SplitDataset,
    table: EmbeddingTable,
    out: &Path,
) -> Result<(), CliError> {
    let global_only = ExperimentConfig {
        no_personalization: true,
        ..cfg.clone()
    };
    let sim = Simulator::new(&global_only, split)?;
    let state = sim.init_state(table)?;
    let results = personalized_results(&sim, &state);
    for r in &results {
        for (j, k) in r.cutoffs.iter().enumerate() {
            info!(
                "{} recall@{k} {:.4} ndcg@{k} {:.4}",
                r.phase.as_str(),
                r.recall[j],
                r.ndcg[j]
            );
        }
    }
    write_results(out, &results, cfg.seed, None, None)
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = command().try_get_matches_from(args)?;
    init_logging(m.get_count("verbose"));
    let (name, sub) = m.subcommand().expect("subcommand required");

    if name == "gen-synthetic" {
        let path = PathBuf::from(sub.get_one::<String>("path").expect("required"));
        return write_file(&path, &fedrec_core::synthetic::bundled_tsv());
    }

    let cfg = resolve_config(sub)?;
    let out = PathBuf::from(sub.get_one::<String>("out").expect("has default"));
    let threads = sub.get_one::<usize>("threads").copied().unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;

    let (split, ds) = load_split(&cfg)?;
    fs::create_dir_all(&out).map_err(|e| output_err(&out, e))?;
    write_file(&out.join(CONFIG_FILE), &cfg.dump())?;

    pool.install(|| match name {
        "pretrain" => pretrain_checkpoint(&cfg, &split, &out).map(|_| ()),
        "train" => {
            let warm = sub
                .get_one::<String>("checkpoint")
                .map(|p| read_checkpoint(p))
                .transpose()?;
            train(&cfg, &split, &ds, warm.as_ref(), &out)
        }
        "evaluate" => {
            let table = read_checkpoint(sub.get_one::<String>("checkpoint").expect("required"))?;
            evaluate_checkpoint(&cfg, &split, table, &out)
        }
        "simulate" => {
            let warm = if cfg.pretrain_enabled() {
                Some(pretrain_checkpoint(&cfg, &split, &out)?)
            } else {
                None
            };
            train(&cfg, &split, &ds, warm.as_ref(), &out)
        }
        other => unreachable!("unknown subcommand {other}"),
    })
}
