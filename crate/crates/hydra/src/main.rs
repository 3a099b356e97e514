//! Command-line surface. Each subcommand wraps one pipeline phase; `run`
//! executes a whole configuration end to end.
//!
//! Configuration precedence: built-in defaults, then `--set key=value`
//! flags, then the `--config` file (the file wins). Exit codes: 0 success,
//! 2 configuration error, 3 data error, 4 backend error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hydra::datamodel::{load_dataset, make_synthetic_task, split_users, Dataset, TaskId, TaskSpec};
use hydra::error::{HydraError, Result};
use hydra::model::FactorizedModel;
use hydra::pipeline::{
    self, adapter_fit_data, adapter_inference, adapter_training_data, build_client,
    conflict_accuracy, evaluate_predictions, fit_test_heads, group_examples, phase_seed,
    prepare_dataset, read_jsonl, rerank_scored_rows, reranker_fit_data, reranker_training_data,
    train_component_model, write_jsonl, AdapterScoring, ContextSelector, Mode, PredictionRow,
    RunConfig,
};

#[derive(Parser)]
#[command(
    name = "hydra",
    version,
    about = "Black-box LLM personalization pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigOpts {
    /// Flat key=value config file; overrides --set values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides using config-file keys, e.g. --set seed=9.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigOpts {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for pair in &self.set {
            let Some((key, value)) = pair.split_once('=') else {
                return Err(HydraError::Config(format!(
                    "--set expects key=value, got {pair:?}"
                )));
            };
            pipeline::apply_config_pair(&mut cfg, key.trim(), value.trim())?;
        }
        if let Some(path) = &self.config {
            pipeline::apply_config_file(&mut cfg, path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL dataset, optionally split users, and save it.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Generate the synthetic conflict dataset.
    Synth {
        #[arg(long, default_value_t = 12)]
        users: usize,
        #[arg(long, default_value_t = 20)]
        history: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query one user's history index and print the ranked items.
    Index {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Build and label reranker examples (train split or test history).
    GenRerankerData {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Train the reranker base and heads from labeled examples.
    TrainReranker {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train one shared head instead of per-user heads.
        #[arg(long)]
        shared: bool,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Fit test-user reranker heads with the base frozen.
    FitReranker {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        shared: bool,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Rerank each test query's retrieved history and dump the selection.
    Rerank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        shared: bool,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Build and label adapter examples (train split or test history).
    GenAdapterData {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        /// Fitted reranker model for context selection (BM25 otherwise).
        #[arg(long)]
        reranker: Option<PathBuf>,
        #[arg(long)]
        shared_reranker: bool,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Train the adapter base and heads from labeled examples.
    TrainAdapter {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        shared: bool,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Fit test-user adapter heads with the base frozen.
    FitAdapter {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        shared: bool,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Best-of-b inference over test queries.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        adapter: PathBuf,
        #[arg(long)]
        reranker: Option<PathBuf>,
        #[arg(long)]
        shared_reranker: bool,
        #[arg(long)]
        shared_adapter: bool,
        /// Score candidates with the exact-match oracle instead of the
        /// trained heads (diagnostic ceiling).
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Score a predictions file against the dataset's golds.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// End-to-end run of the configured mode (baselines or learned).
    Run {
        #[command(flatten)]
        config: ConfigOpts,
    },
}

fn check_split(ds: &Dataset, split: &str) -> Result<()> {
    match split {
        "train" | "test" => {
            let users = if split == "train" {
                &ds.train_users
            } else {
                &ds.test_users
            };
            if users.is_empty() {
                log::warn!("{split} split is empty");
            }
            Ok(())
        }
        other => Err(HydraError::Config(format!(
            "split must be train or test, got {other:?}"
        ))),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            data,
            task,
            out,
            n_train,
            n_test,
            seed,
        } => {
            let task = TaskSpec::for_task(TaskId::parse(&task)?);
            let mut ds = load_dataset(&data, task)?;
            if let (Some(train), Some(test)) = (n_train, n_test) {
                ds = split_users(&ds, train, test, seed)?;
            }
            ds.validate()?;
            ds.save_json(&out)?;
            println!(
                "ingested {} train users, {} test users -> {}",
                ds.train_users.len(),
                ds.test_users.len(),
                out.display()
            );
        }
        Command::Synth {
            users,
            history,
            seed,
            out,
        } => {
            let ds = make_synthetic_task(users, history, seed)?;
            ds.save_json(&out)?;
            println!(
                "synthetic dataset: {} train users, {} test users, {} conflict queries -> {}",
                ds.train_users.len(),
                ds.test_users.len(),
                ds.conflict_queries().len(),
                out.display()
            );
        }
        Command::Index {
            data,
            user,
            query,
            top,
        } => {
            let ds = Dataset::load_json(&data)?;
            let record = ds
                .all_users()
                .find(|u| u.user_id == user)
                .ok_or_else(|| HydraError::Data(format!("no user {user:?} in dataset")))?;
            let index = hydra::retriever::build_index(
                &record.history,
                hydra::retriever::Tokenizer::default(),
            );
            for (ord, score) in hydra::retriever::retrieve_top(&index, &query, top, &[]) {
                let item = &record.history[ord];
                println!("{score:.4}\t{}\t{}", item.item_id, item.full_text());
            }
        }
        Command::GenRerankerData {
            data,
            split,
            out,
            config,
        } => {
            let cfg = config.build()?;
            let ds = Dataset::load_json(&data)?;
            check_split(&ds, &split)?;
            let client = build_client(&cfg, &ds.task)?;
            let examples = match split.as_str() {
                "train" => reranker_training_data(&ds, &client, &cfg)?,
                _ => reranker_fit_data(&ds, &client, &cfg)?,
            };
            write_jsonl(&out, &examples)?;
            println!(
                "wrote {} labeled examples -> {}",
                examples.len(),
                out.display()
            );
        }
        Command::TrainReranker {
            examples,
            out,
            shared,
            config,
        } => {
            let cfg = config.build()?;
            let rows: Vec<hydra::reranker::RerankerExample> = read_jsonl(&examples)?;
            let model = train_component_model(
                rows.into_iter().map(|e| (e.user_id, e.x, e.y)),
                shared,
                cfg.encoder,
                &cfg.reranker_train,
                phase_seed(cfg.seed, "reranker.init"),
                phase_seed(cfg.seed, "reranker.train"),
            )?;
            model.save(&out)?;
            println!(
                "trained reranker with {} heads -> {}",
                model.n_heads(),
                out.display()
            );
        }
        Command::FitReranker {
            model,
            examples,
            out,
            shared,
            config,
        } => {
            let cfg = config.build()?;
            let mut m = FactorizedModel::load(&model)?;
            let rows: Vec<hydra::reranker::RerankerExample> = read_jsonl(&examples)?;
            let grouped = group_examples(rows.into_iter().map(|e| (e.user_id, e.x, e.y)));
            fit_test_heads(&mut m, &grouped, shared, &cfg.reranker_train)?;
            m.save(&out)?;
            println!(
                "fitted heads; model now has {} -> {}",
                m.n_heads(),
                out.display()
            );
        }
        Command::Rerank {
            model,
            data,
            out,
            shared,
            config,
        } => {
            let cfg = config.build()?;
            let ds = Dataset::load_json(&data)?;
            let m = FactorizedModel::load(&model)?;
            let rows = rerank_scored_rows(&ds, &m, shared, &cfg.rerank)?;
            write_jsonl(&out, &rows)?;
            println!("reranked {} test queries -> {}", rows.len(), out.display());
        }
        Command::GenAdapterData {
            data,
            split,
            out,
            reranker,
            shared_reranker,
            config,
        } => {
            let cfg = config.build()?;
            let ds = Dataset::load_json(&data)?;
            check_split(&ds, &split)?;
            let client = build_client(&cfg, &ds.task)?;
            let reranker_model = match &reranker {
                Some(path) => Some(FactorizedModel::load(path)?),
                None => None,
            };
            let selector = match &reranker_model {
                Some(m) => ContextSelector::reranked(m, shared_reranker, cfg.rerank),
                None => ContextSelector::bm25(cfg.rerank),
            };
            let examples = match split.as_str() {
                "train" => adapter_training_data(&ds, &client, &selector, &cfg)?,
                _ => adapter_fit_data(&ds, &client, &selector, &cfg)?,
            };
            write_jsonl(&out, &examples)?;
            println!(
                "wrote {} labeled examples -> {}",
                examples.len(),
                out.display()
            );
        }
        Command::TrainAdapter {
            examples,
            out,
            shared,
            config,
        } => {
            let cfg = config.build()?;
            let rows: Vec<hydra::adapter::AdapterExample> = read_jsonl(&examples)?;
            let model = train_component_model(
                rows.into_iter().map(|e| (e.user_id, e.x, e.y)),
                shared,
                cfg.encoder,
                &cfg.adapter_train,
                phase_seed(cfg.seed, "adapter.init"),
                phase_seed(cfg.seed, "adapter.train"),
            )?;
            model.save(&out)?;
            println!(
                "trained adapter with {} heads -> {}",
                model.n_heads(),
                out.display()
            );
        }
        Command::FitAdapter {
            model,
            examples,
            out,
            shared,
            config,
        } => {
            let cfg = config.build()?;
            let mut m = FactorizedModel::load(&model)?;
            let rows: Vec<hydra::adapter::AdapterExample> = read_jsonl(&examples)?;
            let grouped = group_examples(rows.into_iter().map(|e| (e.user_id, e.x, e.y)));
            fit_test_heads(&mut m, &grouped, shared, &cfg.adapter_train)?;
            m.save(&out)?;
            println!(
                "fitted heads; model now has {} -> {}",
                m.n_heads(),
                out.display()
            );
        }
        Command::Infer {
            data,
            adapter,
            reranker,
            shared_reranker,
            shared_adapter,
            oracle,
            out_dir,
            config,
        } => {
            let mut cfg = config.build()?;
            cfg.ablation.no_personal_adapter = shared_adapter;
            cfg.ablation.no_personal_reranker = shared_reranker;
            if oracle {
                cfg.adapter_scoring = AdapterScoring::OracleUpperBound;
            }
            let ds = Dataset::load_json(&data)?;
            let client = build_client(&cfg, &ds.task)?;
            let adapter_model = FactorizedModel::load(&adapter)?;
            let reranker_model = match &reranker {
                Some(path) => Some(FactorizedModel::load(path)?),
                None => None,
            };
            let selector = match &reranker_model {
                Some(m) => ContextSelector::reranked(m, shared_reranker, cfg.rerank),
                None => ContextSelector::bm25(cfg.rerank),
            };
            std::fs::create_dir_all(&out_dir)?;
            let (gen_rows, predictions) =
                adapter_inference(&ds, &client, &selector, &adapter_model, &cfg)?;
            write_jsonl(&out_dir.join("generations.jsonl"), &gen_rows)?;
            write_jsonl(&out_dir.join("predictions.jsonl"), &predictions)?;
            println!(
                "inferred {} test queries -> {}",
                predictions.len(),
                out_dir.display()
            );
        }
        Command::Evaluate {
            data,
            predictions,
            out_dir,
        } => {
            let ds = Dataset::load_json(&data)?;
            let rows: Vec<PredictionRow> = read_jsonl(&predictions)?;
            let report = evaluate_predictions(&ds.task, &rows)?;
            print!("{}", report.to_text());
            if let Some(conflict) = conflict_accuracy(&ds, &rows) {
                println!("conflict_accuracy: {conflict:.6}");
            }
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.txt"), report.to_text())?;
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| HydraError::Data(e.to_string()))?;
                std::fs::write(dir.join("report.json"), json)?;
            }
        }
        Command::Run { config } => {
            let cfg = config.build()?;
            let ds = prepare_dataset(&cfg)?;
            let report = hydra::pipeline::run_on_dataset(&cfg, &ds)?;
            print!("{}", report.to_text());
            if matches!(cfg.mode, Mode::HydraFull | Mode::HydraAdapterOnly) {
                let rows: Vec<PredictionRow> = read_jsonl(&cfg.out_dir.join("predictions.jsonl"))?;
                if let Some(conflict) = conflict_accuracy(&ds, &rows) {
                    println!("conflict_accuracy: {conflict:.6}");
                }
            }
            println!("artifacts in {}", cfg.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
