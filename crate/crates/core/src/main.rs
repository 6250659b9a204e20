use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use qscore::config::PipelineConfig;
use qscore::corpus_io::CorpusFormat;
use qscore::pipeline::{self, Backend, PruneOptions};
use qscore::Error;

#[derive(Parser)]
#[command(name = "qscore", version, about = "Score text corpora by heuristic quality and prune them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand that reads a corpus.
#[derive(Args, Clone)]
struct Common {
    /// Flat TOML config; flags given on the command line take precedence
    #[arg(long)]
    config: Option<PathBuf>,

    /// Corpus format (jsonl or plain)
    #[arg(long)]
    format: Option<CorpusFormat>,

    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the n-gram language model used for calibration
    TrainLm {
        #[arg(long)]
        input: PathBuf,
        /// Where to write the model
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        min_count: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Derive filter weights from perplexity reductions
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        /// Trained n-gram model
        #[arg(long, required_unless_present = "external_scores", conflicts_with = "external_scores")]
        model: Option<PathBuf>,
        /// TSV of doc_id, line_index, token_count, total_log_prob
        #[arg(long)]
        external_scores: Option<PathBuf>,
        /// Where to write the weights JSON
        #[arg(long)]
        weights: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score every line and document of a corpus
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Scores JSONL output
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Keep the top-scoring fraction of documents
    Prune {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        keep_top_percent: f64,
        /// Pruned corpus output (same format as the input)
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Sample this fraction as validation before pruning
        #[arg(long, requires = "validation_output")]
        validation_fraction: Option<f64>,
        #[arg(long, requires = "validation_fraction")]
        validation_output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Split a corpus into train and validation sets
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        validation_fraction: f64,
        #[arg(long)]
        train_output: PathBuf,
        #[arg(long)]
        validation_output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score histogram and quantiles as JSON on stdout
    Stats {
        #[arg(long)]
        scores: PathBuf,
    },
}

fn resolve(common: &Common) -> Result<PipelineConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(f) = common.format {
        cfg.format = f;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn require_file(path: &Path) -> Result<(), Error> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::TrainLm { input, model, order, min_count, common } => {
            let mut cfg = resolve(&common)?;
            if let Some(o) = order {
                cfg.ngram_order = o;
            }
            if let Some(m) = min_count {
                cfg.min_count = m;
            }
            let lm = pipeline::train_lm(&input, &cfg, &model)?;
            eprintln!("wrote {} (order {}, {} vocabulary entries)", model.display(), lm.order(), lm.vocab().len());
        }
        Command::Calibrate { input, model, external_scores, weights, common } => {
            let cfg = resolve(&common)?;
            let backend = match (model, external_scores) {
                (Some(m), _) => Backend::Model(m),
                (None, Some(e)) => Backend::External(e),
                (None, None) => unreachable!("clap requires one backend"),
            };
            let w = pipeline::calibrate_file(&input, &cfg, &backend, &weights)?;
            for (i, ppl) in w.ppl_per_filter.iter().enumerate() {
                if ppl.is_none() {
                    warn!("filter {i} selected no lines");
                }
            }
            print!("{}", w.table());
        }
        Command::Score { input, weights, output, common } => {
            let cfg = resolve(&common)?;
            require_file(&weights)?;
            let s = pipeline::score_file(&input, &cfg, &weights, &output)?;
            if s.skipped > 0 {
                warn!("skipped {} malformed documents", s.skipped);
            }
            eprintln!(
                "scored {} documents / {} lines in {:.2}s ({:.1} docs/sec, {:.1} lines/sec, {} threads)",
                s.documents,
                s.lines,
                s.elapsed.as_secs_f64(),
                s.docs_per_sec(),
                s.lines_per_sec(),
                cfg.effective_threads(),
            );
        }
        Command::Prune {
            input,
            scores,
            keep_top_percent,
            output,
            manifest,
            validation_fraction,
            validation_output,
            common,
        } => {
            let cfg = resolve(&common)?;
            let opts = PruneOptions {
                scores: &scores,
                keep_top_percent,
                output: &output,
                manifest: &manifest,
                validation: validation_fraction
                    .zip(validation_output.as_deref())
                    .map(|(f, p)| (f, cfg.seed, p)),
            };
            let m = pipeline::prune_file(&input, &cfg, &opts)?;
            eprintln!(
                "retained {} / dropped {} documents (threshold score {:.6})",
                m.retained_count, m.dropped_count, m.threshold_score
            );
        }
        Command::Split { input, validation_fraction, train_output, validation_output, common } => {
            let cfg = resolve(&common)?;
            let (train, val) =
                pipeline::split_file(&input, &cfg, validation_fraction, &train_output, &validation_output)?;
            eprintln!("train {train} documents, validation {val} documents");
        }
        Command::Stats { scores } => {
            let stats = pipeline::stats_file(&scores)?;
            println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_degenerate() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
