//! End-to-end commands over files. The CLI is a thin wrapper around these.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::info;

use crate::calibration::{calibrate, FilterWeights};
use crate::config::PipelineConfig;
use crate::corpus_io::{
    read_corpus, read_scores, split_annotated, split_lines, CorpusFormat, CorpusWriter, Line,
    ScoreWriter,
};
use crate::error::{Error, Result};
use crate::filters::IndicatorVector;
use crate::perplexity::{load_external_scores, NGramModel, PerplexityBackend};
use crate::pruning::{prune, split, Manifest, PruneSpec};
use crate::scoring::Scorer;
use crate::stats::{summarize, Summary};

fn collect_lines(input: &Path, format: CorpusFormat, cfg: &PipelineConfig) -> Result<Vec<Line>> {
    let annotator = cfg.annotator()?;
    let mut lines = Vec::new();
    for rec in read_corpus(input, format)? {
        lines.extend(split_lines(&rec?.doc, &annotator));
    }
    Ok(lines)
}

pub fn train_lm(input: &Path, cfg: &PipelineConfig, model_out: &Path) -> Result<NGramModel> {
    let lines = collect_lines(input, cfg.format, cfg)?;
    info!("training order-{} model on {} lines", cfg.ngram_order, lines.len());
    let model = NGramModel::train(lines, cfg.ngram_order, cfg.min_count)?;
    model.save(model_out)?;
    Ok(model)
}

pub enum Backend {
    Model(PathBuf),
    External(PathBuf),
}

pub fn calibrate_file(
    input: &Path,
    cfg: &PipelineConfig,
    backend: &Backend,
    weights_out: &Path,
) -> Result<FilterWeights> {
    let annotator = cfg.annotator()?;
    let filters = cfg.filters()?;
    let mut lines = Vec::new();
    let mut indicators: Vec<IndicatorVector> = Vec::new();
    for rec in read_corpus(input, cfg.format)? {
        for (line, ann) in split_annotated(&rec?.doc, &annotator) {
            indicators.push(filters.evaluate(&line.text, &ann));
            lines.push(line);
        }
    }
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let profile = format!("{};lexicon={}", filters.config().profile(), annotator.version());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.effective_threads())
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let weights = match backend {
        Backend::Model(path) => {
            let model = NGramModel::load(path)?;
            pool.install(|| run_calibration(&lines, &indicators, &model, &profile))?
        }
        Backend::External(path) => {
            let ext = load_external_scores(path)?;
            ext.check_coverage(&lines)?;
            pool.install(|| run_calibration(&lines, &indicators, &ext, &profile))?
        }
    };
    weights.save(weights_out)?;
    Ok(weights)
}

fn run_calibration<B: PerplexityBackend>(
    lines: &[Line],
    indicators: &[IndicatorVector],
    backend: &B,
    profile: &str,
) -> Result<FilterWeights> {
    calibrate(lines, indicators, backend, profile)
}

#[derive(Debug, Clone)]
pub struct ScoreSummary {
    pub documents: usize,
    pub lines: usize,
    pub skipped: usize,
    pub elapsed: Duration,
}

impl ScoreSummary {
    pub fn docs_per_sec(&self) -> f64 {
        self.documents as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }

    pub fn lines_per_sec(&self) -> f64 {
        self.lines as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

pub fn score_file(
    input: &Path,
    cfg: &PipelineConfig,
    weights: &Path,
    scores_out: &Path,
) -> Result<ScoreSummary> {
    let weights = FilterWeights::load(weights)?.vector()?;
    let scorer = Scorer::new(cfg.annotator()?, cfg.filters()?, weights);
    let start = Instant::now();
    let mut writer = ScoreWriter::create(scores_out)?;
    let mut stream = scorer.score_corpus(read_corpus(input, cfg.format)?, cfg.effective_threads())?;
    let mut documents = 0;
    for rec in stream.by_ref() {
        writer.write(&rec?)?;
        documents += 1;
    }
    writer.finish()?;
    Ok(ScoreSummary {
        documents,
        lines: stream.lines_scored(),
        skipped: stream.skipped(),
        elapsed: start.elapsed(),
    })
}

pub struct PruneOptions<'a> {
    pub scores: &'a Path,
    pub keep_top_percent: f64,
    pub output: &'a Path,
    pub manifest: &'a Path,
    /// When set, a validation set is sampled from the full corpus first and
    /// excluded from pruning: (fraction, seed, validation output).
    pub validation: Option<(f64, u64, &'a Path)>,
}

fn write_ids(path: &Path, ids: &[&str]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for id in ids {
        writeln!(out, "{id}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn prune_file(input: &Path, cfg: &PipelineConfig, opts: &PruneOptions<'_>) -> Result<Manifest> {
    let spec = PruneSpec::new(opts.keep_top_percent)?;
    let mut ids = Vec::new();
    for rec in read_corpus(input, cfg.format)? {
        ids.push(rec?.doc.id);
    }

    let held_out = match opts.validation {
        Some((fraction, seed, _)) => split(ids.len(), fraction, seed)?.is_validation,
        None => vec![false; ids.len()],
    };
    let train_positions: Vec<usize> = (0..ids.len()).filter(|&i| !held_out[i]).collect();
    let train_ids: Vec<String> = train_positions.iter().map(|&i| ids[i].clone()).collect();

    let held_out_ids: std::collections::HashSet<&str> = (0..ids.len())
        .filter(|&i| held_out[i])
        .map(|i| ids[i].as_str())
        .collect();
    let scores: Vec<_> = read_scores(opts.scores)?
        .into_iter()
        .filter(|r| !held_out_ids.contains(r.doc_id.as_str()))
        .collect();

    let selection = prune(&scores, &train_ids, &spec)?;
    let mut keep = vec![false; ids.len()];
    for i in selection.retained_indices() {
        keep[train_positions[i]] = true;
    }

    let mut pruned = CorpusWriter::create(opts.output, cfg.format)?;
    let mut validation = match opts.validation {
        Some((_, _, path)) => Some(CorpusWriter::create(path, cfg.format)?),
        None => None,
    };
    for (i, rec) in read_corpus(input, cfg.format)?.enumerate() {
        let rec = rec?;
        if held_out[i] {
            if let Some(w) = validation.as_mut() {
                w.write(&rec)?;
            }
        } else if keep[i] {
            pruned.write(&rec)?;
        }
    }
    pruned.finish()?;
    if let Some(w) = validation {
        w.finish()?;
    }

    let retained: Vec<&str> = train_positions.iter().filter(|&&i| keep[i]).map(|&i| ids[i].as_str()).collect();
    let dropped: Vec<&str> = train_positions.iter().filter(|&&i| !keep[i]).map(|&i| ids[i].as_str()).collect();
    let retained_path = sibling(opts.manifest, "retained.txt");
    let dropped_path = sibling(opts.manifest, "dropped.txt");
    write_ids(&retained_path, &retained)?;
    write_ids(&dropped_path, &dropped)?;

    let manifest = Manifest {
        retained_count: retained.len(),
        dropped_count: dropped.len(),
        threshold_score: selection.threshold_score,
        keep_top_percent: spec.keep_top_percent(),
        retained_ids_path: retained_path.display().to_string(),
        dropped_ids_path: dropped_path.display().to_string(),
    };
    manifest.save(opts.manifest)?;
    Ok(manifest)
}

pub fn split_file(
    input: &Path,
    cfg: &PipelineConfig,
    validation_fraction: f64,
    train_out: &Path,
    validation_out: &Path,
) -> Result<(usize, usize)> {
    let n = read_corpus(input, cfg.format)?.try_fold(0usize, |n, rec| rec.map(|_| n + 1))?;
    let s = split(n, validation_fraction, cfg.seed)?;
    let mut train = CorpusWriter::create(train_out, cfg.format)?;
    let mut val = CorpusWriter::create(validation_out, cfg.format)?;
    for (i, rec) in read_corpus(input, cfg.format)?.enumerate() {
        let rec = rec?;
        if s.is_validation[i] {
            val.write(&rec)?;
        } else {
            train.write(&rec)?;
        }
    }
    Ok((train.finish()?, val.finish()?))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ScoreStats {
    pub documents: Summary,
    pub lines: Summary,
    pub flagged_documents: usize,
}

pub fn stats_file(scores: &Path) -> Result<ScoreStats> {
    let records = read_scores(scores)?;
    let doc_scores: Vec<f64> = records.iter().map(|r| r.doc_score).collect();
    let line_scores: Vec<f64> = records.iter().flat_map(|r| r.line_scores.iter().copied()).collect();
    Ok(ScoreStats {
        documents: summarize(&doc_scores),
        lines: summarize(&line_scores),
        flagged_documents: records.iter().filter(|r| r.flagged).count(),
    })
}
