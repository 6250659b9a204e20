//! Pipeline configuration: a flat TOML document whose keys mirror
//! [`PipelineConfig`]. Command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotator::Annotator;
use crate::corpus_io::CorpusFormat;
use crate::error::{Error, Result};
use crate::filters::{FilterConfig, FilterSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub max_word_repetition_ratio: f64,
    pub max_digit_punctuation_ratio: f64,
    pub min_token_count: usize,
    pub word_count_above: usize,
    pub word_count_below: usize,
    /// One stop word per line; the built-in list is used when unset.
    pub stop_words_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    pub suffix_rules_path: Option<PathBuf>,
    pub ngram_order: usize,
    pub min_count: u64,
    /// 0 means one thread per available core.
    pub threads: usize,
    pub format: CorpusFormat,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self {
            max_word_repetition_ratio: f.max_word_repetition_ratio,
            max_digit_punctuation_ratio: f.max_digit_punctuation_ratio,
            min_token_count: f.min_token_count,
            word_count_above: f.word_count_above,
            word_count_below: f.word_count_below,
            stop_words_path: None,
            lexicon_path: None,
            suffix_rules_path: None,
            ngram_order: 3,
            min_count: 2,
            threads: 0,
            format: CorpusFormat::Jsonl,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        let mut cfg = FilterConfig {
            max_word_repetition_ratio: self.max_word_repetition_ratio,
            max_digit_punctuation_ratio: self.max_digit_punctuation_ratio,
            min_token_count: self.min_token_count,
            word_count_above: self.word_count_above,
            word_count_below: self.word_count_below,
            ..FilterConfig::default()
        };
        if let Some(path) = &self.stop_words_path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.stop_words = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect();
        }
        Ok(cfg)
    }

    pub fn filters(&self) -> Result<FilterSet> {
        Ok(FilterSet::new(self.filter_config()?))
    }

    pub fn annotator(&self) -> Result<Annotator> {
        Annotator::from_files(self.lexicon_path.as_deref(), self.suffix_rules_path.as_deref())
    }

    pub fn effective_threads(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}
