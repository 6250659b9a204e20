//! Heuristic quality scoring and percentile pruning for text corpora.
//!
//! Documents are split into lines, each line is annotated and checked against
//! fourteen well-formedness filters, and the filter bits are combined with
//! weights derived from perplexity reductions into a line score in [0, 1].
//! Document scores are token-weighted means of their line scores; pruning
//! keeps the top percentile of documents.

pub mod annotator;
pub mod calibration;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod filters;
pub mod perplexity;
pub mod pipeline;
pub mod pruning;
pub mod scoring;
pub mod stats;

pub use annotator::{Annotation, Annotator, ObjectSpan, Tag, Token, TokenKind};
pub use calibration::{calibrate, FilterWeights};
pub use config::PipelineConfig;
pub use corpus_io::{read_corpus, split_lines, CorpusFormat, CorpusRecord, Line, RawDocument};
pub use error::{Error, Result};
pub use filters::{FilterConfig, FilterId, FilterSet, IndicatorVector, FILTER_COUNT};
pub use perplexity::{
    load_external_scores, perplexity, ExternalScores, NGramModel, PerplexityBackend,
    PerplexityReport,
};
pub use pruning::{prune, split, Manifest, PruneSpec};
pub use scoring::{score_document, score_line, ScoreRecord, Scorer, WeightVector};
