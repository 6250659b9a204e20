//! Line and document quality scores, and the parallel corpus scorer.

use std::collections::VecDeque;

use log::warn;
use rayon::prelude::*;

use crate::annotator::Annotator;
use crate::corpus_io::{split_annotated, CorpusRecord, RawDocument};
use crate::error::{Error, Result};
use crate::filters::{FilterSet, IndicatorVector, FILTER_COUNT};

/// Non-negative per-filter weights with a positive sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightVector([f64; FILTER_COUNT]);

impl WeightVector {
    pub fn new(weights: [f64; FILTER_COUNT]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be finite and non-negative".into(),
            ));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::ZeroWeights);
        }
        Ok(WeightVector(weights))
    }

    pub fn as_array(&self) -> &[f64; FILTER_COUNT] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.map(|w| w * factor))
    }

    fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Weighted fraction of passed filters, summed in ascending filter order.
pub fn score_line(indicators: IndicatorVector, weights: &WeightVector) -> f64 {
    let bits = indicators.bits();
    let mut passed = 0.0;
    for (w, bit) in weights.0.iter().zip(bits) {
        if bit {
            passed += w;
        }
    }
    passed / weights.total()
}

/// Token-count weighted mean of line scores. Returns `None` when there is no
/// token mass to average over.
pub fn score_document(lines: &[(usize, f64)]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(tc, s) in lines {
        num += tc as f64 * s;
        den += tc as f64;
    }
    (den > 0.0).then(|| num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub doc_id: String,
    pub doc_score: f64,
    pub line_scores: Vec<f64>,
    pub token_counts: Vec<usize>,
    /// Set when the document had no tokens; its score is then 0.
    pub flagged: bool,
}

/// Shared, immutable scoring state.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub annotator: Annotator,
    pub filters: FilterSet,
    pub weights: WeightVector,
}

impl Scorer {
    pub fn new(annotator: Annotator, filters: FilterSet, weights: WeightVector) -> Self {
        Self {
            annotator,
            filters,
            weights,
        }
    }

    pub fn indicators(&self, text: &str) -> IndicatorVector {
        self.filters.evaluate(text, &self.annotator.annotate(text))
    }

    /// Scores a single line of text without splitting it.
    pub fn score_text_line(&self, text: &str) -> f64 {
        score_line(self.indicators(text), &self.weights)
    }

    pub fn score_document(&self, doc: &RawDocument) -> ScoreRecord {
        let lines = split_annotated(doc, &self.annotator);
        let mut pairs = Vec::with_capacity(lines.len());
        for (line, ann) in &lines {
            let v = self.filters.evaluate(&line.text, ann);
            pairs.push((line.token_count, score_line(v, &self.weights)));
        }
        let doc_score = score_document(&pairs);
        ScoreRecord {
            doc_id: doc.id.clone(),
            doc_score: doc_score.unwrap_or(0.0),
            line_scores: pairs.iter().map(|p| p.1).collect(),
            token_counts: pairs.iter().map(|p| p.0).collect(),
            flagged: doc_score.is_none(),
        }
    }

    /// Scores a corpus stream on `threads` workers. Output order equals input
    /// order and is identical for every thread count.
    pub fn score_corpus<I>(&self, corpus: I, threads: usize) -> Result<ScoreStream<'_, I::IntoIter>>
    where
        I: IntoIterator<Item = Result<CorpusRecord>>,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(ScoreStream {
            scorer: self,
            input: corpus.into_iter(),
            pool,
            batch_size: 256 * threads.max(1),
            ready: VecDeque::new(),
            skipped: 0,
            lines: 0,
            exhausted: false,
        })
    }
}

pub struct ScoreStream<'a, I> {
    scorer: &'a Scorer,
    input: I,
    pool: rayon::ThreadPool,
    batch_size: usize,
    ready: VecDeque<ScoreRecord>,
    skipped: usize,
    lines: usize,
    exhausted: bool,
}

impl<I> ScoreStream<'_, I> {
    /// Documents skipped because their input record was malformed.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Lines scored so far.
    pub fn lines_scored(&self) -> usize {
        self.lines
    }
}

impl<I> Iterator for ScoreStream<'_, I>
where
    I: Iterator<Item = Result<CorpusRecord>>,
{
    type Item = Result<ScoreRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(rec) = self.ready.pop_front() {
            return Some(Ok(rec));
        }
        if self.exhausted {
            return None;
        }
        let mut batch = Vec::with_capacity(self.batch_size);
        while batch.len() < self.batch_size {
            match self.input.next() {
                None => {
                    self.exhausted = true;
                    break;
                }
                Some(Ok(rec)) => batch.push(rec.doc),
                Some(Err(e @ Error::Io { .. })) => {
                    self.exhausted = true;
                    return Some(Err(e));
                }
                Some(Err(e)) => {
                    warn!("skipping document: {e}");
                    self.skipped += 1;
                }
            }
        }
        let scorer = self.scorer;
        let scored: Vec<ScoreRecord> = self
            .pool
            .install(|| batch.par_iter().map(|d| scorer.score_document(d)).collect());
        self.lines += scored.iter().map(|r| r.line_scores.len()).sum::<usize>();
        self.ready.extend(scored);
        self.ready.pop_front().map(Ok)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterId;

    fn weights(ws: &[f64]) -> WeightVector {
        let mut a = [0.0; FILTER_COUNT];
        a[..ws.len()].copy_from_slice(ws);
        WeightVector::new(a).unwrap()
    }

    #[test]
    fn line_score_examples() {
        let w = weights(&[0.5, 0.3, 0.2]);
        assert_eq!(score_line(IndicatorVector::ALL_PASS, &w), 1.0);
        assert_eq!(score_line(IndicatorVector::default(), &w), 0.0);
        let v = IndicatorVector::from_mask(0b101);
        assert!((score_line(v, &w) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_or_negative_weights_rejected() {
        assert!(matches!(
            WeightVector::new([0.0; FILTER_COUNT]),
            Err(Error::ZeroWeights)
        ));
        let mut a = [0.1; FILTER_COUNT];
        a[3] = -0.1;
        assert!(WeightVector::new(a).is_err());
        a[3] = f64::NAN;
        assert!(WeightVector::new(a).is_err());
    }

    #[test]
    fn document_score_examples() {
        assert_eq!(score_document(&[(10, 0.5), (30, 1.0)]), Some(0.875));
        assert_eq!(score_document(&[(7, 0.42)]), Some(0.42));
        assert_eq!(score_document(&[]), None);
        assert_eq!(score_document(&[(0, 0.9)]), None);
    }

    #[test]
    fn well_formed_document_scores_one() {
        let scorer = Scorer::new(Annotator::default(), FilterSet::default(), weights(&[0.3; 14]));
        let rec = scorer.score_document(&RawDocument {
            id: "x".into(),
            text: "The cat sat on the mat.".into(),
        });
        assert_eq!(rec.doc_score, 1.0);
        assert_eq!(rec.token_counts, vec![7]);
        assert!(!rec.flagged);

        let empty = scorer.score_document(&RawDocument { id: "e".into(), text: " \n ".into() });
        assert_eq!(empty.doc_score, 0.0);
        assert!(empty.flagged);
        assert!(empty.line_scores.is_empty());
    }

    #[test]
    fn corpus_stream_skips_malformed_and_keeps_order() {
        let scorer = Scorer::new(Annotator::default(), FilterSet::default(), weights(&[1.0; 14]));
        let rec = |id: &str, text: &str| {
            Ok(CorpusRecord {
                doc: RawDocument { id: id.into(), text: text.into() },
                raw: String::new(),
            })
        };
        let input = vec![
            rec("a", "Hello there."),
            Err(Error::MalformedRecord { line: 2, message: "bad".into() }),
            rec("b", "x"),
        ];
        let mut stream = scorer.score_corpus(input, 2).unwrap();
        let ids: Vec<String> = stream.by_ref().map(|r| r.unwrap().doc_id).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(stream.skipped(), 1);
        assert_eq!(stream.lines_scored(), 2);

        let empty: Vec<Result<CorpusRecord>> = Vec::new();
        assert_eq!(scorer.score_corpus(empty, 1).unwrap().count(), 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn weight_array() -> impl Strategy<Value = [f64; FILTER_COUNT]> {
            proptest::array::uniform14(0.0f64..1.0)
                .prop_filter("positive sum", |w| w.iter().sum::<f64>() > 1e-3)
        }

        proptest! {
            #[test]
            fn scale_invariance(w in weight_array(), mask in 0u16..(1 << 14), c in 0.01f64..100.0) {
                let base = WeightVector::new(w).unwrap();
                let v = IndicatorVector::from_mask(mask);
                let a = score_line(v, &base);
                let b = score_line(v, &base.scaled(c).unwrap());
                prop_assert!((a - b).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(&a));
            }

            #[test]
            fn flipping_a_weighted_bit_up_increases_score(
                w in weight_array(), mask in 0u16..(1 << 14), i in 0usize..14
            ) {
                let base = WeightVector::new(w).unwrap();
                let id = FilterId::from_index(i).unwrap();
                let mut lo = IndicatorVector::from_mask(mask);
                lo.set(id, false);
                let mut hi = lo;
                hi.set(id, true);
                if w[i] > 0.0 {
                    prop_assert!(score_line(hi, &base) > score_line(lo, &base));
                }
            }

            #[test]
            fn document_score_is_bounded_and_order_free(
                mut lines in proptest::collection::vec((1usize..200, 0.0f64..=1.0), 1..20)
            ) {
                let s = score_document(&lines).unwrap();
                let lo = lines.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
                let hi = lines.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
                lines.reverse();
                prop_assert!((score_document(&lines).unwrap() - s).abs() < 1e-12);
            }
        }
    }
}
