//! Perplexity backends: an interpolated Kneser-Ney n-gram model trained in
//! process, and an adapter for per-line log-probabilities computed elsewhere.
//!
//! All log-probabilities are natural logs. Begin-of-line padding symbols are
//! context only; the end-of-line symbol is predicted and scored.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::annotator::tokenize;
use crate::corpus_io::Line;
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const MODEL_MAGIC: &str = "qscore-ngram";
const MODEL_FORMAT: u32 = 1;

/// Used when a level has no singletons or no doubletons. Without singletons
/// unseen continuations would get no mass; without doubletons the estimate is
/// 1 and every seen count would be discounted away entirely.
const FALLBACK_DISCOUNT: f64 = 0.5;

type TokenId = u32;
const BOS_ID: TokenId = 0;
const EOS_ID: TokenId = 1;
const UNK_ID: TokenId = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityReport {
    pub token_count: u64,
    pub total_log_prob: f64,
}

impl PerplexityReport {
    pub fn new(token_count: u64, total_log_prob: f64) -> Self {
        Self {
            token_count,
            total_log_prob,
        }
    }

    pub fn ppl(&self) -> f64 {
        (-self.total_log_prob / self.token_count as f64).exp()
    }

    pub fn merge(self, other: PerplexityReport) -> PerplexityReport {
        PerplexityReport {
            token_count: self.token_count + other.token_count,
            total_log_prob: self.total_log_prob + other.total_log_prob,
        }
    }

    /// Sums line reports in the given order. Errors if there is nothing to sum.
    pub fn aggregate<'a, I>(lines: I) -> Result<PerplexityReport>
    where
        I: IntoIterator<Item = &'a PerplexityReport>,
    {
        let total = lines
            .into_iter()
            .fold(PerplexityReport::new(0, 0.0), |acc, r| acc.merge(*r));
        if total.token_count == 0 {
            return Err(Error::EmptyEvaluationSet);
        }
        Ok(total)
    }
}

/// Anything that can assign a log-probability to a line.
pub trait PerplexityBackend: Sync {
    /// Identifier recorded in calibration provenance.
    fn id(&self) -> String;

    fn score_line(&self, line: &Line) -> Result<PerplexityReport>;
}

/// Per-level count tables for one n-gram order.
#[derive(Debug, Clone, Default)]
struct Level {
    /// Counts keyed by full n-gram (context followed by predicted token).
    /// Raw counts at the highest order, continuation counts below it.
    counts: HashMap<Vec<TokenId>, u64>,
    /// Per context: (sum of counts, number of distinct continuations).
    contexts: HashMap<Vec<TokenId>, (u64, u64)>,
    discount: f64,
}

impl Level {
    fn from_counts(counts: HashMap<Vec<TokenId>, u64>) -> Level {
        let mut contexts: HashMap<Vec<TokenId>, (u64, u64)> = HashMap::new();
        let (mut n1, mut n2) = (0u64, 0u64);
        for (gram, &c) in &counts {
            let ctx = gram[..gram.len() - 1].to_vec();
            let e = contexts.entry(ctx).or_default();
            e.0 += c;
            e.1 += 1;
            match c {
                1 => n1 += 1,
                2 => n2 += 1,
                _ => {}
            }
        }
        let discount = if n1 == 0 || n2 == 0 {
            FALLBACK_DISCOUNT
        } else {
            n1 as f64 / (n1 as f64 + 2.0 * n2 as f64)
        };
        Level {
            counts,
            contexts,
            discount,
        }
    }
}

/// Interpolated Kneser-Ney language model. Immutable after training.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    min_count: u64,
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    /// Raw highest-order counts, the persisted state.
    raw: BTreeMap<Vec<TokenId>, u64>,
    /// levels[k] holds (k+1)-grams.
    levels: Vec<Level>,
}

fn line_tokens(line: &Line) -> Vec<String> {
    tokenize(&line.text).into_iter().map(|t| t.text).collect()
}

impl NGramModel {
    pub fn train<I>(lines: I, order: usize, min_count: u64) -> Result<NGramModel>
    where
        I: IntoIterator<Item = Line>,
    {
        if order == 0 {
            return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
        }
        // unigram frequencies decide the vocabulary, so tokenized lines are kept
        let corpus: Vec<Vec<String>> = lines.into_iter().map(|l| line_tokens(&l)).collect();
        if corpus.is_empty() {
            return Err(Error::EmptyTrainingCorpus);
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for toks in &corpus {
            for t in toks {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<&str> = freq
            .iter()
            .filter(|(w, c)| **c >= min_count.max(1) && ![BOS, EOS, UNK].contains(*w))
            .map(|(w, _)| *w)
            .collect();
        kept.sort_unstable();

        let mut vocab = vec![BOS.to_string(), EOS.to_string(), UNK.to_string()];
        vocab.extend(kept.into_iter().map(str::to_string));
        let index: HashMap<String, TokenId> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();

        let mut raw: BTreeMap<Vec<TokenId>, u64> = BTreeMap::new();
        for toks in &corpus {
            let ids = padded_ids(&index, toks, order);
            for window in ids.windows(order) {
                *raw.entry(window.to_vec()).or_default() += 1;
            }
        }
        Ok(Self::from_raw(order, min_count, vocab, raw))
    }

    fn from_raw(
        order: usize,
        min_count: u64,
        vocab: Vec<String>,
        raw: BTreeMap<Vec<TokenId>, u64>,
    ) -> NGramModel {
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();
        let mut levels = vec![Level::default(); order];
        levels[order - 1] = Level::from_counts(raw.iter().map(|(k, v)| (k.clone(), *v)).collect());
        // continuation counts: number of distinct left extensions of each gram
        for k in (0..order - 1).rev() {
            let mut cont: HashMap<Vec<TokenId>, u64> = HashMap::new();
            for gram in levels[k + 1].counts.keys() {
                *cont.entry(gram[1..].to_vec()).or_default() += 1;
            }
            levels[k] = Level::from_counts(cont);
        }
        NGramModel {
            order,
            min_count,
            vocab,
            index,
            raw,
            levels,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Tokens that can be predicted: the vocabulary minus the begin symbol.
    pub fn predictable_vocab_size(&self) -> usize {
        self.vocab.len() - 1
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn id_of(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    fn prob_ids(&self, context: &[TokenId], word: TokenId) -> f64 {
        let uniform = 1.0 / self.predictable_vocab_size() as f64;
        let mut p = uniform;
        // build up from the unigram level to the longest available context
        let ctx_len = context.len().min(self.order - 1);
        let context = &context[context.len() - ctx_len..];
        for k in 0..=ctx_len {
            let level = &self.levels[k];
            let ctx = &context[ctx_len - k..];
            let Some(&(total, distinct)) = level.contexts.get(ctx) else {
                continue;
            };
            let mut gram = ctx.to_vec();
            gram.push(word);
            let c = level.counts.get(&gram).copied().unwrap_or(0) as f64;
            let d = level.discount;
            let total = total as f64;
            p = (c - d).max(0.0) / total + d * distinct as f64 / total * p;
        }
        p
    }

    /// Conditional probability of `word` after `context` (tokens as text;
    /// out-of-vocabulary tokens map to the unknown symbol).
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let ctx: Vec<TokenId> = context.iter().map(|t| self.id_of(t)).collect();
        self.prob_ids(&ctx, self.id_of(word))
    }

    pub fn score_tokens(&self, tokens: &[String]) -> PerplexityReport {
        let ids = padded_ids(&self.index, tokens, self.order);
        let mut total = 0.0;
        for i in self.order - 1..ids.len() {
            total += self.prob_ids(&ids[i + 1 - self.order..i], ids[i]).ln();
        }
        PerplexityReport::new((tokens.len() + 1) as u64, total)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{MODEL_MAGIC}\t{MODEL_FORMAT}")?;
        writeln!(out, "order\t{}", self.order)?;
        writeln!(out, "min_count\t{}", self.min_count)?;
        writeln!(out, "vocab\t{}", self.vocab.len())?;
        for w in &self.vocab {
            writeln!(out, "{w}")?;
        }
        writeln!(out, "ngrams\t{}", self.raw.len())?;
        for (gram, count) in &self.raw {
            let ids: Vec<String> = gram.iter().map(|i| i.to_string()).collect();
            writeln!(out, "{}\t{count}", ids.join(" "))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<NGramModel> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let mut next = || -> Result<String> {
            match lines.next() {
                Some(l) => l.map_err(|e| Error::io(path, e)),
                None => Err(Error::InvalidModel("unexpected end of file".into())),
            }
        };
        fn field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix('\t'))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::InvalidModel(format!("expected `{key}` header, got {line:?}")))
        }
        let format: u32 = field(&next()?, MODEL_MAGIC)?;
        if format != MODEL_FORMAT {
            return Err(Error::InvalidModel(format!("unsupported format version {format}")));
        }
        let order: usize = field(&next()?, "order")?;
        if order == 0 {
            return Err(Error::InvalidModel("order must be at least 1".into()));
        }
        let min_count: u64 = field(&next()?, "min_count")?;
        let n_vocab: usize = field(&next()?, "vocab")?;
        let mut vocab = Vec::with_capacity(n_vocab);
        for _ in 0..n_vocab {
            vocab.push(next()?);
        }
        if vocab.len() < 3 || vocab[..3] != [BOS, EOS, UNK] {
            return Err(Error::InvalidModel("vocabulary must start with <s> </s> <unk>".into()));
        }
        let n_grams: usize = field(&next()?, "ngrams")?;
        let mut raw = BTreeMap::new();
        for _ in 0..n_grams {
            let line = next()?;
            let bad = || Error::InvalidModel(format!("bad n-gram row {line:?}"));
            let (ids, count) = line.split_once('\t').ok_or_else(bad)?;
            let gram = ids
                .split(' ')
                .map(|s| s.parse::<TokenId>().ok().filter(|&i| (i as usize) < n_vocab))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(bad)?;
            if gram.len() != order {
                return Err(bad());
            }
            let count: u64 = count.parse().map_err(|_| bad())?;
            raw.insert(gram, count);
        }
        Ok(Self::from_raw(order, min_count, vocab, raw))
    }
}

fn padded_ids(index: &HashMap<String, TokenId>, tokens: &[String], order: usize) -> Vec<TokenId> {
    let mut ids = vec![BOS_ID; order - 1];
    ids.extend(
        tokens
            .iter()
            .map(|t| index.get(t.as_str()).copied().unwrap_or(UNK_ID)),
    );
    ids.push(EOS_ID);
    ids
}

impl PerplexityBackend for NGramModel {
    fn id(&self) -> String {
        format!(
            "ngram-kn:order={};min_count={};vocab={};ngrams={}",
            self.order,
            self.min_count,
            self.vocab.len(),
            self.raw.len()
        )
    }

    fn score_line(&self, line: &Line) -> Result<PerplexityReport> {
        Ok(self.score_tokens(&line_tokens(line)))
    }
}

/// Evaluates perplexity over a set of lines, summing in input order.
pub fn perplexity<B, I>(backend: &B, lines: I) -> Result<PerplexityReport>
where
    B: PerplexityBackend + ?Sized,
    I: IntoIterator<Item = Line>,
{
    let mut total = PerplexityReport::new(0, 0.0);
    let mut any = false;
    for line in lines {
        any = true;
        total = total.merge(backend.score_line(&line)?);
    }
    if !any || total.token_count == 0 {
        return Err(Error::EmptyEvaluationSet);
    }
    Ok(total)
}

/// Per-line scores loaded from a TSV file produced by an external model.
#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    scores: HashMap<(String, usize), PerplexityReport>,
    source: String,
}

pub fn load_external_scores(path: &Path) -> Result<ExternalScores> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut scores = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {msg}", n + 1),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad("expected doc_id, line_index, token_count, total_log_prob"));
        }
        let line_index: usize = cols[1].parse().map_err(|_| bad("bad line_index"))?;
        let token_count: u64 = cols[2].parse().map_err(|_| bad("bad token_count"))?;
        let total_log_prob: f64 = cols[3].parse().map_err(|_| bad("bad total_log_prob"))?;
        if token_count == 0 || !total_log_prob.is_finite() {
            return Err(bad("token_count must be positive and log-prob finite"));
        }
        let key = (cols[0].to_string(), line_index);
        if scores.contains_key(&key) {
            return Err(Error::DuplicateKey {
                doc_id: key.0,
                line_index,
            });
        }
        scores.insert(key, PerplexityReport::new(token_count, total_log_prob));
    }
    Ok(ExternalScores {
        scores,
        source: path.display().to_string(),
    })
}

impl ExternalScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, doc_id: &str, line_index: usize) -> Option<PerplexityReport> {
        self.scores.get(&(doc_id.to_string(), line_index)).copied()
    }

    /// Fails with the first ten missing keys if any line lacks a score.
    pub fn check_coverage<'a, I>(&self, lines: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a Line>,
    {
        let mut missing = Vec::new();
        let mut count = 0;
        for line in lines {
            if self.get(&line.doc_id, line.index).is_none() {
                count += 1;
                if missing.len() < 10 {
                    missing.push(format!("{}:{}", line.doc_id, line.index));
                }
            }
        }
        if count > 0 {
            return Err(Error::MissingKeys {
                count,
                first: missing,
            });
        }
        Ok(())
    }
}

impl PerplexityBackend for ExternalScores {
    fn id(&self) -> String {
        format!("external:{}", self.source)
    }

    fn score_line(&self, line: &Line) -> Result<PerplexityReport> {
        self.get(&line.doc_id, line.index).ok_or_else(|| Error::MissingKeys {
            count: 1,
            first: vec![format!("{}:{}", line.doc_id, line.index)],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(doc: &str, index: usize, text: &str) -> Line {
        Line {
            doc_id: doc.into(),
            index,
            text: text.into(),
            token_count: tokenize(text).len(),
        }
    }

    fn lines(texts: &[&str]) -> Vec<Line> {
        texts.iter().enumerate().map(|(i, t)| line("d", i, t)).collect()
    }

    fn predictable(model: &NGramModel) -> Vec<String> {
        model.vocab()[1..].to_vec()
    }

    #[test]
    fn unigram_matches_hand_formula() {
        let m = NGramModel::train(lines(&["a a a"]), 1, 1).unwrap();
        // counts: a=3, </s>=1; no doubletons -> fallback D = 0.5
        // predictable vocab {</s>, <unk>, a}: uniform 1/3
        // p(a)    = (3-D)/4 + D*2/4 * 1/3
        // p(</s>) = (1-D)/4 + D*2/4 * 1/3
        let d = 0.5;
        let p_a = (3.0 - d) / 4.0 + d * 2.0 / 4.0 / 3.0;
        let p_eos = (1.0f64 - d).max(0.0) / 4.0 + d * 2.0 / 4.0 / 3.0;
        let p_unk = d * 2.0 / 4.0 / 3.0;
        assert!((m.prob(&[], "a") - p_a).abs() < 1e-15);
        assert!((m.prob(&[], EOS) - p_eos).abs() < 1e-15);
        assert!((m.prob(&[], "zzz") - p_unk).abs() < 1e-15);
        assert!((p_a + p_eos + p_unk - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distinct_unigrams_normalize() {
        let m = NGramModel::train(lines(&["a b c d e f g"]), 1, 1).unwrap();
        let sum: f64 = predictable(&m).iter().map(|w| m.prob(&[], w)).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        // all observed words share one probability
        let pa = m.prob(&[], "a");
        for w in ["b", "c", "g"] {
            assert!((m.prob(&[], w) - pa).abs() < 1e-15);
        }
    }

    #[test]
    fn every_trigram_context_normalizes() {
        let m = NGramModel::train(
            lines(&["a b c a b", "b c d e", "a a b b c", "e d c b a", "c c e"]),
            3,
            1,
        )
        .unwrap();
        let vocab: Vec<String> = m.vocab().to_vec();
        let pred = predictable(&m);
        for h1 in &vocab {
            for h2 in &vocab {
                let ctx = [h1.as_str(), h2.as_str()];
                let sum: f64 = pred.iter().map(|w| m.prob(&ctx, w)).sum();
                assert!((sum - 1.0).abs() < 1e-9, "context {ctx:?} sums to {sum}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let data = ["the cat sat", "the dog sat", "a cat ran", "the cat ran"];
        let a = NGramModel::train(lines(&data), 3, 1).unwrap();
        let b = NGramModel::train(lines(&data), 3, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.lm"), dir.path().join("b.lm"));
        a.save(&pa).unwrap();
        b.save(&pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());

        let c = NGramModel::load(&pa).unwrap();
        assert_eq!(a.id(), c.id());
        for w in predictable(&a) {
            assert_eq!(a.prob(&["the", "cat"], &w), c.prob(&["the", "cat"], &w));
        }
    }

    #[test]
    fn load_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.lm");
        std::fs::write(&p, "not-a-model\t1\n").unwrap();
        assert!(matches!(NGramModel::load(&p), Err(Error::InvalidModel(_))));
        std::fs::write(&p, "qscore-ngram\t9\n").unwrap();
        assert!(matches!(NGramModel::load(&p), Err(Error::InvalidModel(_))));
        std::fs::write(
            &p,
            "qscore-ngram\t1\norder\t2\nmin_count\t1\nvocab\t3\n<s>\n</s>\n<unk>\nngrams\t1\n0 7\t1\n",
        )
        .unwrap();
        assert!(matches!(NGramModel::load(&p), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn rare_tokens_become_unknown() {
        let m = NGramModel::train(lines(&["a a b"]), 1, 2).unwrap();
        assert_eq!(m.vocab(), [BOS, EOS, UNK, "a"]);
        assert_eq!(m.prob(&[], "b"), m.prob(&[], UNK));
    }

    #[test]
    fn empty_inputs_error() {
        assert!(matches!(
            NGramModel::train(Vec::new(), 3, 2),
            Err(Error::EmptyTrainingCorpus)
        ));
        let m = NGramModel::train(lines(&["a"]), 1, 1).unwrap();
        assert!(matches!(perplexity(&m, Vec::new()), Err(Error::EmptyEvaluationSet)));
    }

    #[test]
    fn report_formula() {
        let r = PerplexityReport::new(4, 4.0 * 0.5f64.ln());
        assert!((r.ppl() - 2.0).abs() < 1e-12);
        let r = PerplexityReport::new(4, -2.772589);
        assert!((r.ppl() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn memorized_text_beats_shuffled_text() {
        let train = "the quick brown fox jumps over the lazy dog";
        let m = NGramModel::train(lines(&[train]), 4, 1).unwrap();
        let own = perplexity(&m, lines(&[train])).unwrap();
        let shuffled = perplexity(&m, lines(&["dog lazy the over jumps fox brown quick the"])).unwrap();
        assert!(own.ppl() < shuffled.ppl(), "{} vs {}", own.ppl(), shuffled.ppl());
        assert!(own.ppl() >= 1.0);
    }

    #[test]
    fn reports_are_additive_and_order_free() {
        let m = NGramModel::train(lines(&["a b c", "b c a", "c a b"]), 2, 1).unwrap();
        let a = lines(&["a b", "c c c"]);
        let b = lines(&["b a c a"]);
        let ra = perplexity(&m, a.clone()).unwrap();
        let rb = perplexity(&m, b.clone()).unwrap();
        let both = perplexity(&m, a.iter().chain(&b).cloned()).unwrap();
        assert_eq!(both.token_count, ra.token_count + rb.token_count);
        assert!((both.total_log_prob - (ra.total_log_prob + rb.total_log_prob)).abs() < 1e-12);
        let reversed = perplexity(&m, b.into_iter().chain(a).rev()).unwrap();
        assert!((reversed.ppl() - both.ppl()).abs() < 1e-12);
    }

    #[test]
    fn adding_average_line_keeps_ppl() {
        let base = PerplexityReport::new(10, -23.0);
        let avg = base.total_log_prob / base.token_count as f64;
        let extra = PerplexityReport::new(5, 5.0 * avg);
        assert!((base.merge(extra).ppl() - base.ppl()).abs() < 1e-9);
    }

    #[test]
    fn external_scores_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        std::fs::write(&p, "a\t0\t4\t-2.772589\n").unwrap();
        let ext = load_external_scores(&p).unwrap();
        let r = ext.score_line(&line("a", 0, "w x y")).unwrap();
        assert!((r.ppl() - 2.0).abs() < 1e-6);

        let missing = ext.check_coverage(&[line("a", 0, "x"), line("b", 3, "y")]).unwrap_err();
        assert!(missing.to_string().contains("b:3"), "{missing}");

        std::fs::write(&p, "a\t0\t4\t-1\na\t0\t2\t-1\n").unwrap();
        let err = load_external_scores(&p).unwrap_err();
        assert!(err.to_string().contains("duplicate key"), "{err}");

        std::fs::write(&p, "").unwrap();
        let ext = load_external_scores(&p).unwrap();
        assert!(ext.is_empty());
        assert!(matches!(
            ext.check_coverage(&[line("a", 0, "x")]),
            Err(Error::MissingKeys { .. })
        ));
    }
}
