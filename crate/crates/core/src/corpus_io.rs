//! Corpus readers and writers, plus document-to-line splitting.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotator::{Annotation, Annotator};
use crate::error::{Error, Result};
use crate::scoring::ScoreRecord;

/// HTML markers that end a line. They are dropped from the output.
pub const LINE_END_MARKERS: [&str; 12] = [
    "</p>", "</div>", "</li>", "</td>", "</h1>", "</h2>", "</h3>", "</h4>", "</h5>", "</h6>",
    "<br>", "<br/>",
];

pub const SENTENCE_TERMINATORS: [char; 3] = ['.', '!', '?'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    Plain,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "plain" => Ok(CorpusFormat::Plain),
            other => Err(format!("unknown corpus format {other:?} (expected jsonl or plain)")),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::Plain => "plain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
}

/// A document together with its on-disk representation, so that pruned or
/// split corpora can be written back byte-for-byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub doc: RawDocument,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub token_count: usize,
}

/// Streaming reader over a corpus file. Memory is bounded by one document plus
/// the set of ids seen so far.
pub struct CorpusReader<R> {
    input: R,
    origin: PathBuf,
    format: CorpusFormat,
    line_no: usize,
    next_ordinal: usize,
    seen: HashSet<String>,
    buf: String,
    done: bool,
}

pub fn read_corpus(path: &Path, format: CorpusFormat) -> Result<CorpusReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(CorpusReader::new(BufReader::new(file), format, path))
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(input: R, format: CorpusFormat, origin: &Path) -> Self {
        Self {
            input,
            origin: origin.to_path_buf(),
            format,
            line_no: 0,
            next_ordinal: 0,
            seen: HashSet::new(),
            buf: String::new(),
            done: false,
        }
    }

    /// Reads one physical line into `self.buf`; returns false at end of input.
    fn fill(&mut self) -> std::io::Result<bool> {
        self.buf.clear();
        let n = self.input.read_line(&mut self.buf)?;
        if n == 0 {
            return Ok(false);
        }
        self.line_no += 1;
        while self.buf.ends_with('\n') || self.buf.ends_with('\r') {
            self.buf.pop();
        }
        Ok(true)
    }

    fn next_jsonl(&mut self) -> Option<Result<CorpusRecord>> {
        #[derive(Deserialize)]
        struct Row {
            id: String,
            text: String,
        }
        loop {
            match self.fill() {
                Ok(false) => return None,
                Ok(true) if self.buf.trim().is_empty() => continue,
                Ok(true) => break,
                Err(e) => return Some(Err(Error::io(&self.origin, e))),
            }
        }
        let row: Row = match serde_json::from_str(&self.buf) {
            Ok(row) => row,
            Err(e) => {
                return Some(Err(Error::MalformedRecord {
                    line: self.line_no,
                    message: e.to_string(),
                }))
            }
        };
        if row.id.is_empty() {
            return Some(Err(Error::MalformedRecord {
                line: self.line_no,
                message: "empty id".into(),
            }));
        }
        Some(Ok(CorpusRecord {
            doc: RawDocument {
                id: row.id,
                text: row.text,
            },
            raw: self.buf.clone(),
        }))
    }

    fn next_plain(&mut self) -> Option<Result<CorpusRecord>> {
        let mut block = String::new();
        loop {
            match self.fill() {
                Ok(false) => break,
                Ok(true) if self.buf.trim().is_empty() => {
                    if block.is_empty() {
                        continue;
                    }
                    break;
                }
                Ok(true) => {
                    if !block.is_empty() {
                        block.push('\n');
                    }
                    block.push_str(&self.buf);
                }
                Err(e) => return Some(Err(Error::io(&self.origin, e))),
            }
        }
        if block.is_empty() {
            return None;
        }
        let id = self.next_ordinal.to_string();
        self.next_ordinal += 1;
        Some(Ok(CorpusRecord {
            doc: RawDocument {
                id,
                text: block.clone(),
            },
            raw: block,
        }))
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<CorpusRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = match self.format {
            CorpusFormat::Jsonl => self.next_jsonl(),
            CorpusFormat::Plain => self.next_plain(),
        };
        match item {
            None => {
                self.done = true;
                None
            }
            Some(Ok(rec)) => {
                if !self.seen.insert(rec.doc.id.clone()) {
                    return Some(Err(Error::DuplicateId(rec.doc.id)));
                }
                Some(Ok(rec))
            }
            Some(Err(e)) => {
                if matches!(e, Error::Io { .. }) {
                    self.done = true;
                }
                Some(Err(e))
            }
        }
    }
}

/// Writes corpus records in their original on-disk form.
pub struct CorpusWriter {
    out: BufWriter<File>,
    path: PathBuf,
    format: CorpusFormat,
    written: usize,
}

impl CorpusWriter {
    pub fn create(path: &Path, format: CorpusFormat) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            format,
            written: 0,
        })
    }

    pub fn write(&mut self, record: &CorpusRecord) -> Result<()> {
        let res = match self.format {
            CorpusFormat::Jsonl => writeln!(self.out, "{}", record.raw),
            CorpusFormat::Plain if self.written == 0 => writeln!(self.out, "{}", record.raw),
            CorpusFormat::Plain => write!(self.out, "\n{}\n", record.raw),
        };
        res.map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.written)
    }
}

fn marker_at(segment: &str, at: usize) -> Option<&'static str> {
    if segment.as_bytes()[at] != b'<' {
        return None;
    }
    LINE_END_MARKERS
        .iter()
        .copied()
        .find(|m| segment[at..].starts_with(m))
}

/// Splits raw text into trimmed, non-empty line strings.
pub fn split_segments(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut push = |piece: &str| {
        let piece = piece.trim();
        if !piece.is_empty() {
            out.push(piece.to_string());
        }
    };
    for segment in text.split('\n') {
        let mut start = 0;
        let mut iter = segment.char_indices().peekable();
        while let Some((i, c)) = iter.next() {
            if let Some(marker) = marker_at(segment, i) {
                push(&segment[start..i]);
                start = i + marker.len();
                while iter.peek().is_some_and(|&(j, _)| j < start) {
                    iter.next();
                }
                continue;
            }
            if SENTENCE_TERMINATORS.contains(&c) {
                let ends = match iter.peek() {
                    None => true,
                    Some(&(_, next)) => next.is_whitespace(),
                };
                if ends {
                    let end = i + c.len_utf8();
                    push(&segment[start..end]);
                    start = end;
                }
            }
        }
        push(&segment[start..]);
    }
    out
}

pub fn split_lines(doc: &RawDocument, annotator: &Annotator) -> Vec<Line> {
    split_annotated(doc, annotator)
        .into_iter()
        .map(|(line, _)| line)
        .collect()
}

/// Like [`split_lines`] but keeps each line's annotation.
pub fn split_annotated(doc: &RawDocument, annotator: &Annotator) -> Vec<(Line, Annotation)> {
    split_segments(&doc.text)
        .into_iter()
        .enumerate()
        .map(|(index, text)| {
            let annotation = annotator.annotate(&text);
            let line = Line {
                doc_id: doc.id.clone(),
                index,
                text,
                token_count: annotation.token_count,
            };
            (line, annotation)
        })
        .collect()
}

fn push_json_f64(out: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(out, "{v:.6}");
}

/// Serializes one record as a single JSON line (without the newline).
pub fn format_score_record(rec: &ScoreRecord) -> String {
    let mut out = String::with_capacity(64 + rec.line_scores.len() * 10);
    out.push_str("{\"id\":");
    out.push_str(&serde_json::to_string(&rec.doc_id).expect("strings serialize"));
    out.push_str(",\"doc_score\":");
    push_json_f64(&mut out, rec.doc_score);
    out.push_str(",\"line_scores\":[");
    for (i, s) in rec.line_scores.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_json_f64(&mut out, *s);
    }
    out.push_str("],\"token_counts\":[");
    for (i, tc) in rec.token_counts.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&tc.to_string());
    }
    out.push_str("]}");
    out
}

pub struct ScoreWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl ScoreWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, rec: &ScoreRecord) -> Result<()> {
        writeln!(self.out, "{}", format_score_record(rec)).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_scores<I>(records: I, path: &Path) -> Result<()>
where
    I: IntoIterator<Item = ScoreRecord>,
{
    let mut writer = ScoreWriter::create(path)?;
    for rec in records {
        writer.write(&rec)?;
    }
    writer.finish()
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        doc_score: f64,
        line_scores: Vec<f64>,
        token_counts: Vec<usize>,
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?;
        if row.line_scores.len() != row.token_counts.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: line_scores and token_counts lengths differ", n + 1),
            });
        }
        let flagged = row.token_counts.iter().sum::<usize>() == 0;
        records.push(ScoreRecord {
            doc_id: row.id,
            doc_score: row.doc_score,
            line_scores: row.line_scores,
            token_counts: row.token_counts,
            flagged,
        });
    }
    Ok(records)
}
