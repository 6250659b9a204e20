//! Tokenization and shallow rule-based annotation.
//!
//! Lines are tokenized on whitespace with leading and trailing punctuation
//! split off, then tagged with a coarse part-of-speech set from a closed-class
//! lexicon and a suffix-rule table. A governor pattern (verb or adposition,
//! optionally followed by determiners/adjectives, then a noun or pronoun)
//! marks objects and their dependents.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");
const DEFAULT_SUFFIXES: &str = include_str!("../data/suffixes.tsv");

/// Minimum number of characters that must remain once a suffix is removed
/// for the suffix rule to fire.
const MIN_STEM_CHARS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Digit,
    Punctuation,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Noun,
    Verb,
    Det,
    Adp,
    Pron,
    Adj,
    Adv,
    Other,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Noun => "NOUN",
            Tag::Verb => "VERB",
            Tag::Det => "DET",
            Tag::Adp => "ADP",
            Tag::Pron => "PRON",
            Tag::Adj => "ADJ",
            Tag::Adv => "ADV",
            Tag::Other => "OTHER",
        }
    }

    fn is_modifier(self) -> bool {
        matches!(self, Tag::Det | Tag::Adj)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "NOUN" => Tag::Noun,
            "VERB" => Tag::Verb,
            "DET" => Tag::Det,
            "ADP" => Tag::Adp,
            "PRON" => Tag::Pron,
            "ADJ" => Tag::Adj,
            "ADV" => Tag::Adv,
            "OTHER" => Tag::Other,
            other => return Err(format!("unknown tag {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    pub tag: Tag,
    pub position: usize,
}

/// An object head together with the determiners/adjectives attached to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectSpan {
    pub head: usize,
    pub dependents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub tokens: Vec<Token>,
    pub objects: Vec<ObjectSpan>,
    pub word_count: usize,
    pub token_count: usize,
}

pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

fn is_decimal_digit(c: char) -> bool {
    get_general_category(c) == GeneralCategory::DecimalNumber
}

fn classify(text: &str) -> TokenKind {
    if text.chars().all(is_decimal_digit) {
        TokenKind::Digit
    } else if text.chars().all(is_punctuation) {
        TokenKind::Punctuation
    } else if text.chars().any(char::is_alphabetic) {
        TokenKind::Word
    } else {
        TokenKind::Other
    }
}

/// Splits `text` into tokens. Tags are left as `OTHER`; see [`Annotator::tag`].
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut pieces: Vec<&str> = Vec::new();
    for chunk in text.split_whitespace() {
        let mut start = 0;
        let mut end = chunk.len();
        let mut leading = Vec::new();
        for (i, c) in chunk.char_indices() {
            if !is_punctuation(c) {
                break;
            }
            leading.push(&chunk[i..i + c.len_utf8()]);
            start = i + c.len_utf8();
        }
        pieces.extend(leading);
        if start == end {
            continue;
        }
        let mut trailing = Vec::new();
        for (i, c) in chunk[start..].char_indices().rev() {
            if !is_punctuation(c) {
                break;
            }
            let at = start + i;
            trailing.push(&chunk[at..at + c.len_utf8()]);
            end = at;
        }
        pieces.push(&chunk[start..end]);
        pieces.extend(trailing.into_iter().rev());
    }

    pieces
        .into_iter()
        .enumerate()
        .map(|(position, piece)| Token {
            text: piece.to_string(),
            kind: classify(piece),
            tag: Tag::Other,
            position,
        })
        .collect()
}

/// Closed-class lexicon plus suffix rules. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct Annotator {
    lexicon: HashMap<String, Tag>,
    /// Sorted longest suffix first.
    suffixes: Vec<(String, Tag)>,
    version: String,
}

impl Default for Annotator {
    fn default() -> Self {
        Self::from_tables(DEFAULT_LEXICON, DEFAULT_SUFFIXES)
            .expect("bundled lexicon tables are well-formed")
    }
}

fn parse_table(source: &str, origin: &Path) -> Result<Vec<(String, Tag)>> {
    let mut entries = Vec::new();
    for (n, raw) in source.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            message: format!("line {}: {message}", n + 1),
        };
        let (key, tag) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected `entry<TAB>TAG`".into()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(parse_err("empty entry".into()));
        }
        let tag = tag.trim().parse::<Tag>().map_err(parse_err)?;
        entries.push((key.to_lowercase(), tag));
    }
    Ok(entries)
}

impl Annotator {
    pub fn from_tables(lexicon: &str, suffixes: &str) -> Result<Self> {
        Self::parse(lexicon, Path::new("<lexicon>"), suffixes, Path::new("<suffixes>"))
    }

    pub fn from_files(lexicon: Option<&Path>, suffixes: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let lex_src = match lexicon {
            Some(p) => read(p)?,
            None => DEFAULT_LEXICON.to_string(),
        };
        let suf_src = match suffixes {
            Some(p) => read(p)?,
            None => DEFAULT_SUFFIXES.to_string(),
        };
        Self::parse(
            &lex_src,
            lexicon.unwrap_or(Path::new("<lexicon>")),
            &suf_src,
            suffixes.unwrap_or(Path::new("<suffixes>")),
        )
    }

    fn parse(lexicon: &str, lex_path: &Path, suffixes: &str, suf_path: &Path) -> Result<Self> {
        let mut table = HashMap::new();
        for (word, tag) in parse_table(lexicon, lex_path)? {
            table.entry(word).or_insert(tag);
        }
        let mut rules = parse_table(suffixes, suf_path)?;
        // longest first, then lexicographic so equal-length rules are stable
        rules.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        rules.dedup_by(|a, b| a.0 == b.0);

        let mut hasher = Sha256::new();
        hasher.update(lexicon.as_bytes());
        hasher.update([0u8]);
        hasher.update(suffixes.as_bytes());
        let version = hex::encode(&hasher.finalize()[..8]);

        Ok(Self {
            lexicon: table,
            suffixes: rules,
            version,
        })
    }

    /// Content hash of the lexicon and suffix tables.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn lookup(&self, word: &str) -> Option<Tag> {
        self.lexicon.get(&word.to_lowercase()).copied()
    }

    fn suffix_tag(&self, lower: &str) -> Option<Tag> {
        let chars = lower.chars().count();
        self.suffixes
            .iter()
            .find(|(suffix, _)| {
                lower.ends_with(suffix.as_str())
                    && chars >= suffix.chars().count() + MIN_STEM_CHARS
            })
            .map(|(_, tag)| *tag)
    }

    pub fn tag(&self, mut tokens: Vec<Token>) -> Vec<Token> {
        let mut prev: Option<Tag> = None;
        for token in tokens.iter_mut() {
            token.tag = if token.kind != TokenKind::Word {
                Tag::Other
            } else {
                let lower = token.text.to_lowercase();
                if let Some(tag) = self.lexicon.get(&lower) {
                    *tag
                } else {
                    match self.suffix_tag(&lower) {
                        // verb suffixes only count in verb position; after a
                        // determiner or adjective the word is a modifier or noun
                        Some(Tag::Verb) if prev.is_some_and(Tag::is_modifier) => {
                            if lower.ends_with("ed") {
                                Tag::Adj
                            } else {
                                Tag::Noun
                            }
                        }
                        Some(tag) => tag,
                        None => Tag::Noun,
                    }
                }
            };
            prev = Some(token.tag);
        }
        tokens
    }

    pub fn annotate(&self, text: &str) -> Annotation {
        let tokens = self.tag(tokenize(text));
        let objects = detect_objects(&tokens);
        let word_count = tokens.iter().filter(|t| t.kind == TokenKind::Word).count();
        let token_count = tokens.len();
        Annotation {
            tokens,
            objects,
            word_count,
            token_count,
        }
    }
}

/// Finds NOUN/PRON heads governed by a preceding VERB or ADP, skipping over
/// any determiners/adjectives in between (which become the dependents).
pub fn detect_objects(tokens: &[Token]) -> Vec<ObjectSpan> {
    let mut spans = Vec::new();
    for (head, token) in tokens.iter().enumerate() {
        if !matches!(token.tag, Tag::Noun | Tag::Pron) {
            continue;
        }
        let mut first = head;
        while first > 0 && tokens[first - 1].tag.is_modifier() {
            first -= 1;
        }
        if first == 0 || !matches!(tokens[first - 1].tag, Tag::Verb | Tag::Adp) {
            continue;
        }
        spans.push(ObjectSpan {
            head,
            dependents: (first..head).collect(),
        });
    }
    spans
}
