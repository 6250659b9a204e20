//! The fourteen line-level well-formedness filters.
//!
//! Every filter is oriented so that a set bit means the line looks like
//! well-formed prose. Filters whose natural phrasing is a detector (repetition,
//! digit/punctuation density, braces, code phrases) store the negation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annotator::{Annotation, Tag, TokenKind};

pub const FILTER_COUNT: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum FilterId {
    HasFirstLetterCaps = 0,
    NoAllCaps = 1,
    WordRepetitionRatio = 2,
    DigitPunctuationRatio = 3,
    NoSpecialCharacters = 4,
    TerminalPunctuation = 5,
    StopWordMatch2 = 6,
    JavascriptFlag = 7,
    TokenCountGe3 = 8,
    WordCount3To256 = 9,
    HasObject = 10,
    HasNoun = 11,
    HasDeterminer = 12,
    TextComplexityC1 = 13,
}

impl FilterId {
    pub const ALL: [FilterId; FILTER_COUNT] = [
        FilterId::HasFirstLetterCaps,
        FilterId::NoAllCaps,
        FilterId::WordRepetitionRatio,
        FilterId::DigitPunctuationRatio,
        FilterId::NoSpecialCharacters,
        FilterId::TerminalPunctuation,
        FilterId::StopWordMatch2,
        FilterId::JavascriptFlag,
        FilterId::TokenCountGe3,
        FilterId::WordCount3To256,
        FilterId::HasObject,
        FilterId::HasNoun,
        FilterId::HasDeterminer,
        FilterId::TextComplexityC1,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<FilterId> {
        Self::ALL.get(i).copied()
    }

    pub fn from_name(name: &str) -> Option<FilterId> {
        Self::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Stable external name, spelled as in the published filter table.
    pub fn name(self) -> &'static str {
        match self {
            FilterId::HasFirstLetterCaps => "has_first_letter_caps",
            FilterId::NoAllCaps => "no_all_caps",
            FilterId::WordRepetitionRatio => "word_repetetion_ratio_ge_0_2",
            FilterId::DigitPunctuationRatio => "digit_punctuation_ratio_0_25",
            FilterId::NoSpecialCharacters => "no_special_characters",
            FilterId::TerminalPunctuation => "terminal_punctuation",
            FilterId::StopWordMatch2 => "stop_word_match_2",
            FilterId::JavascriptFlag => "javascript_flag",
            FilterId::TokenCountGe3 => "token_count_ge_3",
            FilterId::WordCount3To256 => "word_count_3_256",
            FilterId::HasObject => "has_object",
            FilterId::HasNoun => "has_noun",
            FilterId::HasDeterminer => "has_determiner",
            FilterId::TextComplexityC1 => "text_complexity_c1",
        }
    }
}

impl fmt::Display for FilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fourteen pass/fail bits, bit `i` for filter `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct IndicatorVector(u16);

impl IndicatorVector {
    pub const ALL_PASS: IndicatorVector = IndicatorVector((1 << FILTER_COUNT) - 1);

    pub fn from_bits(bits: [bool; FILTER_COUNT]) -> Self {
        let mut v = 0u16;
        for (i, b) in bits.iter().enumerate() {
            if *b {
                v |= 1 << i;
            }
        }
        IndicatorVector(v)
    }

    pub fn from_mask(mask: u16) -> Self {
        IndicatorVector(mask & Self::ALL_PASS.0)
    }

    pub fn mask(self) -> u16 {
        self.0
    }

    pub fn get(self, id: FilterId) -> bool {
        self.0 & (1 << id.index()) != 0
    }

    pub fn set(&mut self, id: FilterId, value: bool) {
        if value {
            self.0 |= 1 << id.index();
        } else {
            self.0 &= !(1 << id.index());
        }
    }

    pub fn bits(self) -> [bool; FILTER_COUNT] {
        std::array::from_fn(|i| self.0 & (1 << i) != 0)
    }

    pub fn count_passed(self) -> u32 {
        self.0.count_ones()
    }
}

impl fmt::Display for IndicatorVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub const DEFAULT_STOP_WORDS: [&str; 8] = ["the", "be", "to", "of", "and", "that", "have", "with"];
const MIN_STOP_WORDS: usize = 2;
const TERMINAL_PUNCTUATION: [char; 4] = ['.', '!', '?', '"'];
const CODE_PHRASES: [&str; 2] = ["javascript", "lorem ipsum"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub max_word_repetition_ratio: f64,
    pub max_digit_punctuation_ratio: f64,
    pub min_token_count: usize,
    /// Exclusive lower bound on word count.
    pub word_count_above: usize,
    /// Exclusive upper bound on word count.
    pub word_count_below: usize,
    pub stop_words: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_word_repetition_ratio: 0.2,
            max_digit_punctuation_ratio: 0.25,
            min_token_count: 3,
            word_count_above: 3,
            word_count_below: 256,
            stop_words: DEFAULT_STOP_WORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl FilterConfig {
    /// Canonical string covering every threshold, used for profile hashing.
    pub fn profile(&self) -> String {
        let mut words: Vec<String> = self.stop_words.iter().map(|w| w.to_lowercase()).collect();
        words.sort();
        words.dedup();
        format!(
            "rep<={};dp<={};tok>={};{}<words<{};stop={}",
            self.max_word_repetition_ratio,
            self.max_digit_punctuation_ratio,
            self.min_token_count,
            self.word_count_above,
            self.word_count_below,
            words.join(",")
        )
    }
}

/// Evaluates all filters against one annotated line.
#[derive(Debug, Clone)]
pub struct FilterSet {
    config: FilterConfig,
    stop_words: Vec<String>,
}

impl Default for FilterSet {
    fn default() -> Self {
        Self::new(FilterConfig::default())
    }
}

impl FilterSet {
    pub fn new(config: FilterConfig) -> Self {
        let stop_words = config.stop_words.iter().map(|w| w.to_lowercase()).collect();
        Self { config, stop_words }
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn evaluate(&self, text: &str, ann: &Annotation) -> IndicatorVector {
        let cfg = &self.config;
        let mut v = IndicatorVector::default();

        let first_alpha = text.chars().find(|c| c.is_alphabetic());
        v.set(
            FilterId::HasFirstLetterCaps,
            first_alpha.is_some_and(char::is_uppercase),
        );

        let all_caps = first_alpha.is_some()
            && text
                .chars()
                .filter(|c| c.is_alphabetic())
                .all(char::is_uppercase);
        v.set(FilterId::NoAllCaps, !all_caps);

        let words: Vec<String> = ann
            .tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Word)
            .map(|t| t.text.to_lowercase())
            .collect();
        let repetition = if words.is_empty() {
            0.0
        } else {
            let mut distinct = words.clone();
            distinct.sort_unstable();
            distinct.dedup();
            (words.len() - distinct.len()) as f64 / words.len() as f64
        };
        v.set(
            FilterId::WordRepetitionRatio,
            repetition <= cfg.max_word_repetition_ratio,
        );

        let noisy = ann
            .tokens
            .iter()
            .filter(|t| matches!(t.kind, TokenKind::Digit | TokenKind::Punctuation))
            .count();
        let ratio = noisy as f64 / ann.word_count.max(1) as f64;
        v.set(
            FilterId::DigitPunctuationRatio,
            ratio <= cfg.max_digit_punctuation_ratio,
        );

        v.set(FilterId::NoSpecialCharacters, !text.contains('{'));

        let last = text.chars().rev().find(|c| !c.is_whitespace());
        v.set(
            FilterId::TerminalPunctuation,
            last.is_some_and(|c| TERMINAL_PUNCTUATION.contains(&c)),
        );

        let stop_hits = ann
            .tokens
            .iter()
            .filter(|t| self.stop_words.contains(&t.text.to_lowercase()))
            .count();
        v.set(FilterId::StopWordMatch2, stop_hits >= MIN_STOP_WORDS);

        let lower = text.to_lowercase();
        v.set(
            FilterId::JavascriptFlag,
            !CODE_PHRASES.iter().any(|p| lower.contains(p)),
        );

        v.set(FilterId::TokenCountGe3, ann.token_count >= cfg.min_token_count);
        v.set(
            FilterId::WordCount3To256,
            ann.word_count > cfg.word_count_above && ann.word_count < cfg.word_count_below,
        );

        v.set(FilterId::HasObject, !ann.objects.is_empty());
        v.set(
            FilterId::HasNoun,
            ann.tokens.iter().any(|t| t.tag == Tag::Noun),
        );
        v.set(
            FilterId::HasDeterminer,
            ann.tokens.iter().any(|t| t.tag == Tag::Det),
        );
        v.set(
            FilterId::TextComplexityC1,
            ann.objects.iter().any(|o| !o.dependents.is_empty()),
        );
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::Annotator;

    fn eval(text: &str) -> IndicatorVector {
        let ann = Annotator::default();
        FilterSet::default().evaluate(text, &ann.annotate(text))
    }

    fn mask_of(passing: &[usize]) -> IndicatorVector {
        let mut bits = [false; FILTER_COUNT];
        for &i in passing {
            bits[i] = true;
        }
        IndicatorVector::from_bits(bits)
    }

    #[test]
    fn names_are_stable() {
        for (i, f) in FilterId::ALL.iter().enumerate() {
            assert_eq!(f.index(), i);
            assert_eq!(FilterId::from_name(f.name()), Some(*f));
            assert_eq!(FilterId::from_index(i), Some(*f));
        }
        assert_eq!(FilterId::from_index(14), None);
    }

    #[test]
    fn well_formed_sentence_passes_everything() {
        assert_eq!(eval("The cat sat on the mat."), IndicatorVector::ALL_PASS);
    }

    #[test]
    fn shouting_single_word() {
        assert_eq!(eval("HELLO"), mask_of(&[0, 2, 3, 4, 7, 11]));
    }

    #[test]
    fn empty_line_conventions() {
        assert_eq!(eval(""), mask_of(&[1, 2, 3, 4, 7]));
        // no alphabetic characters at all: vacuously not all-caps
        assert!(eval("123 456").get(FilterId::NoAllCaps));
        assert!(!eval("123 456").get(FilterId::HasFirstLetterCaps));
    }

    #[test]
    fn detector_filters_are_negated() {
        assert!(!eval("The the the the cat.").get(FilterId::WordRepetitionRatio));
        assert!(!eval("Price: 3 , 4 , 5 !").get(FilterId::DigitPunctuationRatio));
        assert!(!eval("The cat { sat }.").get(FilterId::NoSpecialCharacters));
        assert!(!eval("Enable JavaScript to view.").get(FilterId::JavascriptFlag));
        assert!(!eval("Lorem Ipsum dolor sit amet.").get(FilterId::JavascriptFlag));
    }

    #[test]
    fn thresholds_are_boundaries() {
        // 5 words, 1 repeat: ratio exactly 0.2 passes
        assert!(eval("one two three four one").get(FilterId::WordRepetitionRatio));
        // 4 words, 1 punctuation: ratio exactly 0.25 passes
        assert!(eval("one two three four.").get(FilterId::DigitPunctuationRatio));
        assert!(!eval("one two three.").get(FilterId::DigitPunctuationRatio));
        assert!(eval("a b c").get(FilterId::TokenCountGe3));
        assert!(!eval("a b").get(FilterId::TokenCountGe3));
        assert!(!eval("w w w").get(FilterId::WordCount3To256));
        assert!(eval("w x y z").get(FilterId::WordCount3To256));
        let long = vec!["word"; 256].join(" ");
        assert!(!eval(&long).get(FilterId::WordCount3To256));
        let long = vec!["word"; 255].join(" ");
        assert!(eval(&long).get(FilterId::WordCount3To256));
    }

    #[test]
    fn terminal_punctuation_set() {
        for end in [".", "!", "?", "\""] {
            assert!(eval(&format!("Done{end}  ")).get(FilterId::TerminalPunctuation));
        }
        assert!(!eval("Done;").get(FilterId::TerminalPunctuation));
        assert!(!eval("Done)").get(FilterId::TerminalPunctuation));
    }

    #[test]
    fn stop_words_count_occurrences() {
        assert!(eval("the the").get(FilterId::StopWordMatch2));
        assert!(eval("To be.").get(FilterId::StopWordMatch2));
        assert!(!eval("Those were there.").get(FilterId::StopWordMatch2));
    }

    #[test]
    fn custom_thresholds_change_profile() {
        let cfg = FilterConfig {
            max_word_repetition_ratio: 0.5,
            ..FilterConfig::default()
        };
        assert_ne!(cfg.profile(), FilterConfig::default().profile());
        let set = FilterSet::new(cfg);
        let ann = Annotator::default();
        let text = "The the the cat.";
        assert!(set.evaluate(text, &ann.annotate(text)).get(FilterId::WordRepetitionRatio));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn word_count_implies_token_count(text in "[A-Za-z0-9 .,!?'-]{0,80}") {
                let v = eval(&text);
                if v.get(FilterId::WordCount3To256) {
                    prop_assert!(v.get(FilterId::TokenCountGe3));
                }
                prop_assert_eq!(v, eval(&text));
            }

            #[test]
            fn appending_javascript_clears_flag(text in "[A-Za-z .,!?]{0,60}") {
                let before = eval(&text);
                let after = eval(&format!("{text} javascript"));
                prop_assert!(!after.get(FilterId::JavascriptFlag));
                prop_assert_eq!(
                    before.get(FilterId::NoSpecialCharacters),
                    after.get(FilterId::NoSpecialCharacters)
                );
                if text.chars().any(char::is_alphabetic) {
                    prop_assert_eq!(
                        before.get(FilterId::HasFirstLetterCaps),
                        after.get(FilterId::HasFirstLetterCaps)
                    );
                }
            }

            #[test]
            fn brace_clears_special_character_bit(text in "[A-Za-z .]{0,40}", at in 0usize..40) {
                let at = at.min(text.len());
                let mut s = text.clone();
                s.insert(at, '{');
                prop_assert!(!eval(&s).get(FilterId::NoSpecialCharacters));
            }
        }
    }
}
