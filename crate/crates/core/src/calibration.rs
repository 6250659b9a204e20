//! Filter weights from perplexity deltas.
//!
//! For each filter the weight is the relative perplexity reduction obtained by
//! evaluating only the lines that pass it, clamped below at zero:
//! `w = max(0, (ppl_all - ppl_subset) / ppl_all)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus_io::Line;
use crate::error::{Error, Result};
use crate::filters::{FilterId, IndicatorVector, FILTER_COUNT};
use crate::perplexity::{PerplexityBackend, PerplexityReport};
use crate::scoring::WeightVector;

const WEIGHTS_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterWeights {
    pub weights: [f64; FILTER_COUNT],
    pub ppl_all: f64,
    /// `None` for filters no line passed.
    pub ppl_per_filter: [Option<f64>; FILTER_COUNT],
    pub subset_sizes: [usize; FILTER_COUNT],
    pub corpus_profile: String,
    pub created_at: DateTime<Utc>,
}

/// Relative perplexity reduction, clamped to be non-negative.
pub fn filter_weight(ppl_all: f64, ppl_subset: f64) -> f64 {
    ((ppl_all - ppl_subset) / ppl_all).max(0.0)
}

/// Hashes line identities and text, in order.
pub fn corpus_fingerprint<'a, I>(lines: I) -> String
where
    I: IntoIterator<Item = &'a Line>,
{
    let mut h = Sha256::new();
    for line in lines {
        h.update(line.doc_id.as_bytes());
        h.update([0]);
        h.update(line.index.to_le_bytes());
        h.update(line.text.as_bytes());
        h.update([0]);
    }
    hex::encode(&h.finalize()[..16])
}

/// Computes filter weights. `filter_profile` identifies thresholds and
/// lexicon tables; it is folded into the recorded corpus profile.
pub fn calibrate<B>(
    lines: &[Line],
    indicators: &[IndicatorVector],
    backend: &B,
    filter_profile: &str,
) -> Result<FilterWeights>
where
    B: PerplexityBackend + ?Sized,
{
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if lines.len() != indicators.len() {
        return Err(Error::InvalidArgument(format!(
            "{} lines but {} indicator vectors",
            lines.len(),
            indicators.len()
        )));
    }

    let reports: Vec<PerplexityReport> = lines
        .par_iter()
        .map(|l| backend.score_line(l))
        .collect::<Result<_>>()?;

    let ppl_all = PerplexityReport::aggregate(&reports)?.ppl();

    let mut weights = [0.0; FILTER_COUNT];
    let mut ppl_per_filter = [None; FILTER_COUNT];
    let mut subset_sizes = [0; FILTER_COUNT];
    for id in FilterId::ALL {
        let i = id.index();
        let subset: Vec<&PerplexityReport> = reports
            .iter()
            .zip(indicators)
            .filter(|(_, v)| v.get(id))
            .map(|(r, _)| r)
            .collect();
        subset_sizes[i] = subset.len();
        match PerplexityReport::aggregate(subset) {
            Ok(r) => {
                let ppl = r.ppl();
                ppl_per_filter[i] = Some(ppl);
                weights[i] = filter_weight(ppl_all, ppl);
            }
            Err(_) => warn!("filter {id} selects no lines; weight set to 0"),
        }
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::DegenerateCalibration);
    }

    let mut h = Sha256::new();
    for part in [filter_profile, &backend.id(), &corpus_fingerprint(lines)] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    Ok(FilterWeights {
        weights,
        ppl_all,
        ppl_per_filter,
        subset_sizes,
        corpus_profile: hex::encode(&h.finalize()[..16]),
        created_at: Utc::now(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsFile {
    format_version: u32,
    corpus_profile: String,
    created_at: DateTime<Utc>,
    ppl_all: f64,
    filters: Vec<FilterEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FilterEntry {
    id: usize,
    name: String,
    weight: f64,
    ppl: Option<f64>,
    #[serde(default)]
    subset_lines: usize,
}

impl FilterWeights {
    pub fn vector(&self) -> Result<WeightVector> {
        WeightVector::new(self.weights)
    }

    pub fn to_json(&self) -> String {
        let file = WeightsFile {
            format_version: WEIGHTS_FORMAT,
            corpus_profile: self.corpus_profile.clone(),
            created_at: self.created_at,
            ppl_all: self.ppl_all,
            filters: FilterId::ALL
                .iter()
                .map(|id| FilterEntry {
                    id: id.index(),
                    name: id.name().to_string(),
                    weight: self.weights[id.index()],
                    ppl: self.ppl_per_filter[id.index()],
                    subset_lines: self.subset_sizes[id.index()],
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<FilterWeights> {
        let invalid = |field: &str, message: String| Error::InvalidWeights {
            field: field.to_string(),
            message,
        };
        let file: WeightsFile =
            serde_json::from_str(text).map_err(|e| invalid("<document>", e.to_string()))?;
        if file.format_version != WEIGHTS_FORMAT {
            return Err(invalid(
                "format_version",
                format!("unsupported version {}", file.format_version),
            ));
        }
        if !(file.ppl_all.is_finite() && file.ppl_all > 0.0) {
            return Err(invalid("ppl_all", format!("{} is not a positive number", file.ppl_all)));
        }
        let mut weights = [f64::NAN; FILTER_COUNT];
        let mut ppl_per_filter = [None; FILTER_COUNT];
        let mut subset_sizes = [0; FILTER_COUNT];
        let mut seen = [false; FILTER_COUNT];
        for entry in &file.filters {
            let id = FilterId::from_index(entry.id)
                .ok_or_else(|| invalid("filters.id", format!("unknown filter id {}", entry.id)))?;
            let field = format!("filters[{}]", id.name());
            if entry.name != id.name() {
                return Err(invalid(&field, format!("name {:?} does not match id {}", entry.name, entry.id)));
            }
            if seen[entry.id] {
                return Err(invalid(&field, "listed more than once".into()));
            }
            if !(0.0..=1.0).contains(&entry.weight) {
                return Err(invalid(
                    &format!("{field}.weight"),
                    format!("{} is outside [0, 1]", entry.weight),
                ));
            }
            seen[entry.id] = true;
            weights[entry.id] = entry.weight;
            ppl_per_filter[entry.id] = entry.ppl;
            subset_sizes[entry.id] = entry.subset_lines;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let name = FilterId::from_index(missing).expect("index in range").name();
            return Err(invalid(&format!("filters[{name}]"), "missing".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("filters.weight", "weights sum to zero".into()));
        }
        Ok(FilterWeights {
            weights,
            ppl_all: file.ppl_all,
            ppl_per_filter,
            subset_sizes,
            corpus_profile: file.corpus_profile,
            created_at: file.created_at,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<FilterWeights> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Human-readable summary of perplexities and weights.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "PPL_all = {:.4}", self.ppl_all);
        let _ = writeln!(out, "{:>2}  {:<30} {:>10} {:>12} {:>8}", "id", "filter", "lines", "PPL_i", "w_i");
        for id in FilterId::ALL {
            let i = id.index();
            let ppl = self.ppl_per_filter[i]
                .map(|p| format!("{p:.4}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:>2}  {:<30} {:>10} {:>12} {:>8.4}",
                i, id.name(), self.subset_sizes[i], ppl, self.weights[i]
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Backend returning fixed per-line reports keyed by line index.
    struct Fixed(Vec<PerplexityReport>);

    impl PerplexityBackend for Fixed {
        fn id(&self) -> String {
            "fixed".into()
        }
        fn score_line(&self, line: &Line) -> Result<PerplexityReport> {
            Ok(self.0[line.index])
        }
    }

    fn lines(n: usize) -> Vec<Line> {
        (0..n)
            .map(|i| Line { doc_id: "d".into(), index: i, text: format!("line {i}"), token_count: 2 })
            .collect()
    }

    fn mask(passing: &[usize]) -> IndicatorVector {
        let mut v = IndicatorVector::default();
        for &i in passing {
            v.set(FilterId::from_index(i).unwrap(), true);
        }
        v
    }

    #[test]
    fn weight_formula() {
        assert!((filter_weight(100.0, 90.0) - 0.1).abs() < 1e-15);
        assert_eq!(filter_weight(100.0, 120.0), 0.0);
        assert_eq!(filter_weight(100.0, 100.0), 0.0);
    }

    #[test]
    fn subset_perplexities_drive_weights() {
        // line 0 is easy (ppl 2), line 1 is hard (ppl 8)
        let backend = Fixed(vec![
            PerplexityReport::new(4, -4.0 * 2f64.ln()),
            PerplexityReport::new(4, -4.0 * 8f64.ln()),
        ]);
        let ind = vec![mask(&[0, 1, 2]), mask(&[1, 3])];
        let w = calibrate(&lines(2), &ind, &backend, "p").unwrap();
        assert!((w.ppl_all - 4.0).abs() < 1e-12);
        assert!((w.weights[0] - 0.5).abs() < 1e-12); // only the easy line
        assert_eq!(w.weights[1], 0.0); // every line: subset == corpus
        assert_eq!(w.ppl_per_filter[1], Some(w.ppl_all));
        assert_eq!(w.weights[3], 0.0); // hard line: clamped
        assert!((w.ppl_per_filter[3].unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(w.ppl_per_filter[5], None);
        assert_eq!(w.subset_sizes[1], 2);
        assert!(w.weights.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn degenerate_and_empty_inputs() {
        let backend = Fixed(vec![PerplexityReport::new(4, -4.0); 2]);
        let ind = vec![IndicatorVector::ALL_PASS; 2];
        assert!(matches!(
            calibrate(&lines(2), &ind, &backend, "p"),
            Err(Error::DegenerateCalibration)
        ));
        assert!(matches!(calibrate(&[], &[], &backend, "p"), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let backend = Fixed(vec![
            PerplexityReport::new(3, -1.234567891234),
            PerplexityReport::new(5, -9.87654321),
        ]);
        let ind = vec![mask(&[0, 4]), mask(&[4, 7])];
        let w = calibrate(&lines(2), &ind, &backend, "p").unwrap();
        let back = FilterWeights::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);

        let tampered = w.to_json().replacen(
            &format!("\"weight\": {}", serde_json::to_string(&w.weights[0]).unwrap()),
            "\"weight\": -0.1",
            1,
        );
        let err = FilterWeights::from_json(&tampered).unwrap_err();
        assert!(err.to_string().contains("has_first_letter_caps"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&w.to_json()).unwrap();
        v["filters"].as_array_mut().unwrap().remove(13);
        let err = FilterWeights::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("text_complexity_c1"), "{err}");
    }

    #[test]
    fn calibration_is_deterministic() {
        let backend = Fixed((0..6).map(|i| PerplexityReport::new(3 + i, -(i as f64) - 1.5)).collect());
        let ind: Vec<_> = (0..6).map(|i| IndicatorVector::from_mask(0x1234 >> i)).collect();
        let a = calibrate(&lines(6), &ind, &backend, "p").unwrap();
        let b = calibrate(&lines(6), &ind, &backend, "p").unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.corpus_profile, b.corpus_profile);
        let c = calibrate(&lines(6), &ind, &backend, "other").unwrap();
        assert_ne!(a.corpus_profile, c.corpus_profile);
    }
}
