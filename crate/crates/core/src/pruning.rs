//! Percentile pruning on document scores and the seeded train/validation split.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::ScoreRecord;

/// `floor(n * fraction)`, tolerant of representation error in `fraction`
/// (so that e.g. `10 * 0.2` is 2, never 1).
fn floor_fraction(n: usize, fraction: f64) -> usize {
    let x = n as f64 * fraction;
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest as usize
    } else {
        x.floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSpec {
    keep_top_percent: f64,
}

impl PruneSpec {
    pub fn new(keep_top_percent: f64) -> Result<Self> {
        if !(keep_top_percent > 0.0 && keep_top_percent <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "keep-top-percent must be in (0, 100], got {keep_top_percent}"
            )));
        }
        Ok(Self { keep_top_percent })
    }

    pub fn keep_top_percent(&self) -> f64 {
        self.keep_top_percent
    }

    pub fn retain_count(&self, n: usize) -> usize {
        floor_fraction(n, self.keep_top_percent / 100.0)
    }
}

/// Which documents survive pruning, indexed by corpus position.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub keep: Vec<bool>,
    pub retained_count: usize,
    /// Minimum retained document score.
    pub threshold_score: f64,
}

impl Selection {
    pub fn retained_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.keep.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i)
    }
}

/// Selects the top documents by score. `corpus_ids` gives the corpus order,
/// which also breaks ties (earlier position wins).
pub fn prune(scores: &[ScoreRecord], corpus_ids: &[String], spec: &PruneSpec) -> Result<Selection> {
    let by_id: HashMap<&str, f64> = scores
        .iter()
        .map(|r| (r.doc_id.as_str(), r.doc_score))
        .collect();

    let mut offenders = Vec::new();
    let mut offender_count = 0;
    let mut note = |id: &str| {
        offender_count += 1;
        if offenders.len() < 10 {
            offenders.push(id.to_string());
        }
    };
    let mut doc_scores = Vec::with_capacity(corpus_ids.len());
    for id in corpus_ids {
        match by_id.get(id.as_str()) {
            Some(s) => doc_scores.push(*s),
            None => note(id),
        }
    }
    let known: HashSet<&str> = corpus_ids.iter().map(String::as_str).collect();
    for r in scores {
        if !known.contains(r.doc_id.as_str()) {
            note(&r.doc_id);
        }
    }
    if offender_count > 0 {
        return Err(Error::IdMismatch {
            count: offender_count,
            first: offenders,
        });
    }

    let k = spec.retain_count(corpus_ids.len());
    if k == 0 {
        return Err(Error::EmptyPrune);
    }
    let mut order: Vec<usize> = (0..doc_scores.len()).collect();
    // stable sort keeps input order among equal scores
    order.sort_by(|&a, &b| doc_scores[b].total_cmp(&doc_scores[a]));
    let mut keep = vec![false; doc_scores.len()];
    for &i in &order[..k] {
        keep[i] = true;
    }
    Ok(Selection {
        keep,
        retained_count: k,
        threshold_score: doc_scores[order[k - 1]],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub retained_count: usize,
    pub dropped_count: usize,
    pub threshold_score: f64,
    pub keep_top_percent: f64,
    pub retained_ids_path: String,
    pub dropped_ids_path: String,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Validation set membership by corpus position.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub is_validation: Vec<bool>,
    pub validation_count: usize,
}

/// Samples `floor(n * fraction)` documents for validation with a seeded RNG.
pub fn split(n: usize, validation_fraction: f64, seed: u64) -> Result<Split> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must be in (0, 1), got {validation_fraction}"
        )));
    }
    let v = floor_fraction(n, validation_fraction);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut is_validation = vec![false; n];
    for &i in &idx[..v] {
        is_validation[i] = true;
    }
    Ok(Split {
        is_validation,
        validation_count: v,
    })
}
