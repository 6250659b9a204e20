//! Score distribution summaries for plotting.

use serde::Serialize;

pub const HISTOGRAM_BINS: usize = 20;
pub const QUANTILE_LEVELS: [f64; 11] = [0.0, 0.05, 0.1, 0.2, 0.25, 0.4, 0.5, 0.6, 0.75, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Fixed-width bins over [0, 1]; the last bin is closed on the right.
/// Values outside [0, 1] are clamped into the end bins.
pub fn histogram(values: &[f64]) -> Histogram {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &v in values {
        let bin = ((v * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    Histogram {
        bin_edges: (0..=HISTOGRAM_BINS)
            .map(|i| i as f64 / HISTOGRAM_BINS as f64)
            .collect(),
        counts,
    }
}

/// Linear interpolation between closest ranks. Returns `None` for empty input.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantile {
    pub q: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    pub histogram: Histogram,
    pub quantiles: Vec<Quantile>,
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = QUANTILE_LEVELS
        .iter()
        .filter_map(|&q| quantile(&sorted, q).map(|value| Quantile { q, value }))
        .collect();
    Summary {
        count: values.len(),
        mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        histogram: histogram(values),
        quantiles,
    }
}
