use std::io::Write;

use qscore::corpus_io::read_scores;
use qscore::pipeline::score_file;
use qscore::{FilterWeights, PipelineConfig, FILTER_COUNT};

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

#[test]
fn scoring_streams_large_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("big.jsonl");
    let docs = 100_000;
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&corpus).unwrap());
        for d in 0..docs {
            writeln!(
                out,
                "{{\"id\":\"d{d}\",\"text\":\"The cat number {d} sat on the mat. It saw a dog near the old house and left.\\nclick {{here}} {d}\"}}"
            )
            .unwrap();
        }
    }
    let weights = dir.path().join("w.json");
    FilterWeights {
        weights: [1.0; FILTER_COUNT],
        ppl_all: 10.0,
        ppl_per_filter: [Some(9.0); FILTER_COUNT],
        subset_sizes: [1; FILTER_COUNT],
        corpus_profile: "test".into(),
        created_at: chrono::DateTime::from_timestamp(0, 0).unwrap(),
    }
    .save(&weights)
    .unwrap();

    let before = peak_rss_kib();
    let cfg = PipelineConfig {
        threads: 2,
        ..PipelineConfig::default()
    };
    let out = dir.path().join("scores.jsonl");
    let summary = score_file(&corpus, &cfg, &weights, &out).unwrap();
    let after = peak_rss_kib();
    assert_eq!(summary.documents, docs);
    assert_eq!(summary.lines, 3 * docs);

    let input_kib = std::fs::metadata(&corpus).unwrap().len() / 1024;
    let output_kib = std::fs::metadata(&out).unwrap().len() / 1024;
    if let (Some(b), Some(a)) = (before, after) {
        // reading the id set is the only per-document state that is kept
        let growth = a.saturating_sub(b);
        assert!(
            growth < (input_kib + output_kib) / 3,
            "peak RSS grew {growth} KiB for {input_kib} KiB in, {output_kib} KiB out"
        );
    }
    drop(read_scores(&out).unwrap());
}
