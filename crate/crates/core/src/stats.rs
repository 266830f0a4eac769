//! Corpus-level overlap statistics and real-vs-simulated comparison.
//!
//! `overlap_ratio` is the duration where at least two speakers talk at once
//! divided by the duration of the union of all speech.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{consecutive_one, decode_tokens, discretize_time, DiscretizeError};
use crate::transcript::{assign_channels, speech_regions, Transcript};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no words in the input corpus")]
    Empty,
    #[error("invalid discretization unit {0}")]
    InvalidUnit(f64),
    #[error("reports use different units ({real} vs {sim})")]
    UnitMismatch { real: f64, sim: f64 },
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub d: f64,
    pub recordings: usize,
    /// Sum over speakers of each speaker's own talk time.
    pub total_speech: f64,
    /// Duration of the union of all speech.
    pub speech_union: f64,
    /// Duration where two or more speakers are active.
    pub overlapped_speech: f64,
    pub overlap_ratio: f64,
    /// Counts of time-based tokens 0..=3.
    pub token_histogram: [u64; 4],
    /// Per channel: run length in windows -> count.
    pub run_length_histograms: [BTreeMap<usize, u64>; 2],
    /// Silence between speech regions, in whole windows -> count.
    pub silence_gap_histogram: BTreeMap<usize, u64>,
}

struct RecordingStats {
    total_speech: f64,
    speech_union: f64,
    overlapped: f64,
    tokens: [u64; 4],
    runs: [BTreeMap<usize, u64>; 2],
    gaps: BTreeMap<usize, u64>,
}

fn merge_spans(mut spans: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (b, e) in spans {
        match merged.last_mut() {
            Some(last) if b <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((b, e)),
        }
    }
    merged
}

fn recording_stats(t: &Transcript, d: f64) -> Result<RecordingStats, StatsError> {
    let mut per_speaker: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for w in t.words() {
        per_speaker.entry(w.speaker.as_str()).or_default().push((w.begin, w.end));
    }
    let mut events: Vec<(f64, i32)> = Vec::new();
    let mut total_speech = 0.0;
    for spans in per_speaker.into_values() {
        for (b, e) in merge_spans(spans) {
            total_speech += e - b;
            events.push((b, 1));
            events.push((e, -1));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut active, mut prev, mut overlapped, mut union) = (0, 0.0, 0.0, 0.0);
    for (time, delta) in events {
        if active >= 1 {
            union += time - prev;
        }
        if active >= 2 {
            overlapped += time - prev;
        }
        active += delta;
        prev = time;
    }

    let channels = assign_channels(t).map_err(|_| StatsError::Empty)?;
    let tokens_seq = discretize_time(t, &channels, d)?;
    let mut tokens = [0u64; 4];
    for &x in tokens_seq.tokens() {
        tokens[x as usize] += 1;
    }
    let mut runs: [BTreeMap<usize, u64>; 2] = Default::default();
    for r in consecutive_one(&decode_tokens(&tokens_seq)) {
        *runs[r.channel as usize].entry(r.len()).or_default() += 1;
    }
    let mut gaps = BTreeMap::new();
    for pair in speech_regions(t.words(), 0.0).windows(2) {
        let gap = pair[1].0 - pair[0].1;
        *gaps.entry((gap / d).floor() as usize).or_default() += 1;
    }
    Ok(RecordingStats {
        total_speech,
        speech_union: union,
        overlapped,
        tokens,
        runs,
        gaps,
    })
}

/// Sum that does not depend on the order of the inputs.
fn order_free_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.into_iter().sum()
}

/// Aggregates statistics over a corpus. Recordings without words are
/// skipped.
pub fn compute_stats(annotations: &[Transcript], d: f64) -> Result<OverlapStats, StatsError> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(StatsError::InvalidUnit(d));
    }
    let per: Vec<RecordingStats> = annotations
        .par_iter()
        .filter(|t| !t.is_empty())
        .map(|t| recording_stats(t, d))
        .collect::<Result<_, _>>()?;
    if per.is_empty() {
        return Err(StatsError::Empty);
    }
    let total_speech = order_free_sum(per.iter().map(|r| r.total_speech).collect());
    let speech_union = order_free_sum(per.iter().map(|r| r.speech_union).collect());
    let overlapped_speech = order_free_sum(per.iter().map(|r| r.overlapped).collect());
    let mut token_histogram = [0u64; 4];
    let mut run_length_histograms: [BTreeMap<usize, u64>; 2] = Default::default();
    let mut silence_gap_histogram = BTreeMap::new();
    for r in &per {
        for (acc, x) in token_histogram.iter_mut().zip(r.tokens) {
            *acc += x;
        }
        for (acc, runs) in run_length_histograms.iter_mut().zip(&r.runs) {
            for (&len, &n) in runs {
                *acc.entry(len).or_default() += n;
            }
        }
        for (&g, &n) in &r.gaps {
            *silence_gap_histogram.entry(g).or_default() += n;
        }
    }
    let overlap_ratio = if speech_union > 0.0 {
        (overlapped_speech / speech_union).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(OverlapStats {
        d,
        recordings: per.len(),
        total_speech,
        speech_union,
        overlapped_speech,
        overlap_ratio,
        token_histogram,
        run_length_histograms,
        silence_gap_histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub field: String,
    pub real: f64,
    pub sim: f64,
    pub abs_diff: f64,
    /// `|sim - real| / |real|`; `None` when `real` is 0.
    pub rel_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsComparison {
    pub d: f64,
    pub fields: Vec<FieldDiff>,
    pub token_tv_distance: f64,
    pub token_distribution_real: [f64; 4],
    pub token_distribution_sim: [f64; 4],
}

fn normalized(h: &[u64; 4]) -> [f64; 4] {
    let total: u64 = h.iter().sum();
    if total == 0 {
        return [0.0; 4];
    }
    h.map(|x| x as f64 / total as f64)
}

/// Total-variation distance between two token histograms. An empty
/// histogram is at distance 1 from a non-empty one and 0 from another empty
/// one.
pub fn tv_distance(a: &[u64; 4], b: &[u64; 4]) -> f64 {
    match (a.iter().sum::<u64>(), b.iter().sum::<u64>()) {
        (0, 0) => 0.0,
        (0, _) | (_, 0) => 1.0,
        _ => {
            let (p, q) = (normalized(a), normalized(b));
            0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>()
        }
    }
}

pub fn compare_stats(real: &OverlapStats, sim: &OverlapStats) -> Result<StatsComparison, StatsError> {
    if (real.d - sim.d).abs() > 1e-9 {
        return Err(StatsError::UnitMismatch { real: real.d, sim: sim.d });
    }
    let field = |name: &str, r: f64, s: f64| FieldDiff {
        field: name.to_string(),
        real: r,
        sim: s,
        abs_diff: (s - r).abs(),
        rel_diff: (r != 0.0).then(|| (s - r).abs() / r.abs()),
    };
    let (pr, ps) = (normalized(&real.token_histogram), normalized(&sim.token_histogram));
    let mut fields = vec![
        field("total_speech", real.total_speech, sim.total_speech),
        field("speech_union", real.speech_union, sim.speech_union),
        field("overlapped_speech", real.overlapped_speech, sim.overlapped_speech),
        field("overlap_ratio", real.overlap_ratio, sim.overlap_ratio),
    ];
    for (i, (r, s)) in pr.iter().zip(&ps).enumerate() {
        fields.push(field(&format!("token_share_{i}"), *r, *s));
    }
    Ok(StatsComparison {
        d: real.d,
        fields,
        token_tv_distance: tv_distance(&real.token_histogram, &sim.token_histogram),
        token_distribution_real: pr,
        token_distribution_sim: ps,
    })
}
