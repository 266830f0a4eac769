//! Word-level, speaker-annotated transcripts.
//!
//! Words are kept sorted by end time (ties broken by begin time, then by
//! input order). Virtual channels are assigned by toggling between channel 0
//! and 1 whenever two adjacent words have different speakers.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TranscriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid word {word:?}: {message}")]
    Validation {
        line: usize,
        word: String,
        message: String,
    },
    #[error("transcript has no words")]
    Empty,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptFormat {
    Jsonl,
    Ctm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    #[serde(rename = "w")]
    pub text: String,
    #[serde(rename = "b")]
    pub begin: f64,
    #[serde(rename = "e")]
    pub end: f64,
    #[serde(rename = "spk")]
    pub speaker: String,
}

impl TimedWord {
    pub fn new(text: impl Into<String>, begin: f64, end: f64, speaker: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            begin,
            end,
            speaker: speaker.into(),
        }
    }

    fn check(&self) -> Result<(), String> {
        if !self.begin.is_finite() || !self.end.is_finite() {
            return Err("times must be finite".into());
        }
        if self.begin < 0.0 {
            return Err(format!("negative begin time {}", self.begin));
        }
        if self.end <= self.begin {
            return Err(format!("end {} is not after begin {}", self.end, self.begin));
        }
        Ok(())
    }
}

/// Orders words by end time, then begin time. Callers use a stable sort so
/// that remaining ties keep input order.
pub fn end_time_order(a_begin: f64, a_end: f64, b_begin: f64, b_end: f64) -> Ordering {
    a_end.total_cmp(&b_end).then(a_begin.total_cmp(&b_begin))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    recording_id: String,
    words: Vec<TimedWord>,
    duration: f64,
}

impl Transcript {
    /// Validates and end-sorts `words`. The duration is raised to the last
    /// word end when it is missing or shorter.
    pub fn new(
        recording_id: impl Into<String>,
        mut words: Vec<TimedWord>,
        duration: Option<f64>,
    ) -> Result<Self, TranscriptError> {
        for w in &words {
            w.check().map_err(|message| TranscriptError::Validation {
                line: 0,
                word: w.text.clone(),
                message,
            })?;
        }
        words.sort_by(|a, b| end_time_order(a.begin, a.end, b.begin, b.end));
        let max_end = words.iter().map(|w| w.end).fold(0.0, f64::max);
        let duration = match duration {
            Some(d) if d.is_finite() => d.max(max_end),
            Some(d) => {
                return Err(TranscriptError::InvalidArgument(format!("invalid duration {d}")))
            }
            None => max_end,
        };
        Ok(Self {
            recording_id: recording_id.into(),
            words,
            duration,
        })
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn words(&self) -> &[TimedWord] {
        &self.words
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// End time of the last word (the largest end time).
    pub fn last_end(&self) -> Option<f64> {
        self.words.last().map(|w| w.end)
    }
}

/// Virtual channel index (0 or 1) for each end-sorted word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelAssignment {
    channels: Vec<u8>,
}

impl ChannelAssignment {
    /// Wraps externally produced channel labels. Every label must be 0 or 1.
    pub fn from_channels(channels: Vec<u8>) -> Result<Self, TranscriptError> {
        if let Some(c) = channels.iter().find(|&&c| c > 1) {
            return Err(TranscriptError::InvalidArgument(format!("channel {c} out of range")));
        }
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[u8] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

/// Toggle rule over a speaker sequence already in end-time order.
pub fn toggle_channels<'a, I>(speakers: I) -> Vec<u8>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = Vec::new();
    let mut prev: Option<&str> = None;
    let mut c = 0u8;
    for spk in speakers {
        if let Some(p) = prev {
            if p != spk {
                c = 1 - c;
            }
        }
        out.push(c);
        prev = Some(spk);
    }
    out
}

pub fn assign_channels(t: &Transcript) -> Result<ChannelAssignment, TranscriptError> {
    if t.is_empty() {
        return Err(TranscriptError::Empty);
    }
    Ok(ChannelAssignment {
        channels: toggle_channels(t.words.iter().map(|w| w.speaker.as_str())),
    })
}

/// Maximal speech regions (union of all word intervals), merged across gaps
/// no longer than `max_gap`. Returned as `(begin, end)` sorted by begin.
pub fn speech_regions(words: &[TimedWord], max_gap: f64) -> Vec<(f64, f64)> {
    let mut spans: Vec<(f64, f64)> = words.iter().map(|w| (w.begin, w.end)).collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut regions: Vec<(f64, f64)> = Vec::new();
    for (b, e) in spans {
        match regions.last_mut() {
            Some(last) if b - last.1 <= max_gap => last.1 = last.1.max(e),
            _ => regions.push((b, e)),
        }
    }
    regions
}

/// Splits a transcript wherever the silence between consecutive speech
/// regions exceeds `threshold`. Segments keep absolute times and are named
/// `<recording_id>_<k>` with a zero-padded index.
pub fn segment_by_silence(t: &Transcript, threshold: f64) -> Result<Vec<Transcript>, TranscriptError> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(TranscriptError::InvalidArgument(format!(
            "silence threshold must be positive, got {threshold}"
        )));
    }
    if t.is_empty() {
        return Ok(Vec::new());
    }
    let regions = speech_regions(&t.words, threshold);
    if regions.len() == 1 {
        return Ok(vec![t.clone()]);
    }
    let mut buckets: Vec<Vec<TimedWord>> = vec![Vec::new(); regions.len()];
    for w in &t.words {
        // last region starting at or before the word begin
        let k = regions.partition_point(|r| r.0 <= w.begin) - 1;
        buckets[k].push(w.clone());
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(k, words)| {
            let duration = words.iter().map(|w| w.end).fold(0.0, f64::max);
            Transcript {
                recording_id: format!("{}_{k:03}", t.recording_id),
                words,
                duration,
            }
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    #[serde(alias = "sample_id")]
    recording_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
    words: Vec<TimedWord>,
}

/// Parses one or more recordings. JSONL holds one recording per line; CTM
/// holds one word per line (`id channel begin duration word speaker`) and is
/// grouped by recording id in order of first appearance.
pub fn parse_transcripts(input: &[u8], format: TranscriptFormat) -> Result<Vec<Transcript>, TranscriptError> {
    let text = std::str::from_utf8(input).map_err(|e| TranscriptError::Parse {
        line: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    match format {
        TranscriptFormat::Jsonl => parse_jsonl(text),
        TranscriptFormat::Ctm => parse_ctm(text),
    }
}

fn validate_words(words: &[TimedWord], line: usize) -> Result<(), TranscriptError> {
    for w in words {
        w.check().map_err(|message| TranscriptError::Validation {
            line,
            word: w.text.clone(),
            message,
        })?;
    }
    Ok(())
}

fn parse_jsonl(text: &str) -> Result<Vec<Transcript>, TranscriptError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| TranscriptError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        validate_words(&rec.words, line_no)?;
        let t = Transcript::new(rec.recording_id, rec.words, rec.duration).map_err(|e| match e {
            TranscriptError::InvalidArgument(message) => TranscriptError::Parse { line: line_no, message },
            other => other,
        })?;
        out.push(t);
    }
    Ok(out)
}

fn parse_ctm(text: &str) -> Result<Vec<Transcript>, TranscriptError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<TimedWord>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(";;") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(TranscriptError::Parse {
                line: line_no,
                message: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| TranscriptError::Parse {
                line: line_no,
                message: format!("invalid {what} {s:?}"),
            })
        };
        let begin = num(fields[2], "begin time")?;
        let dur = num(fields[3], "duration")?;
        let word = TimedWord::new(fields[4], begin, begin + dur, fields[5]);
        validate_words(std::slice::from_ref(&word), line_no)?;
        let id = fields[0].to_string();
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(word);
    }
    order
        .into_iter()
        .map(|id| {
            let words = groups.remove(&id).unwrap_or_default();
            Transcript::new(id, words, None)
        })
        .collect()
}

/// Writes transcripts in the canonical JSONL form.
pub fn write_jsonl(transcripts: &[Transcript]) -> String {
    let mut out = String::new();
    for t in transcripts {
        let rec = JsonlRecord {
            recording_id: t.recording_id.clone(),
            duration: Some(t.duration),
            words: t.words.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("transcript serializes"));
        out.push('\n');
    }
    out
}
