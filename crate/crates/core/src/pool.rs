//! Pool of single-talker segments used as mixing material.
//!
//! Source utterances with word timings are cut at internal silences, a
//! subset is drawn, and the result is indexed by duration and by word count
//! for nearest-match sampling.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{read_wav, AudioBuffer, AudioError};

pub const DEFAULT_POOL_SIZE: usize = 10_000;
pub const DEFAULT_SILENCE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_PADDING: f64 = 0.05;

// Durations closer than this are treated as equally near.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("source corpus is empty")]
    EmptySource,
    #[error("pool is empty")]
    EmptyPool,
    #[error("no utterance in the pool has word timings")]
    MissingWordTimings,
    #[error("invalid utterance {id}: {message}")]
    InvalidUtterance { id: String, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("audio for {id}: {source}")]
    Audio {
        id: String,
        #[source]
        source: AudioError,
    },
}

/// A word inside an utterance, times relative to the utterance start.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolWord {
    pub text: String,
    pub begin: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AudioRef {
    /// A whole WAV file.
    File(PathBuf),
    /// `[start, end)` seconds of a WAV file.
    FileSpan { path: PathBuf, start: f64, end: f64 },
    Inline(Arc<AudioBuffer>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utterance_id: String,
    pub audio: AudioRef,
    pub duration: f64,
    pub words: Option<Vec<PoolWord>>,
    /// Transcript text, used when word timings are absent.
    pub text: Option<String>,
    pub speaker_label: String,
}

impl Utterance {
    pub fn validate(&self) -> Result<(), PoolError> {
        let bad = |message: String| PoolError::InvalidUtterance {
            id: self.utterance_id.clone(),
            message,
        };
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(bad(format!("duration must be positive, got {}", self.duration)));
        }
        if let Some(words) = &self.words {
            let mut prev_end = 0.0;
            for w in words {
                if !(w.begin >= 0.0 && w.end > w.begin && w.end <= self.duration + TIE_EPS) {
                    return Err(bad(format!(
                        "word {:?} [{}, {}) outside [0, {}] or degenerate",
                        w.text, w.begin, w.end, self.duration
                    )));
                }
                if w.begin < prev_end - TIE_EPS {
                    return Err(bad(format!("word {:?} is out of order", w.text)));
                }
                prev_end = w.end;
            }
        }
        Ok(())
    }

    pub fn word_count(&self) -> Option<usize> {
        self.words.as_ref().map(Vec::len)
    }

    pub fn load_audio(&self) -> Result<AudioBuffer, PoolError> {
        let wrap = |source| PoolError::Audio {
            id: self.utterance_id.clone(),
            source,
        };
        match &self.audio {
            AudioRef::Inline(buf) => Ok(buf.as_ref().clone()),
            AudioRef::File(path) => read_wav(path).map_err(wrap),
            AudioRef::FileSpan { path, start, end } => Ok(read_wav(path).map_err(wrap)?.slice_seconds(*start, *end)),
        }
    }

    /// Cuts the utterance at silences longer than `threshold`. Each piece
    /// spans its words plus `padding` on both sides (clamped to the
    /// utterance), and word times are re-based to the piece start.
    /// Utterances without word timings, or without such a silence, come back
    /// unchanged.
    pub fn split_at_silences(&self, threshold: f64, padding: f64) -> Vec<Utterance> {
        let Some(words) = self.words.as_ref().filter(|w| !w.is_empty()) else {
            return vec![self.clone()];
        };
        let mut groups: Vec<&[PoolWord]> = Vec::new();
        let mut start = 0;
        let mut reach = words[0].end;
        for i in 1..words.len() {
            if words[i].begin - reach > threshold {
                groups.push(&words[start..i]);
                start = i;
            }
            reach = reach.max(words[i].end);
        }
        groups.push(&words[start..]);
        if groups.len() == 1 {
            return vec![self.clone()];
        }
        groups
            .into_iter()
            .enumerate()
            .map(|(k, group)| {
                let seg_start = (group[0].begin - padding).max(0.0);
                let last_end = group.iter().map(|w| w.end).fold(0.0, f64::max);
                let seg_end = (last_end + padding).min(self.duration);
                let audio = match &self.audio {
                    AudioRef::Inline(buf) => AudioRef::Inline(Arc::new(buf.slice_seconds(seg_start, seg_end))),
                    AudioRef::File(path) => AudioRef::FileSpan {
                        path: path.clone(),
                        start: seg_start,
                        end: seg_end,
                    },
                    AudioRef::FileSpan { path, start, .. } => AudioRef::FileSpan {
                        path: path.clone(),
                        start: start + seg_start,
                        end: start + seg_end,
                    },
                };
                Utterance {
                    utterance_id: format!("{}_{k:03}", self.utterance_id),
                    audio,
                    duration: seg_end - seg_start,
                    words: Some(
                        group
                            .iter()
                            .map(|w| PoolWord {
                                text: w.text.clone(),
                                begin: w.begin - seg_start,
                                end: w.end - seg_start,
                            })
                            .collect(),
                    ),
                    text: None,
                    speaker_label: self.speaker_label.clone(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolConfig {
    pub pool_size: usize,
    pub silence_threshold: f64,
    pub padding: f64,
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            pool_size: DEFAULT_POOL_SIZE,
            silence_threshold: DEFAULT_SILENCE_THRESHOLD,
            padding: DEFAULT_PADDING,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UtterancePool {
    utterances: Vec<Utterance>,
    /// Positions sorted by (duration, id).
    by_duration: Vec<usize>,
    /// Positions of utterances with word timings, sorted by (word count, id).
    by_word_count: Vec<usize>,
}

impl UtterancePool {
    /// Indexes the given utterances as-is (no splitting or subsampling).
    pub fn from_utterances(utterances: Vec<Utterance>) -> Result<Self, PoolError> {
        if utterances.is_empty() {
            return Err(PoolError::EmptyPool);
        }
        for u in &utterances {
            u.validate()?;
        }
        let mut by_duration: Vec<usize> = (0..utterances.len()).collect();
        by_duration.sort_by(|&a, &b| {
            let (ua, ub) = (&utterances[a], &utterances[b]);
            ua.duration
                .total_cmp(&ub.duration)
                .then_with(|| ua.utterance_id.cmp(&ub.utterance_id))
        });
        let mut by_word_count: Vec<usize> = (0..utterances.len())
            .filter(|&i| utterances[i].words.as_ref().is_some_and(|w| !w.is_empty()))
            .collect();
        by_word_count.sort_by(|&a, &b| {
            let (ua, ub) = (&utterances[a], &utterances[b]);
            ua.word_count()
                .cmp(&ub.word_count())
                .then_with(|| ua.utterance_id.cmp(&ub.utterance_id))
        });
        Ok(Self {
            utterances,
            by_duration,
            by_word_count,
        })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn has_word_timings(&self) -> bool {
        !self.by_word_count.is_empty()
    }

    pub fn duration_index(&self) -> &[usize] {
        &self.by_duration
    }

    pub fn word_count_index(&self) -> &[usize] {
        &self.by_word_count
    }

    pub fn uniform_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Utterance {
        &self.utterances[rng.random_range(0..self.utterances.len())]
    }

    /// Uniform choice among utterances with duration in `[d_min, d_max]`;
    /// otherwise the utterance closest to the interval midpoint (ties go to
    /// the shorter one, then the smaller id).
    pub fn duration_nearest_sample<R: Rng + ?Sized>(&self, d_min: f64, d_max: f64, rng: &mut R) -> &Utterance {
        let dur = |pos: usize| self.utterances[self.by_duration[pos]].duration;
        let n = self.by_duration.len();
        let lo = self.by_duration.partition_point(|&i| self.utterances[i].duration < d_min);
        let hi = self.by_duration.partition_point(|&i| self.utterances[i].duration <= d_max);
        if hi > lo {
            return &self.utterances[self.by_duration[rng.random_range(lo..hi)]];
        }
        let mid = (d_min + d_max) / 2.0;
        // `lo == hi`: candidates are the group just below and the group just above
        let below = (lo > 0).then(|| {
            let d = dur(lo - 1);
            self.by_duration[..lo].partition_point(|&i| self.utterances[i].duration < d)
        });
        let above = (hi < n).then_some(hi);
        let pick = match (below, above) {
            (Some(b), Some(a)) => {
                let db = (mid - dur(b)).abs();
                let da = (dur(a) - mid).abs();
                if db <= da + TIE_EPS {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("pool is non-empty"),
        };
        &self.utterances[self.by_duration[pick]]
    }

    /// Uniform choice among utterances with exactly `n_words` words;
    /// otherwise the closest word count (ties go to the smaller count, then
    /// the smaller id).
    pub fn word_count_nearest_sample<R: Rng + ?Sized>(&self, n_words: usize, rng: &mut R) -> Result<&Utterance, PoolError> {
        if self.by_word_count.is_empty() {
            return Err(PoolError::MissingWordTimings);
        }
        let count = |pos: usize| self.utterances[self.by_word_count[pos]].word_count().unwrap_or(0);
        let idx = &self.by_word_count;
        let lo = idx.partition_point(|&i| self.utterances[i].word_count().unwrap_or(0) < n_words);
        let hi = idx.partition_point(|&i| self.utterances[i].word_count().unwrap_or(0) <= n_words);
        if hi > lo {
            return Ok(&self.utterances[idx[rng.random_range(lo..hi)]]);
        }
        let below = (lo > 0).then(|| {
            let c = count(lo - 1);
            idx[..lo].partition_point(|&i| self.utterances[i].word_count().unwrap_or(0) < c)
        });
        let above = (hi < idx.len()).then_some(hi);
        let pick = match (below, above) {
            (Some(b), Some(a)) => {
                if n_words - count(b) <= count(a) - n_words {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("index is non-empty"),
        };
        Ok(&self.utterances[idx[pick]])
    }
}

/// Splits every source utterance at long silences, then keeps `pool_size`
/// segments drawn uniformly without replacement (all of them if fewer),
/// in source order.
pub fn build_pool(source: &[Utterance], config: &PoolConfig) -> Result<UtterancePool, PoolError> {
    if source.is_empty() {
        return Err(PoolError::EmptySource);
    }
    if config.pool_size == 0 {
        return Err(PoolError::InvalidArgument("pool size must be at least 1".into()));
    }
    if config.silence_threshold.is_nan() || config.silence_threshold <= 0.0 || config.padding.is_nan() || config.padding < 0.0 {
        return Err(PoolError::InvalidArgument(format!(
            "silence threshold must be positive and padding non-negative (got {}, {})",
            config.silence_threshold, config.padding
        )));
    }
    for u in source {
        u.validate()?;
    }
    let segments: Vec<Utterance> = source
        .iter()
        .flat_map(|u| u.split_at_silences(config.silence_threshold, config.padding))
        .collect();
    let chosen = if segments.len() <= config.pool_size {
        segments
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut picks = index::sample(&mut rng, segments.len(), config.pool_size).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| segments[i].clone()).collect()
    };
    UtterancePool::from_utterances(chosen)
}

#[derive(Serialize, Deserialize)]
struct ManifestRecord {
    utterance_id: String,
    audio: String,
    duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    words: Option<Vec<(String, f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    speaker_label: String,
}

/// Parses a pool (or source corpus) manifest. Relative audio paths are
/// resolved against `base_dir`.
pub fn parse_manifest(input: &[u8], base_dir: &Path) -> Result<Vec<Utterance>, PoolError> {
    let text = std::str::from_utf8(input).map_err(|e| PoolError::Parse {
        line: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| PoolError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let path = PathBuf::from(&rec.audio);
        let u = Utterance {
            utterance_id: rec.utterance_id,
            audio: AudioRef::File(if path.is_absolute() { path } else { base_dir.join(path) }),
            duration: rec.duration,
            words: rec.words.map(|ws| {
                ws.into_iter()
                    .map(|(text, begin, end)| PoolWord { text, begin, end })
                    .collect()
            }),
            text: rec.text,
            speaker_label: rec.speaker_label,
        };
        u.validate().map_err(|e| PoolError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(u);
    }
    Ok(out)
}

/// Writes one manifest line per utterance; `audio_path` supplies the path
/// recorded for each utterance.
pub fn write_manifest<F>(utterances: &[Utterance], mut audio_path: F) -> String
where
    F: FnMut(&Utterance) -> String,
{
    let mut out = String::new();
    for u in utterances {
        let rec = ManifestRecord {
            utterance_id: u.utterance_id.clone(),
            audio: audio_path(u),
            duration: u.duration,
            words: u
                .words
                .as_ref()
                .map(|ws| ws.iter().map(|w| (w.text.clone(), w.begin, w.end)).collect()),
            text: u.text.clone(),
            speaker_label: u.speaker_label.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("manifest record serializes"));
        out.push('\n');
    }
    out
}
