//! Multi-talker mixture generation.
//!
//! Three generators share one mixing timeline:
//!
//! * `simulate_time_based` samples a time-based overlap pattern and places
//!   one pool utterance per activity run, sized to the run length.
//! * `simulate_word_based` samples a word-based pattern and places each
//!   utterance so that its first word starts inside the word it should
//!   overlap, using the end times of words already placed.
//! * `simulate_random` is the random-delay baseline.
//!
//! Utterances are added into the mixture at absolute sample offsets. All
//! random offsets are drawn on the sample grid, so annotation times are
//! exact multiples of the sample period plus the utterance's own word times.
//! No placement is allowed to create an instant with more than two active
//! utterances: if one would, it is delayed to the earliest start that
//! avoids it.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{seconds_to_samples, AudioBuffer, AudioError, DEFAULT_SAMPLE_RATE};
use crate::discretize::{consecutive_one, decode_tokens, word_indices, TokenKind, TokenSequence};
use crate::pool::{PoolError, Utterance, UtterancePool};
use crate::slm::{NGramModel, DEFAULT_MAX_TOKENS_TIME, DEFAULT_MAX_TOKENS_WORD};
use crate::transcript::{end_time_order, toggle_channels};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("model kind does not fit the {0} algorithm")]
    KindMismatch(Algorithm),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Random,
    Time,
    Word,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Random => "random",
            Algorithm::Time => "time",
            Algorithm::Word => "word",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Algorithm::Random),
            "time" => Ok(Algorithm::Time),
            "word" => Ok(Algorithm::Word),
            other => Err(format!("unknown algorithm {other:?} (expected random, time or word)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedWord {
    pub text: String,
    pub begin: f64,
    pub end: f64,
    pub speaker: String,
    pub channel: u8,
    pub utterance_id: String,
}

/// Where one utterance landed in the mixture, in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub utterance_id: String,
    pub speaker: String,
    pub channel: u8,
    pub start: usize,
    pub len: usize,
}

impl Placement {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub tokens: Option<TokenSequence>,
    pub source_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample {
    pub audio: AudioBuffer,
    /// Words sorted by end time (then begin time, then placement order).
    pub annotation: Vec<AnnotatedWord>,
    pub placements: Vec<Placement>,
    pub provenance: Provenance,
}

impl MixedSample {
    /// Largest number of utterances active at one sample.
    pub fn max_concurrent_utterances(&self) -> usize {
        let mut events: Vec<(usize, i32)> = self
            .placements
            .iter()
            .filter(|p| p.len > 0)
            .flat_map(|p| [(p.start, 1), (p.end(), -1)])
            .collect();
        // ends before starts at the same sample: spans are half-open
        events.sort_by_key(|&(t, delta)| (t, delta));
        let mut active = 0;
        let mut best = 0;
        for (_, delta) in events {
            active += delta;
            best = best.max(active);
        }
        best as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub sample_rate: u32,
    /// Cap on sampled pattern length; `None` uses the per-kind default.
    pub max_tokens: Option<usize>,
    /// When positive, each utterance gets a uniform random gain in
    /// `[-gain_jitter_db, +gain_jitter_db]` dB.
    pub gain_jitter_db: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            max_tokens: None,
            gain_jitter_db: 0.0,
        }
    }
}

/// The mixture under construction.
struct Timeline<'a> {
    config: &'a SimConfig,
    audio: AudioBuffer,
    annotation: Vec<AnnotatedWord>,
    placements: Vec<Placement>,
}

impl<'a> Timeline<'a> {
    fn new(config: &'a SimConfig, initial_len: usize) -> Result<Self, SimError> {
        let mut audio = AudioBuffer::empty(config.sample_rate)?;
        audio.extend_to(initial_len);
        Ok(Self {
            config,
            audio,
            annotation: Vec::new(),
            placements: Vec::new(),
        })
    }

    fn rate(&self) -> f64 {
        self.config.sample_rate as f64
    }

    fn load<R: Rng + ?Sized>(&self, u: &Utterance, rng: &mut R) -> Result<AudioBuffer, SimError> {
        let mut audio = u.load_audio()?;
        if audio.sample_rate() != self.config.sample_rate {
            return Err(AudioError::RateMismatch {
                expected: self.config.sample_rate,
                found: audio.sample_rate(),
            }
            .into());
        }
        if self.config.gain_jitter_db > 0.0 {
            let db = rng.random_range(-self.config.gain_jitter_db..=self.config.gain_jitter_db);
            audio.scale(10f64.powf(db / 20.0) as f32);
        }
        Ok(audio)
    }

    /// Intervals where two placed utterances are active, sorted by start.
    fn double_covered(&self) -> Vec<(usize, usize)> {
        let mut events: Vec<(usize, i32)> = self
            .placements
            .iter()
            .filter(|p| p.len > 0)
            .flat_map(|p| [(p.start, 1), (p.end(), -1)])
            .collect();
        events.sort_by_key(|&(t, delta)| (t, delta));
        let mut out = Vec::new();
        let mut active = 0;
        let mut open: Option<usize> = None;
        for (t, delta) in events {
            active += delta;
            match (active >= 2, open) {
                (true, None) => open = Some(t),
                (false, Some(s)) => {
                    if t > s {
                        out.push((s, t));
                    }
                    open = None;
                }
                _ => {}
            }
        }
        out
    }

    /// Earliest start `>= start` at which `[start, start + len)` avoids every
    /// doubly covered interval.
    fn earliest_feasible_start(&self, start: usize, len: usize) -> usize {
        let mut candidate = start;
        for (s, e) in self.double_covered() {
            if e <= candidate {
                continue;
            }
            if s >= candidate + len {
                break;
            }
            candidate = e;
        }
        candidate
    }

    /// Mixes `audio` in at `start` (or later, see `earliest_feasible_start`)
    /// and records the annotation. Returns the actual start.
    fn place(&mut self, u: &Utterance, audio: &AudioBuffer, start: usize, speaker: String, channel: u8) -> Result<usize, SimError> {
        let start = self.earliest_feasible_start(start, audio.len());
        self.audio.mix_in(audio, start)?;
        let offset = start as f64 / self.rate();
        match &u.words {
            Some(words) if !words.is_empty() => {
                for w in words {
                    self.annotation.push(AnnotatedWord {
                        text: w.text.clone(),
                        begin: offset + w.begin,
                        end: offset + w.end,
                        speaker: speaker.clone(),
                        channel,
                        utterance_id: u.utterance_id.clone(),
                    });
                }
            }
            _ => self.annotation.push(AnnotatedWord {
                text: u.text.clone().unwrap_or_else(|| "<unk>".into()),
                begin: offset,
                end: offset + audio.len() as f64 / self.rate(),
                speaker: speaker.clone(),
                channel,
                utterance_id: u.utterance_id.clone(),
            }),
        }
        self.placements.push(Placement {
            utterance_id: u.utterance_id.clone(),
            speaker,
            channel,
            start,
            len: audio.len(),
        });
        Ok(start)
    }

    fn finish(mut self, algorithm: Algorithm, seed: u64, tokens: Option<TokenSequence>) -> MixedSample {
        let last_end = self.annotation.iter().map(|w| w.end).fold(0.0, f64::max);
        let needed = (last_end * self.rate() - 1e-6).ceil().max(0.0) as usize;
        self.audio.extend_to(needed);
        self.annotation
            .sort_by(|a, b| end_time_order(a.begin, a.end, b.begin, b.end));
        MixedSample {
            audio: self.audio,
            annotation: self.annotation,
            provenance: Provenance {
                algorithm,
                seed,
                tokens,
                source_ids: self.placements.iter().map(|p| p.utterance_id.clone()).collect(),
            },
            placements: self.placements,
        }
    }
}

fn speaker_label(k: usize) -> String {
    format!("S{k}")
}

/// Time-based generation from a time-kind model.
pub fn simulate_time_based(
    model: &NGramModel,
    pool: &UtterancePool,
    seed: u64,
    config: &SimConfig,
) -> Result<MixedSample, SimError> {
    let TokenKind::Time { d } = model.kind() else {
        return Err(SimError::KindMismatch(Algorithm::Time));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = model.sample_with(
        &mut rng,
        config.max_tokens.unwrap_or(DEFAULT_MAX_TOKENS_TIME),
        &format!("sample-{seed}"),
    );
    let rate = config.sample_rate;
    let q = decode_tokens(&tokens);
    let mut timeline = Timeline::new(config, seconds_to_samples(d * q.len() as f64, rate))?;
    for (k, run) in consecutive_one(&q).iter().enumerate() {
        let d_min = d * (run.end - run.begin) as f64;
        let d_max = d * (run.end - run.begin + 1) as f64;
        let u = pool.duration_nearest_sample(d_min, d_max, &mut rng);
        let audio = timeline.load(u, &mut rng)?;
        let window_start = seconds_to_samples(d * run.begin as f64, rate);
        let window_end = seconds_to_samples(d * (run.end + 1) as f64, rate);
        let slack = window_end.saturating_sub(window_start + audio.len());
        let start = if slack > 0 {
            window_start + rng.random_range(0..slack)
        } else {
            window_start
        };
        timeline.place(u, &audio, start, speaker_label(k), run.channel)?;
    }
    Ok(timeline.finish(Algorithm::Time, seed, Some(tokens)))
}

/// Word end-time buffer; unset and negative indices read as 0.
struct EndTimes(Vec<Option<f64>>);

impl EndTimes {
    fn get(&self, i: i64) -> f64 {
        if i < 0 {
            return 0.0;
        }
        self.0.get(i as usize).copied().flatten().unwrap_or(0.0)
    }
}

/// Word-based generation from a word-kind model. Pool utterances need word
/// timings.
pub fn simulate_word_based(
    model: &NGramModel,
    pool: &UtterancePool,
    seed: u64,
    config: &SimConfig,
) -> Result<MixedSample, SimError> {
    if model.kind() != TokenKind::Word {
        return Err(SimError::KindMismatch(Algorithm::Word));
    }
    if !pool.has_word_timings() {
        return Err(PoolError::MissingWordTimings.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = model.sample_with(
        &mut rng,
        config.max_tokens.unwrap_or(DEFAULT_MAX_TOKENS_WORD),
        &format!("sample-{seed}"),
    );
    let rate = config.sample_rate;
    let q = decode_tokens(&tokens);
    let mut ends = EndTimes(vec![None; q.len()]);
    let mut timeline = Timeline::new(config, 0)?;
    let mut k = 0;
    for run in consecutive_one(&q) {
        let owned = word_indices(&run, &q);
        let Some(&first) = owned.first() else {
            // the run only covers overlap positions handed to the other channel
            continue;
        };
        let u = pool.word_count_nearest_sample(owned.len(), &mut rng)?;
        let words = u.words.as_deref().filter(|w| !w.is_empty()).ok_or(PoolError::MissingWordTimings)?;
        let audio = timeline.load(u, &mut rng)?;
        let i0 = first as i64;
        let lo = seconds_to_samples(ends.get(i0 - 2), rate);
        let hi = seconds_to_samples(ends.get(i0 - 1), rate);
        let start = if hi > lo { lo + rng.random_range(0..hi - lo) } else { hi };
        let start = timeline.place(u, &audio, start, speaker_label(k), run.channel)?;
        k += 1;
        let offset = start as f64 / rate as f64;
        for (j, &pos) in owned.iter().enumerate() {
            // pattern positions beyond the utterance's words repeat its last end time
            let w = &words[j.min(words.len() - 1)];
            ends.0[pos] = Some(offset + w.end);
        }
    }
    Ok(timeline.finish(Algorithm::Word, seed, Some(tokens)))
}

/// Random-delay baseline: `1..=max_utterances` utterances drawn with
/// replacement; each one after the first starts uniformly between the
/// second-latest end time in the mixture and the mixture length.
pub fn simulate_random(
    pool: &UtterancePool,
    max_utterances: usize,
    seed: u64,
    config: &SimConfig,
) -> Result<MixedSample, SimError> {
    if max_utterances == 0 {
        return Err(SimError::InvalidConfig("maximum number of utterances must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(1..=max_utterances);
    let mut timeline = Timeline::new(config, 0)?;
    for k in 0..count {
        let u = pool.uniform_sample(&mut rng);
        let audio = timeline.load(u, &mut rng)?;
        let start = if k == 0 {
            0
        } else {
            let mut ends: Vec<usize> = timeline.placements.iter().map(Placement::end).collect();
            ends.sort_unstable();
            let end2 = if ends.len() >= 2 { ends[ends.len() - 2] } else { 0 };
            let len = timeline.audio.len();
            if len > end2 {
                end2 + rng.random_range(0..len - end2)
            } else {
                end2
            }
        };
        timeline.place(u, &audio, start, speaker_label(k), 0)?;
    }
    let mut sample = timeline.finish(Algorithm::Random, seed, None);
    let channels = toggle_channels(sample.annotation.iter().map(|w| w.speaker.as_str()));
    for (w, c) in sample.annotation.iter_mut().zip(channels) {
        w.channel = c;
    }
    for p in &mut sample.placements {
        if let Some(w) = sample.annotation.iter().find(|w| w.speaker == p.speaker) {
            p.channel = w.channel;
        }
    }
    Ok(sample)
}

/// Per-sample seed derived from the batch seed and the sample index
/// (SplitMix64 finalizer).
pub fn sample_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    /// Share of samples per algorithm; must sum to 1.
    pub ratios: Vec<(Algorithm, f64)>,
    /// Upper bound on utterances per baseline sample.
    pub max_speakers: usize,
    pub sim: SimConfig,
}

pub struct Batch<'a> {
    config: BatchConfig,
    pool: &'a UtterancePool,
    time_model: Option<&'a NGramModel>,
    word_model: Option<&'a NGramModel>,
}

impl<'a> Batch<'a> {
    pub fn new(
        config: BatchConfig,
        pool: &'a UtterancePool,
        time_model: Option<&'a NGramModel>,
        word_model: Option<&'a NGramModel>,
    ) -> Result<Self, SimError> {
        if config.ratios.is_empty() {
            return Err(SimError::InvalidConfig("no algorithm ratios given".into()));
        }
        if let Some((a, r)) = config.ratios.iter().find(|(_, r)| !r.is_finite() || *r < 0.0) {
            return Err(SimError::InvalidConfig(format!("ratio for {a} must be non-negative, got {r}")));
        }
        let sum: f64 = config.ratios.iter().map(|(_, r)| r).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidConfig(format!("ratios sum to {sum}, expected 1")));
        }
        for &(algorithm, r) in &config.ratios {
            if r == 0.0 {
                continue;
            }
            match algorithm {
                Algorithm::Time if !time_model.is_some_and(|m| matches!(m.kind(), TokenKind::Time { .. })) => {
                    return Err(SimError::InvalidConfig("time algorithm needs a time-based model".into()))
                }
                Algorithm::Word if !word_model.is_some_and(|m| m.kind() == TokenKind::Word) => {
                    return Err(SimError::InvalidConfig("word algorithm needs a word-based model".into()))
                }
                Algorithm::Random if config.max_speakers == 0 => {
                    return Err(SimError::InvalidConfig("max speakers must be at least 1".into()))
                }
                _ => {}
            }
        }
        Ok(Self {
            config,
            pool,
            time_model,
            word_model,
        })
    }

    pub fn config(&self) -> &BatchConfig {
        &self.config
    }

    /// Categorical draw of the algorithm for a sample seed.
    pub fn algorithm_for(&self, seed: u64) -> Algorithm {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, u64::MAX));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = self.config.ratios[0].0;
        for &(a, r) in &self.config.ratios {
            if r <= 0.0 {
                continue;
            }
            acc += r;
            last = a;
            if u < acc {
                return a;
            }
        }
        last
    }

    pub fn generate(&self, master_seed: u64, index: u64) -> Result<MixedSample, SimError> {
        let seed = sample_seed(master_seed, index);
        match self.algorithm_for(seed) {
            Algorithm::Random => simulate_random(self.pool, self.config.max_speakers, seed, &self.config.sim),
            Algorithm::Time => simulate_time_based(self.time_model.expect("validated"), self.pool, seed, &self.config.sim),
            Algorithm::Word => simulate_word_based(self.word_model.expect("validated"), self.pool, seed, &self.config.sim),
        }
    }
}

/// Lazily generates `count` samples in index order.
pub fn generate_batch<'b>(
    batch: &'b Batch<'_>,
    count: u64,
    master_seed: u64,
) -> impl Iterator<Item = Result<MixedSample, SimError>> + 'b {
    (0..count).map(move |i| batch.generate(master_seed, i))
}

/// Generates samples in parallel; results stay in index order.
pub fn generate_batch_parallel(batch: &Batch<'_>, count: u64, master_seed: u64) -> Vec<Result<MixedSample, SimError>> {
    (0..count)
        .into_par_iter()
        .map(|i| batch.generate(master_seed, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationWordRecord {
    pub w: String,
    pub b: f64,
    pub e: f64,
    pub spk: String,
    pub ch: u8,
    pub utt: String,
}

/// One line of the annotation sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<u8>>,
    pub words: Vec<AnnotationWordRecord>,
}

impl AnnotationRecord {
    pub fn from_sample(sample_id: impl Into<String>, sample: &MixedSample) -> Self {
        Self {
            sample_id: sample_id.into(),
            algorithm: sample.provenance.algorithm,
            seed: sample.provenance.seed,
            tokens: sample.provenance.tokens.as_ref().map(|t| t.tokens().to_vec()),
            words: sample
                .annotation
                .iter()
                .map(|w| AnnotationWordRecord {
                    w: w.text.clone(),
                    b: w.begin,
                    e: w.end,
                    spk: w.speaker.clone(),
                    ch: w.channel,
                    utt: w.utterance_id.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("annotation serializes")
    }
}

pub fn parse_annotation_jsonl(input: &[u8]) -> Result<Vec<AnnotationRecord>, SimError> {
    let text = std::str::from_utf8(input).map_err(|e| SimError::Parse {
        line: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| SimError::Parse { line: i + 1, message };
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if let Some(w) = rec.words.iter().find(|w| w.ch > 1 || w.b.is_nan() || w.e.is_nan() || w.e <= w.b || w.b < 0.0) {
            return Err(err(format!("invalid word {:?}", w.w)));
        }
        if rec.tokens.as_ref().is_some_and(|t| t.iter().any(|&x| x > 3)) {
            return Err(err("token out of range".into()));
        }
        out.push(rec);
    }
    Ok(out)
}
