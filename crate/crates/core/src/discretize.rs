//! Overlap-pattern tokens.
//!
//! A token encodes which of the two virtual channels is speaking as
//! `ch0 + 2 * ch1`, so `0` is silence, `1` and `2` are single-channel speech
//! and `3` is overlap. Time-based sequences carry one token per `d`-second
//! window; word-based sequences carry one token per word.
//!
//! Intervals are half-open everywhere: two spans overlap only if their
//! intersection has positive length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::{speech_regions, ChannelAssignment, Transcript};

#[derive(Debug, Error, PartialEq)]
pub enum DiscretizeError {
    #[error("transcript has no words")]
    EmptyTranscript,
    #[error("channel assignment has {channels} entries for {words} words")]
    ChannelMismatch { channels: usize, words: usize },
    #[error("invalid token {0} (must be 0..=3)")]
    InvalidToken(i64),
    #[error("word-based sequence contains a silence token")]
    ZeroInWordSequence,
    #[error("silence gap of {gap:.3}s exceeds threshold {threshold:.3}s; segment the transcript first")]
    SilenceGap { gap: f64, threshold: f64 },
    #[error("invalid discretization unit {0}")]
    InvalidUnit(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Per-channel speech activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Activity(pub [bool; 2]);

impl Activity {
    pub const SILENCE: Activity = Activity([false, false]);

    pub fn is_active(self, channel: u8) -> bool {
        self.0[channel as usize]
    }

    pub fn is_overlap(self) -> bool {
        self.0[0] && self.0[1]
    }
}

pub fn encode_pair(q: Activity) -> u8 {
    q.0[0] as u8 + 2 * q.0[1] as u8
}

pub fn decode_token(x: u8) -> Result<Activity, DiscretizeError> {
    if x > 3 {
        return Err(DiscretizeError::InvalidToken(x as i64));
    }
    Ok(Activity([x & 1 == 1, x & 2 == 2]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TokenKind {
    /// One token per window of `d` seconds.
    Time { d: f64 },
    /// One token per word.
    Word,
}

impl TokenKind {
    /// Kinds match when both are word-based, or both time-based with units
    /// equal to within a nanosecond.
    pub fn matches(&self, other: &TokenKind) -> bool {
        match (self, other) {
            (TokenKind::Word, TokenKind::Word) => true,
            (TokenKind::Time { d: a }, TokenKind::Time { d: b }) => (a - b).abs() <= 1e-9,
            _ => false,
        }
    }

    pub fn unit(&self) -> Option<f64> {
        match self {
            TokenKind::Time { d } => Some(*d),
            TokenKind::Word => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    tokens: Vec<u8>,
    kind: TokenKind,
    source_id: String,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u8>, kind: TokenKind, source_id: impl Into<String>) -> Result<Self, DiscretizeError> {
        if let Some(&bad) = tokens.iter().find(|&&t| t > 3) {
            return Err(DiscretizeError::InvalidToken(bad as i64));
        }
        match kind {
            TokenKind::Word if tokens.contains(&0) => return Err(DiscretizeError::ZeroInWordSequence),
            TokenKind::Time { d } if !(d > 0.0 && d.is_finite()) => return Err(DiscretizeError::InvalidUnit(d)),
            _ => {}
        }
        Ok(Self {
            tokens,
            kind,
            source_id: source_id.into(),
        })
    }

    pub fn tokens(&self) -> &[u8] {
        &self.tokens
    }

    pub fn kind(&self) -> TokenKind {
        self.kind
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn decode_tokens(x: &TokenSequence) -> Vec<Activity> {
    x.tokens
        .iter()
        .map(|&t| decode_token(t).expect("TokenSequence holds valid tokens"))
        .collect()
}

fn check_channels(t: &Transcript, c: &ChannelAssignment) -> Result<(), DiscretizeError> {
    if t.is_empty() {
        return Err(DiscretizeError::EmptyTranscript);
    }
    if c.len() != t.len() {
        return Err(DiscretizeError::ChannelMismatch {
            channels: c.len(),
            words: t.len(),
        });
    }
    Ok(())
}

/// Time-based discretization with window length `d`.
///
/// Windows `0..=floor(last_end / d)` are emitted, so a trailing silent window
/// appears when the last word ends exactly on a window boundary.
pub fn discretize_time(t: &Transcript, c: &ChannelAssignment, d: f64) -> Result<TokenSequence, DiscretizeError> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(DiscretizeError::InvalidUnit(d));
    }
    check_channels(t, c)?;
    let last_end = t.last_end().expect("non-empty");
    let n_windows = (last_end / d).floor() as usize + 1;
    let mut acts = vec![Activity::SILENCE; n_windows];

    // Window w overlaps [b, e) iff b < d*(w+1) and e > d*w. Both predicates
    // are monotone in w, so the overlapped windows form one contiguous range;
    // estimate it by division and then settle the edges with the predicate.
    let overlaps = |w: usize, b: f64, e: f64| b < d * (w as f64 + 1.0) && e > d * w as f64;
    for (word, &ch) in t.words().iter().zip(c.channels()) {
        let (b, e) = (word.begin, word.end);
        let last = n_windows - 1;
        let mut lo = ((b / d).floor() as usize).min(last);
        while lo > 0 && overlaps(lo - 1, b, e) {
            lo -= 1;
        }
        while lo < last && !overlaps(lo, b, e) {
            lo += 1;
        }
        if !overlaps(lo, b, e) {
            continue;
        }
        let mut hi = ((e / d).ceil() as usize).saturating_sub(1).clamp(lo, last);
        while hi < last && overlaps(hi + 1, b, e) {
            hi += 1;
        }
        while hi > lo && !overlaps(hi, b, e) {
            hi -= 1;
        }
        for a in &mut acts[lo..=hi] {
            a.0[ch as usize] = true;
        }
    }
    TokenSequence::new(
        acts.into_iter().map(encode_pair).collect(),
        TokenKind::Time { d },
        t.recording_id(),
    )
}

/// Merged, half-open activity spans of one channel, sorted by begin.
fn channel_union(t: &Transcript, c: &ChannelAssignment, channel: u8) -> Vec<(f64, f64)> {
    let mut spans: Vec<(f64, f64)> = t
        .words()
        .iter()
        .zip(c.channels())
        .filter(|(_, &ch)| ch == channel)
        .map(|(w, _)| (w.begin, w.end))
        .collect();
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

fn union_intersects(union: &[(f64, f64)], b: f64, e: f64) -> bool {
    // first span whose end is past b; it intersects iff it starts before e
    let i = union.partition_point(|s| s.1 <= b);
    union.get(i).is_some_and(|s| s.0 < e)
}

/// Word-based discretization of a silence-free segment.
///
/// Fails if the segment contains a silence longer than `silence_threshold`.
pub fn discretize_word(
    t: &Transcript,
    c: &ChannelAssignment,
    silence_threshold: f64,
) -> Result<TokenSequence, DiscretizeError> {
    check_channels(t, c)?;
    let regions = speech_regions(t.words(), 0.0);
    if let Some(gap) = regions
        .windows(2)
        .map(|w| w[1].0 - w[0].1)
        .find(|&gap| gap > silence_threshold)
    {
        return Err(DiscretizeError::SilenceGap {
            gap,
            threshold: silence_threshold,
        });
    }
    let unions = [channel_union(t, c, 0), channel_union(t, c, 1)];
    let tokens = t
        .words()
        .iter()
        .map(|w| {
            encode_pair(Activity([
                union_intersects(&unions[0], w.begin, w.end),
                union_intersects(&unions[1], w.begin, w.end),
            ]))
        })
        .collect();
    TokenSequence::new(tokens, TokenKind::Word, t.recording_id())
}

/// A maximal run of activity on one channel, `begin..=end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpan {
    pub channel: u8,
    pub begin: usize,
    pub end: usize,
}

impl RunSpan {
    pub fn len(&self) -> usize {
        self.end - self.begin + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// All maximal runs of activity on either channel, ordered by start index
/// (channel 0 first on ties).
pub fn consecutive_one(q: &[Activity]) -> Vec<RunSpan> {
    let mut runs = Vec::new();
    for channel in 0..2u8 {
        let mut start: Option<usize> = None;
        for (i, a) in q.iter().enumerate() {
            match (a.is_active(channel), start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push(RunSpan { channel, begin: s, end: i - 1 });
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push(RunSpan { channel, begin: s, end: q.len() - 1 });
        }
    }
    runs.sort_by_key(|r| (r.begin, r.channel));
    runs
}

/// Start index of the run on `channel` that contains position `i`.
fn run_start(q: &[Activity], channel: u8, mut i: usize) -> usize {
    while i > 0 && q[i - 1].is_active(channel) {
        i -= 1;
    }
    i
}

/// Pattern positions owned by `run`.
///
/// Single-channel positions belong to the run that covers them. Each maximal
/// stretch of `k` overlap positions is shared out: the first `ceil(k/2)` go to
/// the run that started earlier (channel 0 on ties), the remaining
/// `floor(k/2)` to the other one. Every position is owned by exactly one run.
pub fn word_indices(run: &RunSpan, q: &[Activity]) -> Vec<usize> {
    let mut owned = Vec::new();
    let other = 1 - run.channel;
    let mut i = run.begin;
    while i <= run.end {
        if !q[i].is_overlap() {
            owned.push(i);
            i += 1;
            continue;
        }
        let s = i;
        while i <= run.end && q[i].is_overlap() {
            i += 1;
        }
        let k = i - s;
        let first_share = k.div_ceil(2);
        let other_begin = run_start(q, other, s);
        let this_is_earlier = (run.begin, run.channel) < (other_begin, other);
        if this_is_earlier {
            owned.extend(s..s + first_share);
        } else {
            owned.extend(s + first_share..i);
        }
    }
    owned
}

#[derive(Serialize, Deserialize)]
struct TokenRecord {
    source_id: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
    tokens: Vec<i64>,
}

pub fn write_token_jsonl(seqs: &[TokenSequence]) -> String {
    let mut out = String::new();
    for s in seqs {
        let rec = TokenRecord {
            source_id: s.source_id.clone(),
            kind: match s.kind {
                TokenKind::Time { .. } => "time".into(),
                TokenKind::Word => "word".into(),
            },
            d: s.kind.unit(),
            tokens: s.tokens.iter().map(|&t| t as i64).collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("token record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_token_jsonl(input: &[u8]) -> Result<Vec<TokenSequence>, DiscretizeError> {
    let text = std::str::from_utf8(input).map_err(|e| DiscretizeError::Parse {
        line: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DiscretizeError::Parse { line: line_no, message };
        let rec: TokenRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let kind = match (rec.kind.as_str(), rec.d) {
            ("word", _) => TokenKind::Word,
            ("time", Some(d)) => TokenKind::Time { d },
            ("time", None) => return Err(err("time-based record without \"d\"".into())),
            (other, _) => return Err(err(format!("unknown kind {other:?}"))),
        };
        let tokens = rec
            .tokens
            .iter()
            .map(|&t| {
                if (0..=3).contains(&t) {
                    Ok(t as u8)
                } else {
                    Err(DiscretizeError::InvalidToken(t))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(TokenSequence::new(tokens, kind, rec.source_id).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::{assign_channels, TimedWord};

    fn q(bits: &[[u8; 2]]) -> Vec<Activity> {
        bits.iter().map(|b| Activity([b[0] == 1, b[1] == 1])).collect()
    }

    fn tr(words: &[(f64, f64, &str)]) -> Transcript {
        Transcript::new(
            "r",
            words.iter().map(|&(b, e, s)| TimedWord::new("x", b, e, s)).collect(),
            None,
        )
        .unwrap()
    }

    fn time_tokens(words: &[(f64, f64, &str)], d: f64) -> Vec<u8> {
        let t = tr(words);
        let c = assign_channels(&t).unwrap();
        discretize_time(&t, &c, d).unwrap().tokens().to_vec()
    }

    fn word_tokens(words: &[(f64, f64, &str)]) -> Vec<u8> {
        let t = tr(words);
        let c = assign_channels(&t).unwrap();
        discretize_word(&t, &c, 0.5).unwrap().tokens().to_vec()
    }

    #[test]
    fn encoding_table() {
        assert_eq!(encode_pair(Activity([false, false])), 0);
        assert_eq!(encode_pair(Activity([true, false])), 1);
        assert_eq!(encode_pair(Activity([false, true])), 2);
        assert_eq!(encode_pair(Activity([true, true])), 3);
        for x in 0..4 {
            assert_eq!(encode_pair(decode_token(x).unwrap()), x);
        }
        assert_eq!(decode_token(4), Err(DiscretizeError::InvalidToken(4)));
    }

    #[test]
    fn decode_examples() {
        let s = TokenSequence::new(vec![1, 3, 2], TokenKind::Word, "s").unwrap();
        assert_eq!(decode_tokens(&s), q(&[[1, 0], [1, 1], [0, 1]]));
        let empty = TokenSequence::new(vec![], TokenKind::Time { d: 0.25 }, "s").unwrap();
        assert!(decode_tokens(&empty).is_empty());
        let zeros = TokenSequence::new(vec![0, 0], TokenKind::Time { d: 0.25 }, "s").unwrap();
        assert_eq!(decode_tokens(&zeros), q(&[[0, 0], [0, 0]]));
    }

    #[test]
    fn sequence_invariants() {
        assert_eq!(
            TokenSequence::new(vec![1, 0], TokenKind::Word, "s"),
            Err(DiscretizeError::ZeroInWordSequence)
        );
        assert_eq!(
            TokenSequence::new(vec![5], TokenKind::Word, "s"),
            Err(DiscretizeError::InvalidToken(5))
        );
        assert!(TokenSequence::new(vec![0], TokenKind::Time { d: 0.0 }, "s").is_err());
    }

    #[test]
    fn time_examples() {
        assert_eq!(time_tokens(&[(0.0, 0.5, "A")], 0.25), [1, 1, 0]);
        assert_eq!(time_tokens(&[(0.0, 0.5, "A"), (0.25, 0.75, "B")], 0.25), [1, 3, 2, 0]);
        assert_eq!(time_tokens(&[(0.0, 0.25, "A"), (0.5, 0.75, "A")], 0.25), [1, 0, 1, 0]);
    }

    #[test]
    fn time_single_speaker_uses_zero_and_one() {
        let toks = time_tokens(&[(0.1, 0.3, "A"), (1.0, 2.2, "A"), (2.3, 2.4, "A")], 0.25);
        assert!(toks.iter().all(|&t| t <= 1));
    }

    #[test]
    fn word_examples() {
        assert_eq!(word_tokens(&[(0.0, 0.3, "A"), (0.3, 0.6, "A"), (0.6, 0.9, "A")]), [1, 1, 1]);
        assert_eq!(word_tokens(&[(0.0, 1.0, "A"), (0.5, 1.5, "B")]), [3, 3]);
        assert_eq!(word_tokens(&[(0.0, 1.0, "A"), (1.2, 2.0, "B")]), [1, 2]);
    }

    #[test]
    fn word_rejects_long_silence() {
        let t = tr(&[(0.0, 0.4, "A"), (1.5, 2.0, "A")]);
        let c = assign_channels(&t).unwrap();
        assert!(matches!(
            discretize_word(&t, &c, 0.5),
            Err(DiscretizeError::SilenceGap { .. })
        ));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let empty = Transcript::new("r", vec![], None).unwrap();
        let c = ChannelAssignment::from_channels(vec![]).unwrap();
        assert_eq!(discretize_time(&empty, &c, 0.25), Err(DiscretizeError::EmptyTranscript));
        let t = tr(&[(0.0, 1.0, "A")]);
        let c2 = ChannelAssignment::from_channels(vec![0, 1]).unwrap();
        assert!(matches!(
            discretize_word(&t, &c2, 0.5),
            Err(DiscretizeError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn consecutive_one_worked_example() {
        let m = q(&[[1, 0], [1, 0], [1, 1], [1, 1], [0, 1]]);
        assert_eq!(
            consecutive_one(&m),
            vec![
                RunSpan { channel: 0, begin: 0, end: 3 },
                RunSpan { channel: 1, begin: 2, end: 4 },
            ]
        );
    }

    #[test]
    fn consecutive_one_edge_cases() {
        assert!(consecutive_one(&q(&[[0, 0], [0, 0]])).is_empty());
        assert_eq!(
            consecutive_one(&q(&[[1, 1]])),
            vec![
                RunSpan { channel: 0, begin: 0, end: 0 },
                RunSpan { channel: 1, begin: 0, end: 0 },
            ]
        );
    }

    #[test]
    fn word_indices_worked_example() {
        let m = q(&[[1, 0], [1, 0], [1, 1], [1, 1], [0, 1]]);
        let runs = consecutive_one(&m);
        assert_eq!(word_indices(&runs[0], &m), [0, 1, 2]);
        assert_eq!(word_indices(&runs[1], &m), [3, 4]);
    }

    #[test]
    fn word_indices_sole_owner_and_odd_split() {
        let solo = q(&[[1, 0]; 4]);
        assert_eq!(word_indices(&consecutive_one(&solo)[0], &solo), [0, 1, 2, 3]);

        let m = q(&[[1, 0], [1, 1], [1, 1], [1, 1], [0, 1]]);
        let runs = consecutive_one(&m);
        assert_eq!(word_indices(&runs[0], &m), [0, 1, 2]);
        assert_eq!(word_indices(&runs[1], &m), [3, 4]);
    }

    #[test]
    fn word_indices_later_run_can_own_nothing() {
        let m = q(&[[1, 0], [1, 1], [1, 0]]);
        let runs = consecutive_one(&m);
        assert_eq!(word_indices(&runs[0], &m), [0, 1, 2]);
        assert!(word_indices(&runs[1], &m).is_empty());
    }

    #[test]
    fn token_jsonl_round_trip_and_errors() {
        let seqs = vec![
            TokenSequence::new(vec![0, 1, 3], TokenKind::Time { d: 0.25 }, "a").unwrap(),
            TokenSequence::new(vec![1, 2], TokenKind::Word, "b").unwrap(),
        ];
        let text = write_token_jsonl(&seqs);
        assert_eq!(parse_token_jsonl(text.as_bytes()).unwrap(), seqs);
        assert!(parse_token_jsonl(br#"{"source_id":"a","kind":"time","tokens":[1]}"#).is_err());
        assert!(parse_token_jsonl(br#"{"source_id":"a","kind":"word","tokens":[0]}"#).is_err());
        assert!(parse_token_jsonl(br#"{"source_id":"a","kind":"word","tokens":[9]}"#).is_err());
    }
}
