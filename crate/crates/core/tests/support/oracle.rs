//! Brute-force reference implementations used by the property and
//! acceptance tests. Written for clarity, not speed; none of this calls into
//! the library's own algorithms.

#![allow(dead_code)]

use std::collections::BTreeMap;

use overlapsim::slm::Symbol;
use overlapsim::{TimedWord, Transcript};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct RawWord {
    pub begin: f64,
    pub end: f64,
    pub speaker: String,
}

/// Input positions ordered by (end, begin, position).
pub fn end_time_order(words: &[RawWord]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..words.len()).collect();
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (&words[idx[j - 1]], &words[idx[j]]);
            let a_after_b = a.end > b.end || (a.end == b.end && a.begin > b.begin);
            if !a_after_b {
                break;
            }
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    idx
}

/// Channel per word of `sorted`: start at 0, flip when the speaker changes.
pub fn toggle(sorted: &[&RawWord]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ch = 0u8;
    for (i, w) in sorted.iter().enumerate() {
        if i > 0 && sorted[i - 1].speaker != w.speaker {
            ch ^= 1;
        }
        out.push(ch);
    }
    out
}

/// Windows `0..=floor(last_end / d)`; window `t` is `[d t, d (t + 1))`.
pub fn time_tokens(sorted: &[&RawWord], ch: &[u8], d: f64) -> Vec<u8> {
    let last_end = sorted.iter().map(|w| w.end).fold(f64::MIN, f64::max);
    let n = (last_end / d).floor() as usize + 1;
    (0..n)
        .map(|t| {
            let lo = d * t as f64;
            let hi = d * (t as f64 + 1.0);
            let mut q = [0u8; 2];
            for (w, &c) in sorted.iter().zip(ch) {
                if w.begin < hi && w.end > lo {
                    q[c as usize] = 1;
                }
            }
            q[0] + 2 * q[1]
        })
        .collect()
}

pub fn word_tokens(sorted: &[&RawWord], ch: &[u8]) -> Vec<u8> {
    sorted
        .iter()
        .map(|w| {
            let mut q = [0u8; 2];
            for (o, &c) in sorted.iter().zip(ch) {
                if o.begin < w.end && o.end > w.begin {
                    q[c as usize] = 1;
                }
            }
            q[0] + 2 * q[1]
        })
        .collect()
}

/// True if some instant inside `[first begin, last end]` lies more than
/// `threshold` away from all speech on both sides.
pub fn has_silence_over(words: &[RawWord], threshold: f64) -> bool {
    // a gap is a point t with no word covering it; measure every gap between
    // the end of one word and the next begin after it
    for w in words {
        let gap_start = w.end;
        if words.iter().any(|o| o.begin < gap_start && o.end > gap_start) {
            continue;
        }
        let next = words
            .iter()
            .filter(|o| o.begin >= gap_start)
            .map(|o| o.begin)
            .fold(f64::INFINITY, f64::min);
        if next.is_finite() && next - gap_start > threshold {
            return true;
        }
    }
    false
}

pub fn decode(x: u8) -> [bool; 2] {
    [x & 1 == 1, x & 2 == 2]
}

/// Maximal runs `(channel, begin, end)` sorted by begin, channel 0 first.
pub fn runs(tokens: &[u8]) -> Vec<(u8, usize, usize)> {
    let mut out = Vec::new();
    for c in 0..2u8 {
        let active = |i: usize| decode(tokens[i])[c as usize];
        let mut i = 0;
        while i < tokens.len() {
            if active(i) {
                let s = i;
                while i < tokens.len() && active(i) {
                    i += 1;
                }
                out.push((c, s, i - 1));
            } else {
                i += 1;
            }
        }
    }
    out.sort_by_key(|&(c, b, _)| (b, c));
    out
}

/// Owner run (index into `runs(tokens)`) of every active position.
pub fn owners(tokens: &[u8]) -> Vec<Option<usize>> {
    let rs = runs(tokens);
    let covering = |c: u8, p: usize| rs.iter().position(|&(rc, b, e)| rc == c && b <= p && p <= e);
    (0..tokens.len())
        .map(|p| match decode(tokens[p]) {
            [false, false] => None,
            [true, false] => covering(0, p),
            [false, true] => covering(1, p),
            [true, true] => {
                let mut s = p;
                while s > 0 && tokens[s - 1] == 3 {
                    s -= 1;
                }
                let mut t = p;
                while t < tokens.len() && tokens[t] == 3 {
                    t += 1;
                }
                let k = t - s;
                let r0 = covering(0, p).unwrap();
                let r1 = covering(1, p).unwrap();
                let (early, late) = if (rs[r0].1, 0) < (rs[r1].1, 1) { (r0, r1) } else { (r1, r0) };
                Some(if p - s < k.div_ceil(2) { early } else { late })
            }
        })
        .collect()
}

/// Every (context, next) count from all windows of length `1..=order`, with
/// `order - 1` BOS symbols before and one EOS after each sequence.
pub fn ngram_counts(corpus: &[Vec<u8>], order: usize) -> BTreeMap<Vec<Symbol>, BTreeMap<Symbol, u64>> {
    let mut out: BTreeMap<Vec<Symbol>, BTreeMap<Symbol, u64>> = BTreeMap::new();
    for seq in corpus {
        let mut padded = vec![Symbol::Bos; order - 1];
        padded.extend(seq.iter().map(|&t| Symbol::Token(t)));
        padded.push(Symbol::Eos);
        for target in order - 1..padded.len() {
            for k in 0..order {
                let ctx = padded[target - k..target].to_vec();
                *out.entry(ctx).or_default().entry(padded[target]).or_default() += 1;
            }
        }
    }
    out
}

/// Largest number of half-open intervals covering one instant.
pub fn max_overlap(intervals: &[(usize, usize)]) -> usize {
    let mut points: Vec<usize> = intervals.iter().map(|&(s, _)| s).collect();
    points.sort_unstable();
    points
        .iter()
        .map(|&t| intervals.iter().filter(|&&(s, e)| s <= t && t < e).count())
        .max()
        .unwrap_or(0)
}

pub fn random_words<R: Rng>(rng: &mut R, max_words: usize, max_speakers: usize) -> Vec<RawWord> {
    let n = rng.random_range(1..=max_words);
    (0..n)
        .map(|_| {
            // mix of grid-aligned and arbitrary times to hit window edges
            let (begin, len) = if rng.random_bool(0.5) {
                (rng.random_range(0..40) as f64 * 0.125, rng.random_range(1..12) as f64 * 0.125)
            } else {
                (rng.random_range(0.0..5.0), rng.random_range(0.01..1.5))
            };
            RawWord {
                begin,
                end: begin + len,
                speaker: format!("S{}", rng.random_range(0..max_speakers)),
            }
        })
        .collect()
}

pub fn to_transcript(id: &str, words: &[RawWord]) -> Transcript {
    let words = words
        .iter()
        .enumerate()
        .map(|(i, w)| TimedWord::new(format!("w{i}"), w.begin, w.end, w.speaker.clone()))
        .collect();
    Transcript::new(id, words, None).unwrap()
}
