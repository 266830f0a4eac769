//! Order-N statistical language model over overlap tokens.
//!
//! Counts are maximum-likelihood, with no discounting. Every suffix of every
//! observed context is stored, so sampling and scoring back off to the
//! longest context suffix the model has seen.
//!
//! Contexts live in a trie keyed by history read backwards: the root is the
//! empty context, its children are the most recent symbol, and so on.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{TokenKind, TokenSequence};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_ORDER: usize = 30;
/// About ten minutes of audio at `d = 0.25`.
pub const DEFAULT_MAX_TOKENS_TIME: usize = 2400;
pub const DEFAULT_MAX_TOKENS_WORD: usize = 600;

const BOS_CODE: i64 = -1;
const EOS_CODE: i64 = -2;

#[derive(Debug, Error, PartialEq)]
pub enum SlmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("model order must be at least 1")]
    InvalidOrder,
    #[error("corpus mixes token kinds ({0})")]
    MixedKinds(String),
    #[error("sequence kind does not match the model kind")]
    KindMismatch,
    #[error("unsupported model format version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("corrupt model payload: {0}")]
    Corrupt(String),
}

/// Symbols seen by the model: the four tokens plus sequence boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Bos,
    Token(u8),
    Eos,
}

impl Symbol {
    fn code(self) -> i64 {
        match self {
            Symbol::Bos => BOS_CODE,
            Symbol::Eos => EOS_CODE,
            Symbol::Token(t) => t as i64,
        }
    }

    fn from_code(code: i64) -> Option<Symbol> {
        match code {
            BOS_CODE => Some(Symbol::Bos),
            EOS_CODE => Some(Symbol::Eos),
            0..=3 => Some(Symbol::Token(code as u8)),
            _ => None,
        }
    }
}

// Continuation slots: tokens 0..=3 then EOS.
const N_NEXT: usize = 5;
const EOS_SLOT: usize = 4;
// History slots: tokens 0..=3 then BOS.
const N_HIST: usize = 5;
const BOS_SLOT: usize = 4;

fn next_slot(s: Symbol) -> Option<usize> {
    match s {
        Symbol::Token(t) => Some(t as usize),
        Symbol::Eos => Some(EOS_SLOT),
        Symbol::Bos => None,
    }
}

fn next_symbol(slot: usize) -> Symbol {
    if slot == EOS_SLOT {
        Symbol::Eos
    } else {
        Symbol::Token(slot as u8)
    }
}

fn hist_slot(s: Symbol) -> Option<usize> {
    match s {
        Symbol::Token(t) => Some(t as usize),
        Symbol::Bos => Some(BOS_SLOT),
        Symbol::Eos => None,
    }
}

fn hist_symbol(slot: usize) -> Symbol {
    if slot == BOS_SLOT {
        Symbol::Bos
    } else {
        Symbol::Token(slot as u8)
    }
}

#[derive(Debug, Clone, Default)]
struct Node {
    counts: [u64; N_NEXT],
    children: [Option<u32>; N_HIST],
}

impl Node {
    fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    kind: TokenKind,
    nodes: Vec<Node>,
}

/// One stored context and its continuation counts, oldest symbol first.
pub type ContextEntry = (Vec<Symbol>, BTreeMap<Symbol, u64>);

impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order && self.kind == other.kind && self.contexts() == other.contexts()
    }
}

impl NGramModel {
    fn empty(order: usize, kind: TokenKind) -> Self {
        Self {
            order,
            kind,
            nodes: vec![Node::default()],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> TokenKind {
        self.kind
    }

    pub fn num_contexts(&self) -> usize {
        self.nodes.len()
    }

    fn child_or_insert(&mut self, node: usize, slot: usize) -> usize {
        if let Some(c) = self.nodes[node].children[slot] {
            return c as usize;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::default());
        self.nodes[node].children[slot] = Some(id as u32);
        id
    }

    /// Increments `next` at the empty context and at every suffix of `history`
    /// up to `order - 1` symbols.
    fn observe(&mut self, history: &[Symbol], next: Symbol) {
        let slot = next_slot(next).expect("continuations are tokens or EOS");
        let mut node = 0;
        self.nodes[0].counts[slot] += 1;
        for &h in history.iter().rev().take(self.order - 1) {
            node = self.child_or_insert(node, hist_slot(h).expect("history holds tokens or BOS"));
            self.nodes[node].counts[slot] += 1;
        }
    }

    /// Nodes along the longest stored suffix of `history`, shortest first.
    fn suffix_path(&self, history: &[Symbol]) -> Vec<usize> {
        let mut path = vec![0];
        let mut node = 0;
        for &h in history.iter().rev().take(self.order - 1) {
            let Some(slot) = hist_slot(h) else { break };
            match self.nodes[node].children[slot] {
                Some(c) => {
                    node = c as usize;
                    path.push(node);
                }
                None => break,
            }
        }
        path
    }

    /// Node of the longest stored suffix of `history`.
    fn longest_suffix(&self, history: &[Symbol]) -> usize {
        let mut node = 0;
        for &h in history.iter().rev().take(self.order - 1) {
            match hist_slot(h).and_then(|slot| self.nodes[node].children[slot]) {
                Some(c) => node = c as usize,
                None => break,
            }
        }
        node
    }

    fn padded_history(&self) -> Vec<Symbol> {
        vec![Symbol::Bos; self.order - 1]
    }

    /// Conditional distribution at the longest stored suffix of `context`
    /// (oldest symbol first).
    pub fn conditional(&self, context: &[Symbol]) -> BTreeMap<Symbol, f64> {
        let node = &self.nodes[self.longest_suffix(context)];
        let total = node.total() as f64;
        node.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(slot, &c)| (next_symbol(slot), c as f64 / total))
            .collect()
    }

    /// Raw continuation counts of exactly `context`, if it is stored.
    pub fn counts(&self, context: &[Symbol]) -> Option<BTreeMap<Symbol, u64>> {
        if context.len() > self.order - 1 {
            return None;
        }
        let mut node = 0;
        for &h in context.iter().rev() {
            node = self.nodes[node].children[hist_slot(h)?]? as usize;
        }
        Some(
            self.nodes[node]
                .counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(slot, &c)| (next_symbol(slot), c))
                .collect(),
        )
    }

    /// Every stored context with its counts, sorted by context.
    pub fn contexts(&self) -> Vec<ContextEntry> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<(usize, Vec<Symbol>)> = vec![(0, Vec::new())];
        while let Some((node, ctx)) = stack.pop() {
            let n = &self.nodes[node];
            let counts = n
                .counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(slot, &c)| (next_symbol(slot), c))
                .collect();
            for (slot, child) in n.children.iter().enumerate() {
                if let Some(c) = child {
                    let mut longer = Vec::with_capacity(ctx.len() + 1);
                    longer.push(hist_symbol(slot));
                    longer.extend_from_slice(&ctx);
                    stack.push((*c as usize, longer));
                }
            }
            out.push((ctx, counts));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Draws one continuation of `context` (oldest symbol first) from the
    /// longest stored suffix.
    pub fn sample_next<R: Rng + ?Sized>(&self, context: &[Symbol], rng: &mut R) -> Symbol {
        let node = &self.nodes[self.longest_suffix(context)];
        let mut r = rng.random_range(0..node.total());
        for (slot, &c) in node.counts.iter().enumerate() {
            if r < c {
                return next_symbol(slot);
            }
            r -= c;
        }
        unreachable!("r < total")
    }

    /// Ancestral sampling from the begin-of-sequence context.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, max_tokens: usize, source_id: &str) -> TokenSequence {
        let mut history = self.padded_history();
        let mut tokens = Vec::new();
        while tokens.len() < max_tokens {
            match self.sample_next(&history, rng) {
                Symbol::Eos => break,
                Symbol::Token(t) => {
                    tokens.push(t);
                    history.push(Symbol::Token(t));
                    if history.len() > self.order {
                        history.remove(0);
                    }
                }
                Symbol::Bos => unreachable!(),
            }
        }
        TokenSequence::new(tokens, self.kind, source_id).expect("sampled tokens come from training data")
    }

    pub fn sample(&self, seed: u64, max_tokens: usize) -> TokenSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, max_tokens, &format!("sample-{seed}"))
    }

    /// Natural-log probability of `x` followed by end-of-sequence.
    ///
    /// Each step uses the longest stored context suffix in which the next
    /// symbol has been seen; a step never seen at any order yields `-inf`.
    pub fn log_prob(&self, x: &TokenSequence) -> Result<f64, SlmError> {
        if !self.kind.matches(&x.kind()) {
            return Err(SlmError::KindMismatch);
        }
        let mut history = self.padded_history();
        let mut total = 0.0;
        let steps = x.tokens().iter().map(|&t| Symbol::Token(t)).chain(std::iter::once(Symbol::Eos));
        for next in steps {
            let slot = next_slot(next).expect("token or EOS");
            let path = self.suffix_path(&history);
            let p = path
                .iter()
                .rev()
                .map(|&n| &self.nodes[n])
                .find(|n| n.counts[slot] > 0)
                .map(|n| n.counts[slot] as f64 / n.total() as f64);
            match p {
                Some(p) => total += p.ln(),
                None => return Ok(f64::NEG_INFINITY),
            }
            history.push(next);
            if history.len() > self.order {
                history.remove(0);
            }
        }
        Ok(total)
    }

    pub fn save(&self) -> Vec<u8> {
        let file = ModelFile {
            version: FORMAT_VERSION,
            order: self.order,
            kind: match self.kind {
                TokenKind::Time { .. } => "time".into(),
                TokenKind::Word => "word".into(),
            },
            d: self.kind.unit(),
            contexts: self
                .contexts()
                .into_iter()
                .map(|(ctx, next)| ContextRecord {
                    ctx: ctx.iter().map(|s| s.code()).collect(),
                    next: next.into_iter().map(|(s, c)| (s.code().to_string(), c)).collect(),
                })
                .collect(),
        };
        serde_json::to_vec(&file).expect("model serializes")
    }

    pub fn load(bytes: &[u8]) -> Result<Self, SlmError> {
        #[derive(Deserialize)]
        struct VersionProbe {
            version: u32,
        }
        let probe: VersionProbe = serde_json::from_slice(bytes).map_err(|e| SlmError::Corrupt(e.to_string()))?;
        if probe.version != FORMAT_VERSION {
            return Err(SlmError::Version { found: probe.version });
        }
        let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| SlmError::Corrupt(e.to_string()))?;
        let corrupt = |m: String| SlmError::Corrupt(m);
        if file.order == 0 {
            return Err(corrupt("order must be at least 1".into()));
        }
        let kind = match (file.kind.as_str(), file.d) {
            ("word", _) => TokenKind::Word,
            ("time", Some(d)) if d > 0.0 && d.is_finite() => TokenKind::Time { d },
            _ => return Err(corrupt(format!("bad kind {:?} / d {:?}", file.kind, file.d))),
        };
        let mut model = NGramModel::empty(file.order, kind);
        let mut seen_root = false;
        for rec in &file.contexts {
            if rec.ctx.len() > file.order - 1 {
                return Err(corrupt(format!("context longer than order - 1: {:?}", rec.ctx)));
            }
            let ctx = rec
                .ctx
                .iter()
                .map(|&c| Symbol::from_code(c).filter(|s| *s != Symbol::Eos))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| corrupt(format!("bad context symbol in {:?}", rec.ctx)))?;
            if let Some(pos) = ctx.iter().rposition(|s| *s == Symbol::Bos) {
                if ctx[..pos].iter().any(|s| *s != Symbol::Bos) {
                    return Err(corrupt(format!("BOS after a token in {:?}", rec.ctx)));
                }
            }
            let mut node = 0;
            for &h in ctx.iter().rev() {
                node = model.child_or_insert(node, hist_slot(h).expect("checked"));
            }
            if node == 0 {
                seen_root = true;
            }
            if model.nodes[node].total() > 0 {
                return Err(corrupt(format!("duplicate context {:?}", rec.ctx)));
            }
            if rec.next.is_empty() {
                return Err(corrupt(format!("context {:?} has no continuations", rec.ctx)));
            }
            for (key, &count) in &rec.next {
                let sym = key
                    .parse::<i64>()
                    .ok()
                    .and_then(Symbol::from_code)
                    .filter(|s| *s != Symbol::Bos)
                    .ok_or_else(|| corrupt(format!("bad continuation {key:?}")))?;
                if count == 0 {
                    return Err(corrupt(format!("zero count in context {:?}", rec.ctx)));
                }
                if kind == TokenKind::Word && sym == Symbol::Token(0) {
                    return Err(corrupt("word-based model contains token 0".into()));
                }
                model.nodes[node].counts[next_slot(sym).expect("checked")] = count;
            }
        }
        if !seen_root {
            return Err(corrupt("missing empty context".into()));
        }
        if model.nodes.iter().any(|n| n.total() == 0) {
            return Err(corrupt("a context suffix is missing".into()));
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ContextRecord {
    ctx: Vec<i64>,
    next: BTreeMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    order: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
    contexts: Vec<ContextRecord>,
}

/// Trains an order-`order` model. Each sequence is padded with `order - 1`
/// BOS symbols and one EOS.
pub fn train(corpus: &[TokenSequence], order: usize) -> Result<NGramModel, SlmError> {
    if order == 0 {
        return Err(SlmError::InvalidOrder);
    }
    let first = corpus.first().ok_or(SlmError::EmptyCorpus)?;
    let kind = first.kind();
    if let Some(other) = corpus.iter().find(|s| !s.kind().matches(&kind)) {
        return Err(SlmError::MixedKinds(format!("{:?} vs {:?}", kind, other.kind())));
    }
    let mut model = NGramModel::empty(order, kind);
    for seq in corpus {
        let mut history = model.padded_history();
        for &t in seq.tokens() {
            model.observe(&history, Symbol::Token(t));
            history.push(Symbol::Token(t));
        }
        model.observe(&history, Symbol::Eos);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Symbol::*;

    fn word_seq(tokens: &[u8]) -> TokenSequence {
        TokenSequence::new(tokens.to_vec(), TokenKind::Word, "s").unwrap()
    }

    fn time_seq(tokens: &[u8]) -> TokenSequence {
        TokenSequence::new(tokens.to_vec(), TokenKind::Time { d: 0.25 }, "s").unwrap()
    }

    #[test]
    fn bigram_example() {
        let m = train(&[word_seq(&[1, 1, 3, 2])], 2).unwrap();
        let p = |ctx: &[Symbol], next: Symbol| m.conditional(ctx).get(&next).copied().unwrap_or(0.0);
        assert_eq!(p(&[Bos], Token(1)), 1.0);
        assert_eq!(p(&[Token(1)], Token(1)), 0.5);
        assert_eq!(p(&[Token(1)], Token(3)), 0.5);
        assert_eq!(p(&[Token(3)], Token(2)), 1.0);
        assert_eq!(p(&[Token(2)], Eos), 1.0);
    }

    #[test]
    fn unigram_example() {
        let m = train(&[word_seq(&[1])], 1).unwrap();
        let dist = m.conditional(&[]);
        assert_eq!(dist.get(&Token(1)), Some(&0.5));
        assert_eq!(dist.get(&Eos), Some(&0.5));
        // context is ignored for a unigram model
        assert_eq!(m.conditional(&[Token(1), Token(1)]), dist);
    }

    #[test]
    fn training_errors() {
        assert_eq!(train(&[], 3).unwrap_err(), SlmError::EmptyCorpus);
        assert_eq!(train(&[word_seq(&[1])], 0).unwrap_err(), SlmError::InvalidOrder);
        assert!(matches!(
            train(&[word_seq(&[1]), time_seq(&[1])], 2),
            Err(SlmError::MixedKinds(_))
        ));
        let other_unit = TokenSequence::new(vec![1], TokenKind::Time { d: 0.5 }, "s").unwrap();
        assert!(matches!(
            train(&[time_seq(&[1]), other_unit], 2),
            Err(SlmError::MixedKinds(_))
        ));
    }

    #[test]
    fn sampling_follows_bigram_graph() {
        let m = train(&[word_seq(&[1, 1, 3, 2])], 2).unwrap();
        for seed in 0..200 {
            let s = m.sample(seed, 50);
            let t = s.tokens();
            assert_eq!(t.first(), Some(&1));
            for w in t.windows(2) {
                assert!(matches!(w, [1, 1] | [1, 3] | [3, 2]), "bad transition {w:?}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_respects_cutoff() {
        let m = train(&[time_seq(&[0, 1, 1, 3, 2, 0, 1]), time_seq(&[1, 2, 2])], 3).unwrap();
        assert_eq!(m.sample(42, 100), m.sample(42, 100));
        for seed in 0..50 {
            assert!(m.sample(seed, 1).len() <= 1);
        }
    }

    #[test]
    fn single_sequence_with_unique_contexts_is_reproduced() {
        let seq = [1, 1, 3, 3, 2, 2, 3, 1];
        let m = train(&[word_seq(&seq)], 4).unwrap();
        for seed in 0..20 {
            assert_eq!(m.sample(seed, 100).tokens(), &seq);
        }
    }

    #[test]
    fn log_prob_examples() {
        let m = train(&[word_seq(&[1, 1, 3, 2])], 2).unwrap();
        let lp = m.log_prob(&word_seq(&[1, 1, 3, 2])).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-12);
        // empty sequence: P(EOS | BOS) backs off to the unigram EOS mass 1/5
        let lp_empty = m.log_prob(&word_seq(&[])).unwrap();
        assert!((lp_empty - 0.2f64.ln()).abs() < 1e-12);

        let t = train(&[time_seq(&[1, 1])], 2).unwrap();
        assert_eq!(t.log_prob(&time_seq(&[0])).unwrap(), f64::NEG_INFINITY);
        assert_eq!(t.log_prob(&word_seq(&[1])), Err(SlmError::KindMismatch));
    }

    #[test]
    fn save_load_round_trip() {
        let m = train(&[time_seq(&[0, 1, 1, 3, 2, 0]), time_seq(&[2, 2, 3])], 5).unwrap();
        let bytes = m.save();
        let back = NGramModel::load(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.sample(9, 100), m.sample(9, 100));
    }

    #[test]
    fn load_errors() {
        let m = train(&[word_seq(&[1, 3, 3, 2])], 3).unwrap();
        let bytes = m.save();
        assert!(matches!(
            NGramModel::load(&bytes[..bytes.len() / 2]),
            Err(SlmError::Corrupt(_))
        ));
        let future = String::from_utf8(bytes.clone()).unwrap().replacen("\"version\":1", "\"version\":2", 1);
        assert_eq!(NGramModel::load(future.as_bytes()), Err(SlmError::Version { found: 2 }));
        let zero = String::from_utf8(bytes).unwrap().replacen("\"-2\":1", "\"-2\":0", 1);
        assert!(matches!(NGramModel::load(zero.as_bytes()), Err(SlmError::Corrupt(_))));
    }

    #[test]
    fn serialized_form_uses_negative_boundary_codes() {
        let m = train(&[word_seq(&[1])], 2).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&m.save()).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["kind"], "word");
        let ctxs = v["contexts"].as_array().unwrap();
        assert!(ctxs.iter().any(|c| c["ctx"] == serde_json::json!([-1]) && c["next"]["1"] == 1));
        assert!(ctxs.iter().any(|c| c["ctx"] == serde_json::json!([1]) && c["next"]["-2"] == 1));
    }
}
