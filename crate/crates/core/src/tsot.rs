//! Token-level serialized output: multi-speaker words flattened into one
//! end-time ordered stream, with `<cc>` marking every change of speaker.

use thiserror::Error;

use crate::transcript::end_time_order;

pub const CHANNEL_CHANGE: &str = "<cc>";

#[derive(Debug, Error, PartialEq)]
pub enum TsotError {
    #[error("annotation is empty")]
    Empty,
    #[error("word {0:?} cannot be serialized (empty, contains whitespace, or is the channel-change marker)")]
    InvalidWord(String),
    #[error("non-finite time on word {0:?}")]
    NonFiniteTime(String),
    #[error("misplaced channel-change marker at position {0}")]
    MisplacedMarker(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A word to serialize: `(text, begin, end, speaker)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerWord {
    pub text: String,
    pub begin: f64,
    pub end: f64,
    pub speaker: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedTranscript {
    pub sample_id: String,
    pub tokens: Vec<String>,
}

impl SerializedTranscript {
    fn validate(&self) -> Result<(), TsotError> {
        let is_cc = |i: usize| self.tokens[i] == CHANNEL_CHANGE;
        for i in 0..self.tokens.len() {
            if is_cc(i) && (i == 0 || i + 1 == self.tokens.len() || is_cc(i - 1)) {
                return Err(TsotError::MisplacedMarker(i));
            }
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        format!("{}\t{}", self.sample_id, self.tokens.join(" "))
    }

    pub fn parse_line(line: &str, line_no: usize) -> Result<Self, TsotError> {
        let (id, body) = line.split_once('\t').ok_or_else(|| TsotError::Parse {
            line: line_no,
            message: "missing tab after sample id".into(),
        })?;
        let s = SerializedTranscript {
            sample_id: id.to_string(),
            tokens: body.split_whitespace().map(str::to_string).collect(),
        };
        s.validate().map_err(|e| TsotError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        Ok(s)
    }
}

/// Sorts words by end time (ties: begin time, then input order) and inserts
/// `<cc>` between adjacent words of different speakers.
pub fn serialize(sample_id: &str, words: &[SpeakerWord]) -> Result<SerializedTranscript, TsotError> {
    if words.is_empty() {
        return Err(TsotError::Empty);
    }
    for w in words {
        if w.text.is_empty() || w.text.chars().any(char::is_whitespace) || w.text == CHANNEL_CHANGE {
            return Err(TsotError::InvalidWord(w.text.clone()));
        }
        if !w.begin.is_finite() || !w.end.is_finite() {
            return Err(TsotError::NonFiniteTime(w.text.clone()));
        }
    }
    let mut order: Vec<&SpeakerWord> = words.iter().collect();
    order.sort_by(|a, b| end_time_order(a.begin, a.end, b.begin, b.end));
    let mut tokens = Vec::with_capacity(words.len() * 2);
    let mut prev: Option<&str> = None;
    for w in order {
        if prev.is_some_and(|p| p != w.speaker) {
            tokens.push(CHANNEL_CHANGE.to_string());
        }
        tokens.push(w.text.clone());
        prev = Some(&w.speaker);
    }
    Ok(SerializedTranscript {
        sample_id: sample_id.to_string(),
        tokens,
    })
}

/// Splits a serialized stream back into two channels, starting on channel 0
/// and switching at every `<cc>`.
pub fn deserialize(s: &SerializedTranscript) -> Result<[Vec<String>; 2], TsotError> {
    s.validate()?;
    let mut out: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    let mut ch = 0;
    for t in &s.tokens {
        if t == CHANNEL_CHANGE {
            ch = 1 - ch;
        } else {
            out[ch].push(t.clone());
        }
    }
    Ok(out)
}

pub fn parse_tsot_text(input: &[u8]) -> Result<Vec<SerializedTranscript>, TsotError> {
    let text = std::str::from_utf8(input).map_err(|e| TsotError::Parse {
        line: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| SerializedTranscript::parse_line(l, i + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(text: &str, begin: f64, end: f64, speaker: &str) -> SpeakerWord {
        SpeakerWord {
            text: text.into(),
            begin,
            end,
            speaker: speaker.into(),
        }
    }

    fn joined(words: &[SpeakerWord]) -> String {
        serialize("s", words).unwrap().tokens.join(" ")
    }

    #[test]
    fn examples() {
        assert_eq!(
            joined(&[w("hi", 0.0, 0.3, "A"), w("there", 0.3, 0.6, "A"), w("yes", 0.5, 0.9, "B")]),
            "hi there <cc> yes"
        );
        assert_eq!(
            joined(&[w("a", 0.0, 1.0, "A"), w("b", 1.0, 2.0, "A"), w("c", 2.0, 3.0, "A"), w("d", 3.0, 4.0, "A")]),
            "a b c d"
        );
        assert_eq!(
            joined(&[w("a2", 0.5, 2.0, "A"), w("b1", 0.2, 1.5, "B"), w("a1", 0.0, 1.0, "A")]),
            "a1 <cc> b1 <cc> a2"
        );
    }

    #[test]
    fn deserialize_examples() {
        let s = SerializedTranscript {
            sample_id: "x".into(),
            tokens: ["hi", "there", "<cc>", "yes"].map(String::from).to_vec(),
        };
        assert_eq!(deserialize(&s).unwrap(), [vec!["hi".to_string(), "there".into()], vec!["yes".into()]]);
        let plain = SerializedTranscript {
            sample_id: "x".into(),
            tokens: vec!["a".into(), "b".into()],
        };
        assert_eq!(deserialize(&plain).unwrap()[1], Vec::<String>::new());
    }

    #[test]
    fn marker_placement_is_validated() {
        for bad in [&["<cc>", "a"][..], &["a", "<cc>"], &["a", "<cc>", "<cc>", "b"]] {
            let s = SerializedTranscript {
                sample_id: "x".into(),
                tokens: bad.iter().map(|t| t.to_string()).collect(),
            };
            assert!(matches!(deserialize(&s), Err(TsotError::MisplacedMarker(_))));
        }
    }

    #[test]
    fn serialize_errors() {
        assert_eq!(serialize("s", &[]), Err(TsotError::Empty));
        assert!(matches!(serialize("s", &[w("two words", 0.0, 1.0, "A")]), Err(TsotError::InvalidWord(_))));
        assert!(matches!(serialize("s", &[w("<cc>", 0.0, 1.0, "A")]), Err(TsotError::InvalidWord(_))));
        assert!(matches!(
            serialize("s", &[w("x", 0.0, f64::NAN, "A")]),
            Err(TsotError::NonFiniteTime(_))
        ));
    }

    #[test]
    fn text_line_round_trip() {
        let s = serialize("sample_1", &[w("a", 0.0, 1.0, "A"), w("b", 0.5, 1.5, "B")]).unwrap();
        let line = s.to_line();
        assert_eq!(line, "sample_1\ta <cc> b");
        assert_eq!(parse_tsot_text(line.as_bytes()).unwrap(), vec![s]);
        assert!(parse_tsot_text(b"no tab here").is_err());
        assert!(parse_tsot_text(b"id\t<cc> a").is_err());
    }
}
