//! Simulation of conversational overlap for multi-talker speech training data.
//!
//! Real two-party transcripts are reduced to overlap token sequences, an
//! n-gram model learns their statistics, and new mixtures are assembled by
//! placing single-speaker utterances where sampled token sequences say
//! speech should be.

pub mod audio;
pub mod discretize;
pub mod pool;
pub mod simulate;
pub mod slm;
pub mod stats;
pub mod transcript;
pub mod tsot;

pub use audio::{AudioBuffer, AudioError};
pub use discretize::{Activity, DiscretizeError, RunSpan, TokenKind, TokenSequence};
pub use pool::{PoolConfig, PoolError, Utterance, UtterancePool};
pub use simulate::{Algorithm, Batch, BatchConfig, MixedSample, SimConfig, SimError};
pub use slm::{NGramModel, SlmError};
pub use stats::{OverlapStats, StatsComparison, StatsError};
pub use transcript::{ChannelAssignment, TimedWord, Transcript, TranscriptError};
pub use tsot::{SerializedTranscript, TsotError};
