//! Sample-accurate mono audio buffers and PCM16 WAV I/O.
//!
//! All mixing happens in `f32`. Quantization to 16-bit PCM (with saturation)
//! only happens when a buffer is encoded. Time-to-sample conversion rounds
//! half to even everywhere so that annotations line up with audio exactly.

use std::io::{Cursor, Read, Seek};
use std::path::Path;

use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported wav format: {0}")]
    UnsupportedFormat(String),
    #[error("sample rate mismatch: {expected} Hz vs {found} Hz")]
    RateMismatch { expected: u32, found: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("wav decode error: {0}")]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Converts seconds to a sample count, rounding half to even.
pub fn seconds_to_samples(seconds: f64, sample_rate: u32) -> usize {
    let n = (seconds * sample_rate as f64).round_ties_even();
    if n <= 0.0 {
        0
    } else {
        n as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn empty(sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(Vec::new(), sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    /// Copies `[start, end)` (in samples, clamped to the buffer) into a new buffer.
    pub fn slice(&self, start: usize, end: usize) -> AudioBuffer {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        AudioBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Copies the span `[start, end)` given in seconds.
    pub fn slice_seconds(&self, start: f64, end: f64) -> AudioBuffer {
        self.slice(
            seconds_to_samples(start, self.sample_rate),
            seconds_to_samples(end, self.sample_rate),
        )
    }

    /// Zero-pads the buffer so that it holds at least `len` samples.
    pub fn extend_to(&mut self, len: usize) {
        if self.samples.len() < len {
            self.samples.resize(len, 0.0);
        }
    }

    pub fn scale(&mut self, gain: f32) {
        for s in &mut self.samples {
            *s *= gain;
        }
    }

    /// Adds `other` into `self` starting at sample `offset`, growing `self` as needed.
    pub fn mix_in(&mut self, other: &AudioBuffer, offset: usize) -> Result<(), AudioError> {
        if other.sample_rate != self.sample_rate {
            return Err(AudioError::RateMismatch {
                expected: self.sample_rate,
                found: other.sample_rate,
            });
        }
        self.extend_to(offset + other.samples.len());
        for (dst, src) in self.samples[offset..].iter_mut().zip(&other.samples) {
            *dst += *src;
        }
        Ok(())
    }
}

/// `round(duration * rate)` zero samples.
pub fn silence(duration: f64, sample_rate: u32) -> Result<AudioBuffer, AudioError> {
    if !duration.is_finite() || duration < 0.0 {
        return Err(AudioError::InvalidArgument(format!(
            "silence duration must be finite and non-negative, got {duration}"
        )));
    }
    AudioBuffer::new(vec![0.0; seconds_to_samples(duration, sample_rate)], sample_rate)
}

/// Returns `a` with `u` added at `offset` seconds. The output has length
/// `max(len(a), offset + len(u))`.
pub fn mix_at(a: &AudioBuffer, u: &AudioBuffer, offset: f64) -> Result<AudioBuffer, AudioError> {
    if !offset.is_finite() || offset < 0.0 {
        return Err(AudioError::InvalidArgument(format!(
            "mix offset must be finite and non-negative, got {offset}"
        )));
    }
    let mut out = a.clone();
    out.mix_in(u, seconds_to_samples(offset, a.sample_rate))?;
    Ok(out)
}

fn spec_for(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

pub fn quantize(sample: f32) -> i16 {
    let v = (sample * 32768.0).round();
    if v.is_nan() {
        0
    } else {
        v.clamp(i16::MIN as f32, i16::MAX as f32) as i16
    }
}

fn decode<R: Read>(reader: hound::WavReader<R>) -> Result<AudioBuffer, AudioError> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!(
            "expected mono, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(AudioError::UnsupportedFormat("expected integer PCM".into()));
    }
    if spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedFormat(format!(
            "expected 16-bit samples, found {}",
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    AudioBuffer::new(samples, spec.sample_rate)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    decode(hound::WavReader::open(path)?)
}

/// Decodes an in-memory RIFF WAVE (PCM16 mono) file.
pub fn read_wav_bytes(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    decode(hound::WavReader::new(Cursor::new(bytes))?)
}

fn encode_into<W: std::io::Write + Seek>(buf: &AudioBuffer, w: W) -> Result<(), AudioError> {
    let mut writer = hound::WavWriter::new(w, spec_for(buf.sample_rate))?;
    {
        let mut pcm = writer.get_i16_writer(buf.samples.len() as u32);
        for &s in &buf.samples {
            pcm.write_sample(quantize(s));
        }
        pcm.flush()?;
    }
    writer.finalize()?;
    Ok(())
}

/// Encodes the buffer as a PCM16 mono WAV file in memory.
pub fn encode_wav(buf: &AudioBuffer) -> Result<Vec<u8>, AudioError> {
    let mut cursor = Cursor::new(Vec::new());
    encode_into(buf, &mut cursor)?;
    Ok(cursor.into_inner())
}

pub fn write_wav(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let bytes = encode_wav(buf)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(seconds: f64, rate: u32) -> AudioBuffer {
        let n = seconds_to_samples(seconds, rate);
        let samples = (0..n)
            .map(|i| {
                let v = 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / rate as f64).sin();
                // keep values on the PCM16 grid so a round trip is exact
                quantize(v as f32) as f32 / 32768.0
            })
            .collect();
        AudioBuffer::new(samples, rate).unwrap()
    }

    #[test]
    fn wav_round_trip_is_sample_identical() {
        let buf = sine(1.0, 16_000);
        let bytes = encode_wav(&buf).unwrap();
        let back = read_wav_bytes(&bytes).unwrap();
        assert_eq!(back, buf);
        let again = read_wav_bytes(&encode_wav(&back).unwrap()).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn wav_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let buf = sine(0.1, 8_000);
        write_wav(&buf, &path).unwrap();
        assert_eq!(read_wav(&path).unwrap(), buf);
    }

    #[test]
    fn stereo_is_rejected() {
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
            for _ in 0..8 {
                w.write_sample(0i16).unwrap();
            }
            w.finalize().unwrap();
        }
        let err = read_wav_bytes(&cursor.into_inner()).unwrap_err();
        assert!(matches!(err, AudioError::UnsupportedFormat(_)), "{err}");
    }

    #[test]
    fn non_16_bit_is_rejected() {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
            w.write_sample(0.25f32).unwrap();
            w.finalize().unwrap();
        }
        assert!(matches!(
            read_wav_bytes(&cursor.into_inner()),
            Err(AudioError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn write_saturates() {
        let buf = AudioBuffer::new(vec![1.5, -1.5, 1.0], 16_000).unwrap();
        let back = read_wav_bytes(&encode_wav(&buf).unwrap()).unwrap();
        assert_eq!(quantize(back.samples()[0]), i16::MAX);
        assert_eq!(quantize(back.samples()[1]), i16::MIN);
        assert_eq!(quantize(back.samples()[2]), i16::MAX);
    }

    #[test]
    fn silence_lengths() {
        assert!(silence(0.0, 16_000).unwrap().is_empty());
        assert_eq!(silence(0.25, 16_000).unwrap().len(), 4000);
        // 16000 / 3 = 5333.33.. -> 5333
        assert_eq!(silence(1.0 / 3.0, 16_000).unwrap().len(), 5333);
        // exact half cases go to even
        assert_eq!(silence(2.5, 1).unwrap().len(), 2);
        assert_eq!(silence(3.5, 1).unwrap().len(), 4);
        assert!(silence(-0.1, 16_000).is_err());
    }

    #[test]
    fn silence_concatenation_matches_total() {
        let a = silence(0.25, 16_000).unwrap().len();
        let b = silence(0.5, 16_000).unwrap().len();
        assert_eq!(a + b, silence(0.75, 16_000).unwrap().len());
    }

    #[test]
    fn mix_into_empty_is_identity() {
        let u = sine(0.2, 16_000);
        let out = mix_at(&AudioBuffer::empty(16_000).unwrap(), &u, 0.0).unwrap();
        assert_eq!(out, u);
    }

    #[test]
    fn mix_is_additive() {
        let mut imp = vec![0.0; 10];
        imp[3] = 1.0;
        let a = AudioBuffer::new(imp.clone(), 100).unwrap();
        let out = mix_at(&a, &a, 0.0).unwrap();
        assert_eq!(out.samples()[3], 2.0);
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn mix_length_arithmetic() {
        let a = silence(0.75, 16_000).unwrap();
        let u = AudioBuffer::new(vec![0.1; 16_000], 16_000).unwrap();
        let out = mix_at(&a, &u, 0.5).unwrap();
        assert_eq!(out.len(), 24_000);
        assert!((out.duration() - 1.5).abs() < 1e-12);
        assert_eq!(out.samples()[7_999], 0.0);
        assert_eq!(out.samples()[8_000], 0.1);
    }

    #[test]
    fn mix_rate_mismatch() {
        let a = silence(0.1, 16_000).unwrap();
        let u = silence(0.1, 8_000).unwrap();
        assert!(matches!(mix_at(&a, &u, 0.0), Err(AudioError::RateMismatch { .. })));
    }

    #[test]
    fn slice_clamps() {
        let buf = AudioBuffer::new((0..10).map(|i| i as f32).collect(), 10).unwrap();
        assert_eq!(buf.slice(8, 20).samples(), &[8.0, 9.0]);
        assert!(buf.slice(12, 20).is_empty());
        assert_eq!(buf.slice_seconds(0.2, 0.4).samples(), &[2.0, 3.0]);
    }
}
