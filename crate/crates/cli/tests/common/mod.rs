#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use overlapsim::audio::{write_wav, AudioBuffer};

pub const RATE: u32 = 16_000;

pub fn cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let argv: Vec<std::ffi::OsString> = std::iter::once("overlapsim".into())
        .chain(args.into_iter().map(|a| a.as_ref().to_owned()))
        .collect();
    overlapsim_cli::run(argv)
}

pub fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

fn tone(seconds: f64, freq: f64) -> AudioBuffer {
    let n = (seconds * RATE as f64).round() as usize;
    let samples = (0..n)
        .map(|i| (0.2 * (2.0 * std::f64::consts::PI * freq * i as f64 / RATE as f64).sin()) as f32)
        .collect();
    AudioBuffer::new(samples, RATE).unwrap()
}

/// Eight single-speaker recordings with word timings; the odd ones contain a
/// 1.2 s pause so the pool builder has something to split.
pub fn source_corpus(dir: &Path) -> PathBuf {
    let audio = dir.join("src_audio");
    fs::create_dir_all(&audio).unwrap();
    let mut manifest = String::new();
    for k in 0..8 {
        let n_words = 2 + k % 4;
        let mut words = Vec::new();
        let mut t = 0.1;
        for i in 0..n_words {
            if k % 2 == 1 && i == n_words / 2 {
                t += 1.2;
            }
            words.push(serde_json::json!([format!("w{k}_{i}"), t, t + 0.3]));
            t += 0.35;
        }
        let duration = t + 0.1;
        let name = format!("src_audio/utt{k}.wav");
        write_wav(&tone(duration, 200.0 + 40.0 * k as f64), dir.join(&name)).unwrap();
        let rec = serde_json::json!({
            "utterance_id": format!("utt{k}"),
            "audio": name,
            "duration": duration,
            "words": words,
            "speaker_label": format!("spk{}", k % 3),
        });
        manifest.push_str(&rec.to_string());
        manifest.push('\n');
    }
    let path = dir.join("source.jsonl");
    fs::write(&path, manifest).unwrap();
    path
}

/// Two-speaker transcripts with some overlap and one long silence each.
pub fn meeting_transcripts(dir: &Path) -> PathBuf {
    let mut out = String::new();
    for r in 0..4 {
        let shift = 0.1 * r as f64;
        let words = [
            ("hello", 0.0, 0.4, "A"),
            ("there", 0.45, 0.9, "A"),
            ("hi", 0.8, 1.1, "B"),
            ("yes", 1.05, 1.5, "B"),
            ("right", 1.4, 1.8, "A"),
            ("so", 3.0 + shift, 3.3 + shift, "B"),
            ("okay", 3.2 + shift, 3.6 + shift, "A"),
        ];
        let words: Vec<_> = words
            .iter()
            .map(|&(w, b, e, s)| serde_json::json!({"w": w, "b": b, "e": e, "spk": s}))
            .collect();
        out.push_str(&serde_json::json!({"recording_id": format!("meet{r}"), "words": words}).to_string());
        out.push('\n');
    }
    let path = dir.join("meetings.jsonl");
    fs::write(&path, out).unwrap();
    path
}

pub fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.trim().is_empty()).count()
}

/// Runs discretize, train-slm (both kinds) and build-pool; returns
/// `(time_model, word_model, pool_manifest)`.
pub fn pipeline(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let meetings = meeting_transcripts(dir);
    let source = source_corpus(dir);
    let mut models = Vec::new();
    for mode in ["time", "word"] {
        let tokens = dir.join(format!("{mode}_tokens.jsonl"));
        let model = dir.join(format!("{mode}_model.json"));
        assert_eq!(cli(["discretize", "--input", &p(&meetings), "--mode", mode, "--output", &p(&tokens)]), 0);
        assert_eq!(cli(["train-slm", "--input", &p(&tokens), "--order", "4", "--output", &p(&model)]), 0);
        models.push(model);
    }
    let pool_dir = dir.join("pool");
    assert_eq!(cli(["build-pool", "--manifest", &p(&source), "--out-dir", &p(&pool_dir)]), 0);
    let word = models.pop().unwrap();
    let time = models.pop().unwrap();
    (time, word, pool_dir.join("pool.jsonl"))
}

/// All regular files under `dir`, relative path -> bytes.
pub fn tree(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}
