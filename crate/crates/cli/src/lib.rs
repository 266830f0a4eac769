//! Command-line front end for the overlap simulation pipeline.

mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use overlapsim::audio::{encode_wav, write_wav, DEFAULT_SAMPLE_RATE};
use overlapsim::discretize::{discretize_time, discretize_word, parse_token_jsonl, write_token_jsonl};
use overlapsim::pool::{build_pool, parse_manifest, write_manifest, PoolConfig, UtterancePool};
use overlapsim::simulate::{parse_annotation_jsonl, AnnotationRecord, Batch, BatchConfig};
use overlapsim::slm::{train, DEFAULT_ORDER};
use overlapsim::stats::{compare_stats, compute_stats, OverlapStats};
use overlapsim::transcript::{assign_channels, parse_transcripts, segment_by_silence, TranscriptFormat};
use overlapsim::tsot::{serialize, SpeakerWord};
use overlapsim::{Algorithm, NGramModel, SimConfig, SimError, TokenKind, TokenSequence};

use config::Section;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

const DEFAULT_D: f64 = 0.25;
const DEFAULT_SILENCE_THRESHOLD: f64 = 0.5;
const DEFAULT_MAX_SPEAKERS: usize = 5;
const DEFAULT_RATIOS: &str = "random=0.3,word=0.3,time=0.4";
const CHUNK: u64 = 64;

/// Bad invocation, as opposed to bad data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "overlapsim", version, about = "Simulate multi-talker speech with realistic overlap")]
struct Cli {
    /// TOML file with one table per subcommand; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn transcripts into overlap token sequences.
    Discretize(DiscretizeArgs),
    /// Train an n-gram model on token sequences.
    TrainSlm(TrainArgs),
    /// Segment a source corpus and write an utterance pool.
    BuildPool(BuildPoolArgs),
    /// Generate mixed samples with annotations.
    Simulate(SimulateArgs),
    /// Write t-SOT text for simulated annotations.
    Serialize(SerializeArgs),
    /// Compute overlap statistics for transcripts or annotations.
    Stats(StatsArgs),
    /// Compare two statistics reports.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Time,
    Word,
}

#[derive(Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum InputFormat {
    Jsonl,
    Ctm,
}

impl From<InputFormat> for TranscriptFormat {
    fn from(f: InputFormat) -> Self {
        match f {
            InputFormat::Jsonl => TranscriptFormat::Jsonl,
            InputFormat::Ctm => TranscriptFormat::Ctm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum AlgorithmChoice {
    Random,
    Time,
    Word,
    Mix,
}

#[derive(Args)]
struct DiscretizeArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Window length in seconds (time mode).
    #[arg(long)]
    d: Option<f64>,
    /// Longest silence inside a word-mode segment, in seconds.
    #[arg(long)]
    silence_threshold: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BuildPoolArgs {
    /// Source corpus manifest (JSONL).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    silence_threshold: Option<f64>,
    #[arg(long)]
    padding: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Receives `pool.jsonl` and the segment WAVs under `audio/`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file; repeat to give both a time-based and a word-based model.
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Pool manifest written by `build-pool`.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmChoice>,
    /// Mixture for `--algorithm mix`, e.g. `random=0.3,word=0.3,time=0.4`.
    #[arg(long)]
    ratios: Option<String>,
    #[arg(long)]
    count: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Upper bound on utterances in a random-baseline sample.
    #[arg(long)]
    max_speakers: Option<usize>,
    #[arg(long)]
    sample_rate: Option<u32>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    gain_jitter_db: Option<f64>,
}

#[derive(Args)]
struct SerializeArgs {
    /// Annotation JSONL written by `simulate`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    real: Option<PathBuf>,
    #[arg(long)]
    sim: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                EXIT_USAGE
            } else {
                EXIT_DATA
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Discretize(a) => discretize_cmd(a, Section::load(cfg, "discretize")?),
        Command::TrainSlm(a) => train_cmd(a, Section::load(cfg, "train-slm")?),
        Command::BuildPool(a) => build_pool_cmd(a, Section::load(cfg, "build-pool")?),
        Command::Simulate(a) => simulate_cmd(a, Section::load(cfg, "simulate")?),
        Command::Serialize(a) => serialize_cmd(a, Section::load(cfg, "serialize")?),
        Command::Stats(a) => stats_cmd(a, Section::load(cfg, "stats")?),
        Command::Compare(a) => compare_cmd(a, Section::load(cfg, "compare")?),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(output: Option<&Path>, body: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .context("writing to stdout"),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn discretize_cmd(a: DiscretizeArgs, cfg: Section) -> Result<()> {
    let input: PathBuf = cfg.require(a.input, "input")?;
    let format = cfg.pick(a.format, "format", InputFormat::Jsonl)?;
    let mode = cfg.require(a.mode, "mode")?;
    let d = cfg.pick(a.d, "d", DEFAULT_D)?;
    let threshold = cfg.pick(a.silence_threshold, "silence-threshold", DEFAULT_SILENCE_THRESHOLD)?;
    let output: Option<PathBuf> = cfg.optional(a.output, "output")?;
    cfg.finish()?;
    if !(d.is_finite() && d > 0.0) {
        return Err(usage(format!("--d must be positive, got {d}")));
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(usage(format!("--silence-threshold must be positive, got {threshold}")));
    }

    let transcripts = parse_transcripts(&read(&input)?, format.into())?;
    let mut seqs = Vec::new();
    for t in transcripts.iter().filter(|t| !t.is_empty()) {
        match mode {
            Mode::Time => seqs.push(discretize_time(t, &assign_channels(t)?, d)?),
            Mode::Word => {
                for seg in segment_by_silence(t, threshold)? {
                    seqs.push(discretize_word(&seg, &assign_channels(&seg)?, threshold)?);
                }
            }
        }
    }
    emit(output.as_deref(), &write_token_jsonl(&seqs))?;
    eprintln!("{} recordings -> {} token sequences", transcripts.len(), seqs.len());
    Ok(())
}

fn train_cmd(a: TrainArgs, cfg: Section) -> Result<()> {
    let input: PathBuf = cfg.require(a.input, "input")?;
    let order = cfg.pick(a.order, "order", DEFAULT_ORDER)?;
    let output: PathBuf = cfg.require(a.output, "output")?;
    cfg.finish()?;
    if order == 0 {
        return Err(usage("--order must be at least 1"));
    }
    let corpus: Vec<TokenSequence> = parse_token_jsonl(&read(&input)?)?;
    let model = train(&corpus, order)?;
    fs::write(&output, model.save()).with_context(|| format!("writing {}", output.display()))?;
    println!(
        "trained order-{} model on {} sequences ({} contexts)",
        model.order(),
        corpus.len(),
        model.num_contexts()
    );
    Ok(())
}

fn file_stem_for(index: usize, id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("{index:06}_{clean}")
}

fn build_pool_cmd(a: BuildPoolArgs, cfg: Section) -> Result<()> {
    let manifest: PathBuf = cfg.require(a.manifest, "manifest")?;
    let defaults = PoolConfig::default();
    let config = PoolConfig {
        pool_size: cfg.pick(a.size, "size", defaults.pool_size)?,
        silence_threshold: cfg.pick(a.silence_threshold, "silence-threshold", defaults.silence_threshold)?,
        padding: cfg.pick(a.padding, "padding", defaults.padding)?,
        seed: cfg.pick(a.seed, "seed", defaults.seed)?,
    };
    let out_dir: PathBuf = cfg.require(a.out_dir, "out-dir")?;
    cfg.finish()?;

    let base = manifest.parent().unwrap_or(Path::new("."));
    let source = parse_manifest(&read(&manifest)?, base)?;
    let pool = build_pool(&source, &config).map_err(|e| match e {
        overlapsim::PoolError::InvalidArgument(m) => usage(m),
        other => other.into(),
    })?;

    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir).with_context(|| format!("creating {}", audio_dir.display()))?;
    let names: Vec<String> = pool
        .utterances()
        .iter()
        .enumerate()
        .map(|(i, u)| format!("audio/{}.wav", file_stem_for(i, &u.utterance_id)))
        .collect();
    pool.utterances()
        .par_iter()
        .zip(&names)
        .try_for_each(|(u, name)| -> Result<()> {
            let buf = u.load_audio()?;
            write_wav(&buf, out_dir.join(name))?;
            Ok(())
        })?;
    let mut names_iter = names.iter();
    let body = write_manifest(pool.utterances(), |_| names_iter.next().expect("one name per utterance").clone());
    let pool_path = out_dir.join("pool.jsonl");
    fs::write(&pool_path, body).with_context(|| format!("writing {}", pool_path.display()))?;
    println!(
        "{} source utterances -> {} pool segments in {}",
        source.len(),
        pool.len(),
        pool_path.display()
    );
    Ok(())
}

fn parse_ratios(spec: &str) -> Result<Vec<(Algorithm, f64)>> {
    let mut out: Vec<(Algorithm, f64)> = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("ratio {part:?} is not of the form name=value")))?;
        let algorithm: Algorithm = name.trim().parse().map_err(|_| usage(format!("unknown algorithm {name:?}")))?;
        let r: f64 = value.trim().parse().map_err(|_| usage(format!("bad ratio value {value:?}")))?;
        if out.iter().any(|(a, _)| *a == algorithm) {
            return Err(usage(format!("algorithm {algorithm} listed twice")));
        }
        out.push((algorithm, r));
    }
    if out.is_empty() {
        return Err(usage("empty --ratios"));
    }
    Ok(out)
}

#[derive(Serialize)]
struct ManifestFile {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    version: u32,
    seed: u64,
    count: u64,
    ratios: Vec<(Algorithm, f64)>,
    max_speakers: usize,
    sample_rate: u32,
    files: Vec<ManifestFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn simulate_cmd(a: SimulateArgs, cfg: Section) -> Result<()> {
    let models: Vec<PathBuf> = cfg.pick((!a.model.is_empty()).then_some(a.model), "model", Vec::new())?;
    let pool_path: PathBuf = cfg.require(a.pool, "pool")?;
    let algorithm = cfg.pick(a.algorithm, "algorithm", AlgorithmChoice::Mix)?;
    let ratios_flag: Option<String> = cfg.optional(a.ratios, "ratios")?;
    let count = cfg.pick(a.count, "count", 1)?;
    let seed = cfg.pick(a.seed, "seed", 0)?;
    let out_dir: PathBuf = cfg.require(a.out_dir, "out-dir")?;
    let max_speakers = cfg.pick(a.max_speakers, "max-speakers", DEFAULT_MAX_SPEAKERS)?;
    let sim = SimConfig {
        sample_rate: cfg.pick(a.sample_rate, "sample-rate", DEFAULT_SAMPLE_RATE)?,
        max_tokens: cfg.optional(a.max_tokens, "max-tokens")?,
        gain_jitter_db: cfg.pick(a.gain_jitter_db, "gain-jitter-db", 0.0)?,
    };
    cfg.finish()?;

    let ratios = match (algorithm, ratios_flag) {
        (AlgorithmChoice::Mix, r) => parse_ratios(r.as_deref().unwrap_or(DEFAULT_RATIOS))?,
        (_, Some(_)) => return Err(usage("--ratios only applies to --algorithm mix")),
        (AlgorithmChoice::Random, None) => vec![(Algorithm::Random, 1.0)],
        (AlgorithmChoice::Time, None) => vec![(Algorithm::Time, 1.0)],
        (AlgorithmChoice::Word, None) => vec![(Algorithm::Word, 1.0)],
    };

    let mut time_model: Option<NGramModel> = None;
    let mut word_model: Option<NGramModel> = None;
    for path in &models {
        let m = NGramModel::load(&read(path)?).with_context(|| format!("loading {}", path.display()))?;
        let slot = match m.kind() {
            TokenKind::Time { .. } => &mut time_model,
            TokenKind::Word => &mut word_model,
        };
        if slot.is_some() {
            return Err(usage(format!("two models of the same kind given ({})", path.display())));
        }
        *slot = Some(m);
    }

    let base = pool_path.parent().unwrap_or(Path::new("."));
    let pool = UtterancePool::from_utterances(parse_manifest(&read(&pool_path)?, base)?)?;
    let config = BatchConfig {
        ratios: ratios.clone(),
        max_speakers,
        sim,
    };
    let batch = Batch::new(config, &pool, time_model.as_ref(), word_model.as_ref()).map_err(|e| match e {
        SimError::InvalidConfig(m) => usage(m),
        other => other.into(),
    })?;

    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut annotations = String::new();
    let mut files = Vec::new();
    let mut start = 0;
    while start < count {
        let end = (start + CHUNK).min(count);
        let chunk: Vec<(u64, Vec<u8>, String)> = (start..end)
            .into_par_iter()
            .map(|i| -> Result<_> {
                let sample = batch.generate(seed, i).with_context(|| format!("sample {i}"))?;
                let id = format!("sample_{i:06}");
                let wav = encode_wav(&sample.audio)?;
                Ok((i, wav, AnnotationRecord::from_sample(id, &sample).to_json_line()))
            })
            .collect::<Result<_>>()?;
        for (i, wav, line) in chunk {
            let name = format!("sample_{i:06}.wav");
            fs::write(out_dir.join(&name), &wav).with_context(|| format!("writing {name}"))?;
            files.push(ManifestFile {
                path: name,
                sha256: sha256_hex(&wav),
            });
            annotations.push_str(&line);
            annotations.push('\n');
        }
        start = end;
    }
    fs::write(out_dir.join("annotations.jsonl"), &annotations).context("writing annotations.jsonl")?;
    files.push(ManifestFile {
        path: "annotations.jsonl".into(),
        sha256: sha256_hex(annotations.as_bytes()),
    });
    let manifest = RunManifest {
        version: 1,
        seed,
        count,
        ratios,
        max_speakers,
        sample_rate: sim.sample_rate,
        files,
    };
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    fs::write(out_dir.join("manifest.json"), body).context("writing manifest.json")?;
    println!("wrote {count} samples to {}", out_dir.display());
    Ok(())
}

fn serialize_cmd(a: SerializeArgs, cfg: Section) -> Result<()> {
    let input: PathBuf = cfg.require(a.input, "input")?;
    let output: Option<PathBuf> = cfg.optional(a.output, "output")?;
    cfg.finish()?;
    let mut body = String::new();
    for rec in parse_annotation_jsonl(&read(&input)?)? {
        if rec.words.is_empty() {
            continue;
        }
        let words: Vec<SpeakerWord> = rec
            .words
            .iter()
            .map(|w| SpeakerWord {
                text: w.w.clone(),
                begin: w.b,
                end: w.e,
                speaker: w.spk.clone(),
            })
            .collect();
        let s = serialize(&rec.sample_id, &words).with_context(|| format!("sample {}", rec.sample_id))?;
        body.push_str(&s.to_line());
        body.push('\n');
    }
    emit(output.as_deref(), &body)
}

fn print_summary(s: &OverlapStats) {
    let total: u64 = s.token_histogram.iter().sum::<u64>().max(1);
    println!("recordings         {}", s.recordings);
    println!("total speech       {:.3} s", s.total_speech);
    println!("speech union       {:.3} s", s.speech_union);
    println!("overlapped speech  {:.3} s", s.overlapped_speech);
    println!("overlap ratio      {:.4}", s.overlap_ratio);
    for (x, n) in s.token_histogram.iter().enumerate() {
        println!("token {x}            {n} ({:.4})", *n as f64 / total as f64);
    }
}

fn stats_cmd(a: StatsArgs, cfg: Section) -> Result<()> {
    let input: PathBuf = cfg.require(a.input, "input")?;
    let format = cfg.pick(a.format, "format", InputFormat::Jsonl)?;
    let d = cfg.pick(a.d, "d", DEFAULT_D)?;
    let output: Option<PathBuf> = cfg.optional(a.output, "output")?;
    cfg.finish()?;
    if !(d.is_finite() && d > 0.0) {
        return Err(usage(format!("--d must be positive, got {d}")));
    }
    let transcripts = parse_transcripts(&read(&input)?, format.into())?;
    let stats = compute_stats(&transcripts, d)?;
    let json = serde_json::to_string_pretty(&stats)? + "\n";
    match output {
        Some(p) => {
            fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?;
            print_summary(&stats);
        }
        None => emit(None, &json)?,
    }
    Ok(())
}

fn compare_cmd(a: CompareArgs, cfg: Section) -> Result<()> {
    let real: PathBuf = cfg.require(a.real, "real")?;
    let sim: PathBuf = cfg.require(a.sim, "sim")?;
    let output: Option<PathBuf> = cfg.optional(a.output, "output")?;
    cfg.finish()?;
    let load = |p: &Path| -> Result<OverlapStats> {
        serde_json::from_slice(&read(p)?).with_context(|| format!("parsing report {}", p.display()))
    };
    let report = compare_stats(&load(&real)?, &load(&sim)?)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match output {
        Some(p) => {
            fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?;
            println!("{:<20} {:>12} {:>12} {:>10}", "field", "real", "sim", "rel diff");
            for f in &report.fields {
                let rel = f.rel_diff.map_or("-".to_string(), |r| format!("{r:.4}"));
                println!("{:<20} {:>12.4} {:>12.4} {:>10}", f.field, f.real, f.sim, rel);
            }
            println!("token TV distance    {:.4}", report.token_tv_distance);
        }
        None => emit(None, &json)?,
    }
    Ok(())
}
