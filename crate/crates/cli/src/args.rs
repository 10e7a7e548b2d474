//! Argument structs for every subcommand.
//!
//! Each command's flags are all optional at parse time; `resolve()` layers
//! command line over `--config` file over built-in defaults and returns the
//! concrete spec that also gets written next to the output as the resolved
//! config. Loading that file back through `--config` replays the run.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use vtx_core::synthesis::SurvivorSampling;

fn load_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn parse_sampling(s: &str) -> Result<SurvivorSampling, String> {
    match s {
        "uniform" => Ok(SurvivorSampling::Uniform),
        "proportional" => Ok(SurvivorSampling::Proportional),
        other => Err(format!("unknown sampling mode '{other}' (uniform|proportional)")),
    }
}

macro_rules! pick {
    ($cli:expr, $file:expr, $field:ident) => {
        $cli.$field.or($file.$field)
    };
    ($cli:expr, $file:expr, $field:ident, $default:expr) => {
        $cli.$field.or($file.$field).unwrap_or($default)
    };
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FeaturesArgs {
    /// Replay a previously written resolved config.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory of numbered PNG/PPM frames (video features).
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// PCM WAV file (log-mel audio features).
    #[arg(long)]
    pub wav: Option<PathBuf>,
    /// Video frame rate; required with --frames.
    #[arg(long)]
    pub fps: Option<f64>,
    /// Segment window in seconds.
    #[arg(long)]
    pub window: Option<f64>,
    /// Segment stride in seconds.
    #[arg(long)]
    pub stride: Option<f64>,
    /// Thumbnail side for pixel features.
    #[arg(long)]
    pub thumb: Option<usize>,
    #[arg(long)]
    pub n_mels: Option<usize>,
    #[arg(long)]
    pub frame_ms: Option<f64>,
    #[arg(long)]
    pub hop_ms: Option<f64>,
    #[arg(long)]
    pub fmin: Option<f64>,
    /// Upper mel band edge in Hz (default: Nyquist).
    #[arg(long)]
    pub fmax: Option<f64>,
    #[arg(long)]
    pub log_floor: Option<f64>,
    /// L2-normalize feature rows before writing.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub normalize: Option<bool>,
    /// Output embedding file (VTXE).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
pub struct FeaturesSpec {
    pub frames: Option<PathBuf>,
    pub wav: Option<PathBuf>,
    pub fps: f64,
    pub window: f64,
    pub stride: f64,
    pub thumb: usize,
    pub n_mels: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fmin: f64,
    pub fmax: Option<f64>,
    pub log_floor: f64,
    pub normalize: bool,
    pub out: PathBuf,
}

impl FeaturesArgs {
    pub fn resolve(self) -> Result<FeaturesSpec> {
        let file: FeaturesArgs = load_config(&self.config)?;
        let out = pick!(self, file, out);
        let Some(out) = out else { bail!("--out is required") };
        Ok(FeaturesSpec {
            frames: pick!(self, file, frames),
            wav: pick!(self, file, wav),
            fps: pick!(self, file, fps, 30.0),
            window: pick!(self, file, window, 0.5),
            stride: pick!(self, file, stride, 0.2),
            thumb: pick!(self, file, thumb, 16),
            n_mels: pick!(self, file, n_mels, 64),
            frame_ms: pick!(self, file, frame_ms, 25.0),
            hop_ms: pick!(self, file, hop_ms, 10.0),
            fmin: pick!(self, file, fmin, 50.0),
            fmax: pick!(self, file, fmax),
            log_floor: pick!(self, file, log_floor, 1e-10),
            normalize: pick!(self, file, normalize, false),
            out,
        })
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input embedding file (VTXE).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Negatives sampled per query.
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Training temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub output_dim: Option<usize>,
    /// Include the positive in the loss denominator (standard formulation).
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub include_positive: Option<bool>,
    /// Output model file (VTXM).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Per-epoch loss CSV (default: <out>.loss.csv).
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Serialize)]
pub struct TrainSpec {
    pub embeddings: PathBuf,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub tau: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub include_positive: bool,
    pub out: PathBuf,
    pub loss_csv: PathBuf,
}

impl TrainArgs {
    pub fn resolve(self) -> Result<TrainSpec> {
        let file: TrainArgs = load_config(&self.config)?;
        let Some(embeddings) = pick!(self, file, embeddings) else {
            bail!("--embeddings is required")
        };
        let Some(out) = pick!(self, file, out) else { bail!("--out is required") };
        let loss_csv = pick!(self, file, loss_csv)
            .unwrap_or_else(|| out.with_extension("loss.csv"));
        Ok(TrainSpec {
            embeddings,
            learning_rate: pick!(self, file, learning_rate, 1e-4),
            epochs: pick!(self, file, epochs, 30),
            negatives: pick!(self, file, negatives, 64),
            tau: pick!(self, file, tau, 0.1),
            seed: super::draw_seed(pick!(self, file, seed)),
            init_scale: pick!(self, file, init_scale, 1.0),
            batch_size: pick!(self, file, batch_size, 32),
            hidden_dim: pick!(self, file, hidden_dim, 512),
            output_dim: pick!(self, file, output_dim, 512),
            include_positive: pick!(self, file, include_positive, false),
            out,
            loss_csv,
        })
    }
}

// ---------------------------------------------------------------------------
// synthesize / condition
// ---------------------------------------------------------------------------

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SynthesizeArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Trained model file (VTXM).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Embedding file the model was trained on (VTXE).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long)]
    pub stride: Option<f64>,
    /// Inference temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Survivor cutoff as a fraction of the row max, in (0, 1].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// uniform | proportional
    #[arg(long, value_parser = parse_sampling)]
    pub sampling: Option<SurvivorSampling>,
    /// Output length in seconds.
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed start segment (default: random).
    #[arg(long)]
    pub start_segment: Option<usize>,
    /// Output edit list (JSON).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
pub struct SynthesizeSpec {
    pub model: PathBuf,
    pub embeddings: PathBuf,
    pub fps: f64,
    pub window: f64,
    pub stride: f64,
    pub tau: f64,
    pub threshold: f64,
    pub sampling: SurvivorSampling,
    pub length: f64,
    pub seed: u64,
    pub start_segment: Option<usize>,
    pub out: PathBuf,
}

impl SynthesizeArgs {
    pub fn resolve(self) -> Result<SynthesizeSpec> {
        let file: SynthesizeArgs = load_config(&self.config)?;
        let Some(model) = pick!(self, file, model) else { bail!("--model is required") };
        let Some(embeddings) = pick!(self, file, embeddings) else {
            bail!("--embeddings is required")
        };
        let Some(out) = pick!(self, file, out) else { bail!("--out is required") };
        Ok(SynthesizeSpec {
            model,
            embeddings,
            fps: pick!(self, file, fps, 30.0),
            window: pick!(self, file, window, 0.5),
            stride: pick!(self, file, stride, 0.2),
            tau: pick!(self, file, tau, 0.5),
            threshold: pick!(self, file, threshold, 0.999),
            sampling: pick!(self, file, sampling, SurvivorSampling::Uniform),
            length: pick!(self, file, length, 30.0),
            seed: super::draw_seed(pick!(self, file, seed)),
            start_segment: pick!(self, file, start_segment),
            out,
        })
    }
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ConditionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub base: SynthesizeArgs,
    /// Embeddings of the input video's own audio (VTXE).
    #[arg(long)]
    pub audio_source: Option<PathBuf>,
    /// Embeddings of the external conditioning audio (VTXE).
    #[arg(long)]
    pub audio_cond: Option<PathBuf>,
    /// Audio grid rate in units/second (the audio sample rate).
    #[arg(long)]
    pub audio_rate: Option<f64>,
    /// Video-coherence weight in [0, 1]; 1 ignores the audio.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Serialize)]
pub struct ConditionSpec {
    pub model: PathBuf,
    pub embeddings: PathBuf,
    pub audio_source: PathBuf,
    pub audio_cond: PathBuf,
    pub audio_rate: f64,
    pub alpha: f64,
    pub fps: f64,
    pub window: f64,
    pub stride: f64,
    pub tau: f64,
    pub threshold: f64,
    pub sampling: SurvivorSampling,
    pub seed: u64,
    pub start_segment: Option<usize>,
    pub out: PathBuf,
}

impl ConditionArgs {
    pub fn resolve(self) -> Result<ConditionSpec> {
        let file: ConditionArgs = load_config(&self.base.config)?;
        let Some(audio_source) = pick!(self, file, audio_source) else {
            bail!("--audio-source is required")
        };
        let Some(audio_cond) = pick!(self, file, audio_cond) else {
            bail!("--audio-cond is required")
        };
        let audio_rate = pick!(self, file, audio_rate, 16000.0);
        let alpha = pick!(self, file, alpha, 0.5);
        let mut base_cli = self.base;
        base_cli.config = None;
        let merged = SynthesizeArgs {
            config: None,
            model: base_cli.model.or(file.base.model),
            embeddings: base_cli.embeddings.or(file.base.embeddings),
            fps: base_cli.fps.or(file.base.fps),
            window: base_cli.window.or(file.base.window),
            stride: base_cli.stride.or(file.base.stride),
            tau: base_cli.tau.or(file.base.tau),
            threshold: base_cli.threshold.or(file.base.threshold),
            sampling: base_cli.sampling.or(file.base.sampling),
            length: Some(0.0),
            seed: base_cli.seed.or(file.base.seed),
            start_segment: base_cli.start_segment.or(file.base.start_segment),
            out: base_cli.out.or(file.base.out),
        };
        let spec = merged.resolve()?;
        Ok(ConditionSpec {
            model: spec.model,
            embeddings: spec.embeddings,
            audio_source,
            audio_cond,
            audio_rate,
            alpha,
            fps: spec.fps,
            window: spec.window,
            stride: spec.stride,
            tau: spec.tau,
            threshold: spec.threshold,
            sampling: spec.sampling,
            seed: spec.seed,
            start_segment: spec.start_segment,
            out: spec.out,
        })
    }
}

// ---------------------------------------------------------------------------
// classic
// ---------------------------------------------------------------------------

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ClassicArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory of numbered frames (pixel distances).
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Embedding file instead of pixels (the deep variant).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub thumb: Option<usize>,
    /// Diagonal filter width: 2 or 4.
    #[arg(long)]
    pub tap: Option<usize>,
    #[arg(long)]
    pub sigma_multiplier: Option<f64>,
    #[arg(long)]
    pub exponent: Option<f64>,
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Frames appended per step (1 = classic, grid stride = classic+).
    #[arg(long)]
    pub inference_stride: Option<usize>,
    /// Filtered-grid subsampling (classic++).
    #[arg(long)]
    pub filter_stride: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Output length in seconds.
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output edit list (JSON).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
pub struct ClassicSpec {
    pub frames: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub fps: f64,
    pub thumb: usize,
    pub tap: usize,
    pub sigma_multiplier: f64,
    pub exponent: f64,
    pub weight: f64,
    pub threshold: f64,
    pub inference_stride: usize,
    pub filter_stride: usize,
    pub max_iter: usize,
    pub eps: f64,
    pub length: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl ClassicArgs {
    pub fn resolve(self) -> Result<ClassicSpec> {
        let file: ClassicArgs = load_config(&self.config)?;
        let Some(out) = pick!(self, file, out) else { bail!("--out is required") };
        Ok(ClassicSpec {
            frames: pick!(self, file, frames),
            embeddings: pick!(self, file, embeddings),
            fps: pick!(self, file, fps, 30.0),
            thumb: pick!(self, file, thumb, 16),
            tap: pick!(self, file, tap, 4),
            sigma_multiplier: pick!(self, file, sigma_multiplier, 0.1),
            exponent: pick!(self, file, exponent, 2.0),
            weight: pick!(self, file, weight, 0.999),
            threshold: pick!(self, file, threshold, 0.999),
            inference_stride: pick!(self, file, inference_stride, 1),
            filter_stride: pick!(self, file, filter_stride, 1),
            max_iter: pick!(self, file, max_iter, 500),
            eps: pick!(self, file, eps, 1e-8),
            length: pick!(self, file, length, 30.0),
            seed: super::draw_seed(pick!(self, file, seed)),
            out,
        })
    }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Edit list to score (JSON).
    #[arg(long)]
    pub edit: Option<PathBuf>,
    /// Diversity window in seconds.
    #[arg(long)]
    pub window_seconds: Option<f64>,
    /// Output report (JSON).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// With --model/--embeddings: run a temperature sweep and write this CSV.
    #[arg(long)]
    pub sweep_csv: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long)]
    pub stride: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub length: Option<f64>,
    /// Comma-separated temperatures for the sweep.
    #[arg(long, value_delimiter = ',')]
    pub temps: Option<Vec<f64>>,
    /// Comma-separated seeds for the sweep.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Serialize)]
pub struct EvaluateSpec {
    pub edit: PathBuf,
    pub window_seconds: f64,
    pub out: PathBuf,
    pub sweep_csv: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub fps: f64,
    pub window: f64,
    pub stride: f64,
    pub threshold: f64,
    pub length: f64,
    pub temps: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl EvaluateArgs {
    pub fn resolve(self) -> Result<EvaluateSpec> {
        let file: EvaluateArgs = load_config(&self.config)?;
        let Some(edit) = pick!(self, file, edit) else { bail!("--edit is required") };
        let Some(out) = pick!(self, file, out) else { bail!("--out is required") };
        Ok(EvaluateSpec {
            edit,
            window_seconds: pick!(self, file, window_seconds, 30.0),
            out,
            sweep_csv: pick!(self, file, sweep_csv),
            model: pick!(self, file, model),
            embeddings: pick!(self, file, embeddings),
            fps: pick!(self, file, fps, 30.0),
            window: pick!(self, file, window, 0.5),
            stride: pick!(self, file, stride, 0.2),
            threshold: pick!(self, file, threshold, 0.999),
            length: pick!(self, file, length, 30.0),
            temps: pick!(self, file, temps)
                .unwrap_or_else(|| vec![0.1, 0.3, 0.5, 0.7, 1.0]),
            seeds: pick!(self, file, seeds).unwrap_or_else(|| (0..20).collect()),
        })
    }
}

// ---------------------------------------------------------------------------
// assemble
// ---------------------------------------------------------------------------

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AssembleArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Edit list to assemble (JSON).
    #[arg(long)]
    pub edit: Option<PathBuf>,
    /// Directory of the original frames.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Crossfade frames inserted at each jump; 0 disables.
    #[arg(long)]
    pub crossfade: Option<usize>,
    /// Directory for rendered crossfade frames.
    #[arg(long)]
    pub blend_dir: Option<PathBuf>,
    /// Output shell script.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
pub struct AssembleSpec {
    pub edit: PathBuf,
    pub frames: PathBuf,
    pub crossfade: usize,
    pub blend_dir: PathBuf,
    pub out: PathBuf,
}

impl AssembleArgs {
    pub fn resolve(self) -> Result<AssembleSpec> {
        let file: AssembleArgs = load_config(&self.config)?;
        let Some(edit) = pick!(self, file, edit) else { bail!("--edit is required") };
        let Some(frames) = pick!(self, file, frames) else { bail!("--frames is required") };
        let Some(out) = pick!(self, file, out) else { bail!("--out is required") };
        let blend_dir = pick!(self, file, blend_dir)
            .unwrap_or_else(|| out.with_extension("blends"));
        Ok(AssembleSpec {
            edit,
            frames,
            crossfade: pick!(self, file, crossfade, 4),
            blend_dir,
            out,
        })
    }
}
