//! `vtx` — video texture synthesis pipeline.
//!
//! Subcommands cover the whole flow: `features` (pixel or log-mel per-segment
//! features, or ingest any VTXE file produced elsewhere), `train` (fit the
//! bi-gram encoder heads), `synthesize` / `condition` (sample an edit list,
//! optionally steered by a conditioning audio), `classic` (the pixel-distance
//! baseline and its variants), `evaluate` (transition diagnostics) and
//! `assemble` (emit a shell script that hands encoding to ffmpeg).
//!
//! Every run writes its fully resolved configuration as TOML next to its
//! output, and `--config` replays such a file; flags given on the command
//! line override config-file values. Exit codes: 0 success, 1 degenerate but
//! handled (e.g. an empty edit list), 2 validation error.

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vtx_core::classic::{
    classic_probabilities, classic_synthesize, future_cost, pairwise_embedding_distance,
    pairwise_frame_distance, tap_filter, ClassicConfig,
};
use vtx_core::contrastive::{load_model, save_model, train, TrainConfig};
use vtx_core::features::{
    l2_normalize_rows, logmel_segment_features, pixel_segment_features, MelConfig,
};
use vtx_core::media_io::{
    emit_assembly_script_for_plan, read_embeddings, read_frames, read_wav, render_blend_frames,
    write_embeddings, EditList,
};
use vtx_core::metrics::{diversity_score, extract_transitions, sweep_csv, temperature_sweep};
use vtx_core::segmentation::{build_grid, SegmentGrid};
use vtx_core::synthesis::{conditioned_synthesize, crossfade, synthesize, SynthesisConfig};

use args::*;

#[derive(Parser)]
#[command(name = "vtx", version, about = "Video texture synthesis from a single input video")]
struct Cli {
    /// Worker threads for parallel stages (default: VTX_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-segment features from a frame directory or a WAV file.
    Features(FeaturesArgs),
    /// Train the two-head transition model on an embedding file.
    Train(TrainArgs),
    /// Synthesize a video texture edit list with a trained model.
    Synthesize(SynthesizeArgs),
    /// Synthesize a texture conditioned on an external audio track.
    Condition(ConditionArgs),
    /// Run the classic pixel-distance pipeline (and its variants).
    Classic(ClassicArgs),
    /// Diversity metrics for an edit list; optional temperature sweep.
    Evaluate(EvaluateArgs),
    /// Render crossfade frames and emit an ffmpeg assembly script.
    Assemble(AssembleArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let outcome = match cli.command {
        Command::Features(a) => run_features(a),
        Command::Train(a) => run_train(a),
        Command::Synthesize(a) => run_synthesize(a),
        Command::Condition(a) => run_condition(a),
        Command::Classic(a) => run_classic(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Assemble(a) => run_assemble(a),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("VTX_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // Ignore failure: the pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

/// Write the fully resolved config next to the output file.
fn write_resolved<T: serde::Serialize>(out: &Path, resolved: &T) -> Result<()> {
    let path = resolved_config_path(out);
    let text = toml::to_string_pretty(resolved)?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn resolved_config_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.config.toml"))
}

fn draw_seed(explicit: Option<u64>) -> u64 {
    explicit.unwrap_or_else(rand::random)
}

fn run_features(cli: FeaturesArgs) -> Result<ExitCode> {
    let a = cli.resolve()?;
    let matrix = match (&a.frames, &a.wav) {
        (Some(dir), None) => {
            let frames = read_frames(dir, a.fps).context("reading frame directory")?;
            let grid = build_grid(frames.frame_count(), a.fps, a.window, a.stride)?;
            pixel_segment_features(&frames, &grid, a.thumb)?
        }
        (None, Some(wav)) => {
            let audio = read_wav(wav).context("reading WAV")?;
            let grid = build_grid(
                audio.samples.len(),
                audio.sample_rate as f64,
                a.window,
                a.stride,
            )?;
            let cfg = MelConfig {
                n_mels: a.n_mels,
                frame_ms: a.frame_ms,
                hop_ms: a.hop_ms,
                fmin: a.fmin,
                fmax: a.fmax,
                log_floor: a.log_floor,
            };
            logmel_segment_features(&audio, &grid, &cfg)?
        }
        _ => bail!("exactly one of --frames or --wav is required"),
    };
    let matrix = if a.normalize {
        let (normalized, zero_rows) = l2_normalize_rows(&matrix);
        for row in zero_rows {
            eprintln!("warning: segment {row} has an all-zero feature row");
        }
        normalized
    } else {
        matrix
    };
    write_embeddings(&matrix, &a.out)?;
    write_resolved(&a.out, &a)?;
    println!("segments={} dim={}", matrix.n(), matrix.d());
    Ok(ExitCode::SUCCESS)
}

fn run_train(cli: TrainArgs) -> Result<ExitCode> {
    let a = cli.resolve()?;
    let base = read_embeddings(&a.embeddings).context("reading embeddings")?;
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        negatives_per_query: a.negatives,
        temperature: a.tau,
        seed: a.seed,
        init_scale: a.init_scale,
        batch_size: a.batch_size,
        hidden_dim: a.hidden_dim,
        output_dim: a.output_dim,
        include_positive_in_denominator: a.include_positive,
    };
    let trained = train(&base, &cfg)?;
    save_model(&trained.model, &a.out)?;
    let mut csv = String::from("epoch,mean_loss\n");
    for (epoch, loss) in trained.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    std::fs::write(&a.loss_csv, csv)?;
    write_resolved(&a.out, &a)?;
    println!(
        "trained on {} segments (dim {}) for {} epochs",
        base.n(),
        base.d(),
        a.epochs
    );
    Ok(ExitCode::SUCCESS)
}

fn finish_edit_list(edit: &EditList, out: &Path) -> Result<ExitCode> {
    edit.save(out)?;
    if edit.steps.is_empty() {
        eprintln!("warning: synthesis produced an empty edit list");
        return Ok(ExitCode::from(1));
    }
    let transitions = extract_transitions(edit).len();
    println!(
        "emitted {} frames over {} steps ({} transitions)",
        edit.emitted_frame_count(),
        edit.steps.len(),
        transitions
    );
    Ok(ExitCode::SUCCESS)
}

fn run_synthesize(cli: SynthesizeArgs) -> Result<ExitCode> {
    let a = cli.resolve()?;
    let model = load_model(&a.model)?;
    let base = read_embeddings(&a.embeddings)?;
    let grid = SegmentGrid::from_parts(a.window, a.stride, a.fps, base.n())?;
    let cfg = SynthesisConfig {
        temperature: a.tau,
        threshold_keep: a.threshold,
        survivor_sampling: a.sampling,
        length_seconds: a.length,
        seed: a.seed,
        crossfade_frames: 0,
        alpha: 1.0,
        start_segment: a.start_segment,
    };
    let edit = synthesize(&model, &base, &grid, &cfg)?;
    write_resolved(&a.out, &a)?;
    finish_edit_list(&edit, &a.out)
}

fn run_condition(cli: ConditionArgs) -> Result<ExitCode> {
    let a = cli.resolve()?;
    let model = load_model(&a.model)?;
    let base = read_embeddings(&a.embeddings)?;
    let source = read_embeddings(&a.audio_source)?;
    let cond = read_embeddings(&a.audio_cond)?;
    let video_grid = SegmentGrid::from_parts(a.window, a.stride, a.fps, base.n())?;
    let source_grid =
        SegmentGrid::from_parts(a.window, a.stride, a.audio_rate, source.n())?;
    let cond_grid = SegmentGrid::from_parts(a.window, a.stride, a.audio_rate, cond.n())?;
    let cfg = SynthesisConfig {
        temperature: a.tau,
        threshold_keep: a.threshold,
        survivor_sampling: a.sampling,
        length_seconds: 0.0,
        seed: a.seed,
        crossfade_frames: 0,
        alpha: a.alpha,
        start_segment: a.start_segment,
    };
    let edit = conditioned_synthesize(
        &model,
        &base,
        &source,
        &cond,
        &video_grid,
        &source_grid,
        &cond_grid,
        &cfg,
    )?;
    write_resolved(&a.out, &a)?;
    finish_edit_list(&edit, &a.out)
}

fn run_classic(cli: ClassicArgs) -> Result<ExitCode> {
    let a = cli.resolve()?;
    let cfg = ClassicConfig {
        tap: a.tap,
        sigma_multiplier: a.sigma_multiplier,
        future_cost_exponent: a.exponent,
        future_cost_weight: a.weight,
        threshold_keep: a.threshold,
        inference_stride: a.inference_stride,
        filter_stride: a.filter_stride,
        max_iter: a.max_iter,
        eps: a.eps,
    };
    let (distance, frame_count) = match (&a.frames, &a.embeddings) {
        (Some(dir), None) => {
            let frames = read_frames(dir, a.fps)?;
            let d = pairwise_frame_distance(&frames, a.thumb)?;
            (d, frames.frame_count())
        }
        (None, Some(path)) => {
            let rows = read_embeddings(path)?;
            let d = pairwise_embedding_distance(&rows)?;
            (d, rows.n())
        }
        _ => bail!("exactly one of --frames or --embeddings is required"),
    };
    let filtered = tap_filter(&distance, cfg.tap, cfg.filter_stride)?;
    let (costs, report) = future_cost(
        &filtered,
        cfg.future_cost_exponent,
        cfg.future_cost_weight,
        cfg.eps,
        cfg.max_iter,
    )?;
    if !report.converged {
        eprintln!(
            "warning: future cost did not converge within {} iterations",
            report.iterations
        );
    }
    let probs = classic_probabilities(&costs, cfg.sigma_multiplier)?;
    for row in &probs.degenerate_rows {
        eprintln!("warning: transition row {row} underflowed, using uniform fallback");
    }
    let length_frames = ((a.length * a.fps - 1e-9).ceil()).max(0.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let edit = classic_synthesize(&probs, &cfg, length_frames, a.fps, frame_count, &mut rng)?;
    write_resolved(&a.out, &a)?;
    finish_edit_list(&edit, &a.out)
}

fn run_evaluate(cli: EvaluateArgs) -> Result<ExitCode> {
    let a = cli.resolve()?;
    let edit = EditList::load(&a.edit).context("reading edit list")?;
    let events = extract_transitions(&edit);
    let report = diversity_score(&events, edit.duration_seconds(), a.window_seconds);
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "transitions={} diversity_score={:.4}",
        events.len(),
        report.score
    );

    if let (Some(model_path), Some(emb_path), Some(csv_path)) =
        (&a.model, &a.embeddings, &a.sweep_csv)
    {
        let model = load_model(model_path)?;
        let base = read_embeddings(emb_path)?;
        let grid = SegmentGrid::from_parts(a.window, a.stride, a.fps, base.n())?;
        let cfg_base = SynthesisConfig {
            threshold_keep: a.threshold,
            length_seconds: a.length,
            ..Default::default()
        };
        let rows = temperature_sweep(&model, &base, &grid, &cfg_base, &a.temps, &a.seeds)?;
        std::fs::write(csv_path, sweep_csv(&rows))?;
        println!("sweep over {} temperatures written", rows.len());
    }
    write_resolved(&a.out, &a)?;
    Ok(ExitCode::SUCCESS)
}

fn run_assemble(cli: AssembleArgs) -> Result<ExitCode> {
    let a = cli.resolve()?;
    let edit = EditList::load(&a.edit)?;
    let frames = read_frames(&a.frames, edit.fps)?;
    edit.validate(frames.frame_count())?;
    let plan = crossfade(&edit, a.crossfade);
    if a.crossfade > 0 {
        let rendered = render_blend_frames(&plan, &frames, &a.blend_dir)?;
        println!("rendered {rendered} crossfade frames into {}", a.blend_dir.display());
    }
    let script = emit_assembly_script_for_plan(&plan, &frames, &a.out, &a.blend_dir)?;
    write_resolved(&a.out, &a)?;
    if plan.entries.is_empty() {
        eprintln!("warning: edit list emits no frames; script exits 1");
        return Ok(ExitCode::from(1));
    }
    println!(
        "assembly script for {} frames written to {} ({} lines)",
        plan.entries.len(),
        a.out.display(),
        script.lines().count()
    );
    Ok(ExitCode::SUCCESS)
}
