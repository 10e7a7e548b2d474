//! Texture synthesis with the trained bi-gram model.
//!
//! Each step turns the current segment's score row into a softmax
//! distribution at the inference temperature, zeroes everything below t% of
//! the row maximum, samples among the survivors and appends the chosen
//! segment's tail frames, autoregressively. For audio conditioning the video
//! row is blended with the conditioning audio's similarity row:
//! `T = alpha * T_v + (1 - alpha) * T_a`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive::{forward, BiGramModel, ModelError};
use crate::features::{cosine_sim, EmbeddingMatrix};
use crate::media_io::{EditList, EditStep, EmissionEntry, EmissionPlan};
use crate::segmentation::{GridError, SegmentGrid};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("grids are not time-aligned: {0}")]
    GridMisaligned(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("segment index {index} out of range for {n} segments")]
    IndexOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurvivorSampling {
    /// Choose uniformly among surviving candidates.
    Uniform,
    /// Choose proportionally to the surviving probabilities.
    Proportional,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Inference softmax temperature.
    pub temperature: f64,
    /// Survivor cutoff as a fraction of the row maximum, in (0, 1].
    pub threshold_keep: f64,
    pub survivor_sampling: SurvivorSampling,
    pub length_seconds: f64,
    pub seed: u64,
    /// Frames blended in at each jump; 0 disables.
    pub crossfade_frames: usize,
    /// Weight of the video row when blending with audio, in [0, 1].
    pub alpha: f64,
    /// Fixed start segment; `None` picks one uniformly at random.
    pub start_segment: Option<usize>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            threshold_keep: 0.999,
            survivor_sampling: SurvivorSampling::Uniform,
            length_seconds: 30.0,
            seed: 0,
            crossfade_frames: 4,
            alpha: 0.5,
            start_segment: None,
        }
    }
}

/// A stack of probability rows: N x N for the video model (row per current
/// segment), or one row per conditioning segment for audio.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub kind: TransitionKind,
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Video,
    Audio,
    Blended,
}

impl TransitionMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

fn softmax_into(scores: &mut [f64], tau: f64) {
    for s in scores.iter_mut() {
        *s /= tau;
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - m).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Softmax row over all targets except `current` itself (a self-transition
/// would emit no new content, so it is masked before normalization).
fn row_from_encodings(
    q: &EmbeddingMatrix,
    t: &EmbeddingMatrix,
    current: usize,
    tau: f64,
) -> Vec<f64> {
    let n = t.n();
    let q_row = q.row(current);
    // Self is masked before normalization: a self-loop emits no new content.
    let mut probs: Vec<f64> = (0..n)
        .filter(|&j| j != current)
        .map(|j| cosine_sim(q_row, t.row(j)).expect("equal dims"))
        .collect();
    softmax_into(&mut probs, tau);
    let mut out = vec![0.0; n];
    let mut k = 0;
    for (j, slot) in out.iter_mut().enumerate() {
        if j != current {
            *slot = probs[k];
            k += 1;
        }
    }
    out
}

/// Probability row for transitions out of `current`:
/// `softmax_j(score(current, j) / tau)` over `j != current`.
pub fn video_transition_row(
    model: &BiGramModel,
    base: &EmbeddingMatrix,
    current: usize,
    tau: f64,
) -> Result<Vec<f64>, SynthesisError> {
    if current >= base.n() {
        return Err(SynthesisError::IndexOutOfRange {
            index: current,
            n: base.n(),
        });
    }
    let (q, t) = forward(model, base)?;
    Ok(row_from_encodings(&q, &t, current, tau))
}

/// Threshold a probability row at `t * max` and sample among the survivors.
/// With `t = 1.0` this is a deterministic argmax (ties break to the lowest
/// index) and consumes no randomness.
pub fn prune_and_sample<R: Rng>(
    row: &[f64],
    threshold_keep: f64,
    mode: SurvivorSampling,
    rng: &mut R,
) -> usize {
    // First-index argmax, so ties at the max break to the lowest index.
    let mut argmax = 0;
    let mut max = row[0];
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > max {
            argmax = j;
            max = v;
        }
    }
    if threshold_keep >= 1.0 {
        return argmax;
    }
    let cutoff = threshold_keep * max;
    let survivors: Vec<usize> = row
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v >= cutoff)
        .map(|(j, _)| j)
        .collect();
    match mode {
        SurvivorSampling::Uniform => survivors[rng.random_range(0..survivors.len())],
        SurvivorSampling::Proportional => {
            let total: f64 = survivors.iter().map(|&j| row[j]).sum();
            let mut u = rng.random_range(0.0..total);
            for &j in &survivors {
                u -= row[j];
                if u <= 0.0 {
                    return j;
                }
            }
            *survivors.last().expect("non-empty survivors")
        }
    }
}

fn check_model_and_grid(
    model: &BiGramModel,
    base: &EmbeddingMatrix,
    grid: &SegmentGrid,
) -> Result<(), SynthesisError> {
    if !model.is_trained() {
        return Err(SynthesisError::UntrainedModel);
    }
    if base.d() != model.base_dim {
        return Err(SynthesisError::DimMismatch {
            left: model.base_dim,
            right: base.d(),
        });
    }
    if grid.n_segments != base.n() {
        return Err(SynthesisError::GridMismatch(format!(
            "grid has {} segments, features have {}",
            grid.n_segments,
            base.n()
        )));
    }
    if grid.n_segments < 2 {
        return Err(SynthesisError::GridMismatch(
            "need at least 2 segments to synthesize".into(),
        ));
    }
    Ok(())
}

/// Frames that `length_seconds` asks for at the grid's rate.
fn target_units(grid: &SegmentGrid, length_seconds: f64) -> usize {
    ((length_seconds * grid.rate - 1e-9).ceil()).max(0.0) as usize
}

fn pick_start<R: Rng>(
    n_segments: usize,
    cfg: &SynthesisConfig,
    rng: &mut R,
) -> Result<usize, SynthesisError> {
    match cfg.start_segment {
        Some(s) if s >= n_segments => Err(SynthesisError::IndexOutOfRange {
            index: s,
            n: n_segments,
        }),
        Some(s) => Ok(s),
        None => Ok(rng.random_range(0..n_segments)),
    }
}

/// Unconditional synthesis: start at a random segment (all its window
/// frames), then repeatedly sample a next segment and append its tail.
pub fn synthesize(
    model: &BiGramModel,
    base: &EmbeddingMatrix,
    grid: &SegmentGrid,
    cfg: &SynthesisConfig,
) -> Result<EditList, SynthesisError> {
    check_model_and_grid(model, base, grid)?;
    let (q, t) = forward(model, base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let target = target_units(grid, cfg.length_seconds);

    let mut steps = Vec::new();
    let mut emitted = 0usize;
    let mut current = 0usize;
    while emitted < target {
        if steps.is_empty() {
            current = pick_start(grid.n_segments, cfg, &mut rng)?;
            let (s, e) = grid.segment_bounds(current)?;
            emitted += e - s;
            steps.push(EditStep {
                source_segment: current,
                emitted_frames: (s..e).collect(),
                jump: false,
            });
        } else {
            let row = row_from_encodings(&q, &t, current, cfg.temperature);
            let next = prune_and_sample(&row, cfg.threshold_keep, cfg.survivor_sampling, &mut rng);
            let tail = grid.tail_units(next)?;
            emitted += tail.len();
            steps.push(EditStep {
                source_segment: next,
                emitted_frames: tail,
                jump: next != current + 1,
            });
            current = next;
        }
    }
    Ok(EditList {
        fps: grid.rate,
        window_seconds: grid.window_seconds,
        stride_seconds: grid.stride_seconds,
        steps,
    })
}

/// Audio similarity rows: `T_a[i][j] = sim(cond[i], source[j])`, sharpened
/// per row with a softmax at `tau` so it is comparable with the video rows.
pub fn audio_transition_matrix(
    cond: &EmbeddingMatrix,
    source: &EmbeddingMatrix,
    tau: f64,
) -> Result<TransitionMatrix, SynthesisError> {
    if cond.d() != source.d() {
        return Err(SynthesisError::DimMismatch {
            left: cond.d(),
            right: source.d(),
        });
    }
    let mut values = Vec::with_capacity(cond.n() * source.n());
    for i in 0..cond.n() {
        let mut row: Vec<f64> = (0..source.n())
            .map(|j| cosine_sim(cond.row(i), source.row(j)).expect("equal dims"))
            .collect();
        softmax_into(&mut row, tau);
        values.extend(row);
    }
    Ok(TransitionMatrix {
        kind: TransitionKind::Audio,
        n_rows: cond.n(),
        n_cols: source.n(),
        values,
    })
}

/// Audio-conditioned synthesis. At output step k the sampling row is
/// `alpha * T_v(current) + (1 - alpha) * T_a[k]`; the output runs for
/// exactly as many steps as the conditioning audio has segments, so its
/// duration matches the conditioning track.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_synthesize(
    model: &BiGramModel,
    video_base: &EmbeddingMatrix,
    audio_source: &EmbeddingMatrix,
    audio_cond: &EmbeddingMatrix,
    video_grid: &SegmentGrid,
    audio_source_grid: &SegmentGrid,
    cond_grid: &SegmentGrid,
    cfg: &SynthesisConfig,
) -> Result<EditList, SynthesisError> {
    check_model_and_grid(model, video_base, video_grid)?;
    if !video_grid.aligned_with(audio_source_grid) || !video_grid.aligned_with(cond_grid) {
        return Err(SynthesisError::GridMisaligned(
            "window/stride seconds differ between video and audio grids".into(),
        ));
    }
    if audio_source_grid.n_segments != video_grid.n_segments {
        return Err(SynthesisError::GridMisaligned(format!(
            "video grid has {} segments, source audio grid {}",
            video_grid.n_segments, audio_source_grid.n_segments
        )));
    }
    if audio_source.n() != video_base.n() {
        return Err(SynthesisError::GridMismatch(format!(
            "source audio features have {} rows, video features {}",
            audio_source.n(),
            video_base.n()
        )));
    }
    if audio_cond.n() != cond_grid.n_segments {
        return Err(SynthesisError::GridMismatch(format!(
            "conditioning features have {} rows, grid {}",
            audio_cond.n(),
            cond_grid.n_segments
        )));
    }
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(SynthesisError::GridMismatch(format!(
            "alpha must be in [0, 1], got {}",
            cfg.alpha
        )));
    }

    let t_audio = audio_transition_matrix(audio_cond, audio_source, cfg.temperature)?;
    let (q, t) = forward(model, video_base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut steps = Vec::new();
    let mut current = pick_start(video_grid.n_segments, cfg, &mut rng)?;
    let (s, e) = video_grid.segment_bounds(current)?;
    steps.push(EditStep {
        source_segment: current,
        emitted_frames: (s..e).collect(),
        jump: false,
    });
    for k in 1..cond_grid.n_segments {
        let video_row = row_from_encodings(&q, &t, current, cfg.temperature);
        let audio_row = t_audio.row(k);
        let blended: Vec<f64> = video_row
            .iter()
            .zip(audio_row)
            .map(|(&v, &a)| cfg.alpha * v + (1.0 - cfg.alpha) * a)
            .collect();
        let next = prune_and_sample(&blended, cfg.threshold_keep, cfg.survivor_sampling, &mut rng);
        let tail = video_grid.tail_units(next)?;
        steps.push(EditStep {
            source_segment: next,
            emitted_frames: tail,
            jump: next != current + 1,
        });
        current = next;
    }
    Ok(EditList {
        fps: video_grid.rate,
        window_seconds: video_grid.window_seconds,
        stride_seconds: video_grid.stride_seconds,
        steps,
    })
}

/// Expand an edit list into an emission plan, inserting `k` linearly blended
/// frames at every jump. Inserted frame m of k blends the last pre-jump
/// frame A and the first post-jump frame B with weights
/// `((k - m) / (k + 1), (m + 1) / (k + 1))`.
pub fn crossfade(edit: &EditList, k: usize) -> EmissionPlan {
    let mut entries = Vec::new();
    let mut prev_last: Option<usize> = None;
    for step in &edit.steps {
        if step.jump && k > 0 {
            if let (Some(a), Some(&b)) = (prev_last, step.emitted_frames.first()) {
                for m in 0..k {
                    entries.push(EmissionEntry::Blend {
                        from: a,
                        to: b,
                        weight: (m + 1) as f64 / (k + 1) as f64,
                    });
                }
            }
        }
        entries.extend(
            step.emitted_frames
                .iter()
                .map(|&frame| EmissionEntry::Source { frame }),
        );
        prev_last = step.emitted_frames.last().copied().or(prev_last);
    }
    EmissionPlan {
        fps: edit.fps,
        entries,
    }
}
