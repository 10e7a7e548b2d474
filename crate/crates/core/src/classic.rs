//! The classic video-textures pipeline.
//!
//! Pairwise frame distances D are filtered along the diagonal with a
//! binomial tap filter (D'), propagated into anticipated future cost (D''),
//! and turned into transition probabilities `P[i][j] = exp(-D''[i+1][j] /
//! sigma)`. Synthesis walks the resulting matrix with threshold pruning.
//! Variants: inference stride > 1 appends several frames per step,
//! filter stride > 1 subsamples the filtered grid, and any embedding matrix
//! can stand in for raw pixels (the deep variant).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{frame_thumbnails, EmbeddingMatrix, FeatureError};
use crate::media_io::{EditList, EditStep, FrameSequence};

#[derive(Debug, Error)]
pub enum ClassicError {
    #[error("matrix too small: {0}")]
    TooSmall(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("expected a {expected:?}-stage matrix, got {got:?}")]
    WrongStage {
        expected: DistanceStage,
        got: DistanceStage,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceStage {
    Raw,
    Filtered,
    FutureCost,
}

/// A square matrix of distances between grid nodes. At the raw stage nodes
/// are frames; after filtering they are the surviving (possibly subsampled)
/// frame positions, recorded in `node_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub stage: DistanceStage,
    /// Original frame index of each grid node.
    pub node_frames: Vec<usize>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.node_frames.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn from_values(
        stage: DistanceStage,
        node_frames: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, ClassicError> {
        if values.len() != node_frames.len() * node_frames.len() {
            return Err(ClassicError::TooSmall(format!(
                "{} values for {} nodes",
                values.len(),
                node_frames.len()
            )));
        }
        Ok(DistanceMatrix {
            stage,
            node_frames,
            values,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicConfig {
    /// Diagonal filter width, 2 or 4.
    pub tap: usize,
    /// Sigma is this multiple of the mean nonzero future cost.
    pub sigma_multiplier: f64,
    pub future_cost_exponent: f64,
    /// Future-cost discount in [0, 1).
    pub future_cost_weight: f64,
    /// Keep transitions with probability >= threshold_keep * row max.
    pub threshold_keep: f64,
    /// Frames appended per synthesis step (1 = classic, s = classic+).
    pub inference_stride: usize,
    /// Subsampling of the filtered grid (1 = classic/classic+, s = classic++).
    pub filter_stride: usize,
    pub max_iter: usize,
    pub eps: f64,
}

impl Default for ClassicConfig {
    fn default() -> Self {
        Self {
            tap: 4,
            sigma_multiplier: 0.1,
            future_cost_exponent: 2.0,
            future_cost_weight: 0.999,
            threshold_keep: 0.999,
            inference_stride: 1,
            filter_stride: 1,
            max_iter: 500,
            eps: 1e-8,
        }
    }
}

/// L2 distance between thumb-downscaled frames, for all frame pairs.
pub fn pairwise_frame_distance(
    frames: &FrameSequence,
    thumb: usize,
) -> Result<DistanceMatrix, ClassicError> {
    if !(8..=128).contains(&thumb) {
        return Err(ClassicError::ConfigInvalid(format!(
            "thumb must be in [8, 128], got {thumb}"
        )));
    }
    if frames.frame_count() < 2 {
        return Err(ClassicError::TooSmall("need at least 2 frames".into()));
    }
    let thumbs = frame_thumbnails(frames, thumb)?;
    Ok(pairwise_rows(&thumbs))
}

/// Same distance matrix but over arbitrary per-frame (or per-segment)
/// feature rows; this is the deep variant of the pipeline.
pub fn pairwise_embedding_distance(m: &EmbeddingMatrix) -> Result<DistanceMatrix, ClassicError> {
    if m.n() < 2 {
        return Err(ClassicError::TooSmall("need at least 2 rows".into()));
    }
    let rows: Vec<Vec<f32>> = (0..m.n()).map(|i| m.row(i).to_vec()).collect();
    Ok(pairwise_rows(&rows))
}

fn pairwise_rows(rows: &[Vec<f32>]) -> DistanceMatrix {
    let n = rows.len();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (0..n).map(move |j| {
                if i == j {
                    0.0
                } else {
                    rows[i]
                        .iter()
                        .zip(&rows[j])
                        .map(|(&a, &b)| ((a - b) as f64).powi(2))
                        .sum::<f64>()
                        .sqrt()
                }
            })
        })
        .collect();
    DistanceMatrix {
        stage: DistanceStage::Raw,
        node_frames: (0..n).collect(),
        values,
    }
}

/// Filter the raw matrix along diagonals with binomial weights: 2-tap uses
/// offsets {0, 1} with weights (1, 1)/2, 4-tap offsets {-1, 0, 1, 2} with
/// weights (1, 3, 3, 1)/8. Border nodes without full support are dropped,
/// and `filter_stride` keeps every stride-th surviving node.
pub fn tap_filter(
    d: &DistanceMatrix,
    tap: usize,
    filter_stride: usize,
) -> Result<DistanceMatrix, ClassicError> {
    if d.stage != DistanceStage::Raw {
        return Err(ClassicError::WrongStage {
            expected: DistanceStage::Raw,
            got: d.stage,
        });
    }
    if filter_stride == 0 {
        return Err(ClassicError::ConfigInvalid("filter_stride must be >= 1".into()));
    }
    let (offsets, weights): (&[isize], &[f64]) = match tap {
        2 => (&[0, 1], &[0.5, 0.5]),
        4 => (&[-1, 0, 1, 2], &[0.125, 0.375, 0.375, 0.125]),
        other => {
            return Err(ClassicError::ConfigInvalid(format!(
                "tap must be 2 or 4, got {other}"
            )))
        }
    };
    let n = d.n() as isize;
    let first = -offsets[0];
    let last = n - 1 - offsets[offsets.len() - 1];
    if last < first {
        return Err(ClassicError::TooSmall(format!(
            "{} nodes cannot support a {tap}-tap filter",
            d.n()
        )));
    }
    let valid = (last - first + 1) as usize;
    let m = valid / filter_stride;
    if m < 2 {
        return Err(ClassicError::TooSmall(format!(
            "only {m} nodes survive filtering"
        )));
    }
    let node_frames: Vec<usize> = (0..m)
        .map(|r| (first as usize) + r * filter_stride)
        .collect();
    let values: Vec<f64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|r| {
            let node_frames = &node_frames;
            (0..m).map(move |c| {
                let (fr, fc) = (node_frames[r] as isize, node_frames[c] as isize);
                offsets
                    .iter()
                    .zip(weights)
                    .map(|(&off, &w)| w * d.get((fr + off) as usize, (fc + off) as usize))
                    .sum()
            })
        })
        .collect();
    Ok(DistanceMatrix {
        stage: DistanceStage::Filtered,
        node_frames,
        values,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointReport {
    pub iterations: usize,
    pub converged: bool,
}

/// Anticipated future cost: the fixed point of
/// `D''[i][j] = D'[i][j]^p + w * min_k D''[j][k]`, iterated from `D'^p`.
/// Hitting `max_iter` is reported, not fatal.
pub fn future_cost(
    d: &DistanceMatrix,
    exponent: f64,
    weight: f64,
    eps: f64,
    max_iter: usize,
) -> Result<(DistanceMatrix, FixedPointReport), ClassicError> {
    if d.stage != DistanceStage::Filtered {
        return Err(ClassicError::WrongStage {
            expected: DistanceStage::Filtered,
            got: d.stage,
        });
    }
    if !(0.0..1.0).contains(&weight) {
        return Err(ClassicError::ConfigInvalid(format!(
            "future_cost_weight must be in [0, 1), got {weight}"
        )));
    }
    let n = d.n();
    let base: Vec<f64> = d.values.iter().map(|&v| v.powf(exponent)).collect();
    let mut cur = base.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter.max(1) {
        iterations += 1;
        let row_min: Vec<f64> = (0..n)
            .map(|j| {
                cur[j * n..(j + 1) * n]
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut change: f64 = 0.0;
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = base[i * n + j] + weight * row_min[j];
                change = change.max((v - cur[i * n + j]).abs());
                next[i * n + j] = v;
            }
        }
        cur = next;
        if change < eps {
            converged = true;
            break;
        }
    }
    Ok((
        DistanceMatrix {
            stage: DistanceStage::FutureCost,
            node_frames: d.node_frames.clone(),
            values: cur,
        },
        FixedPointReport {
            iterations,
            converged,
        },
    ))
}

/// Row-stochastic transition probabilities over grid nodes. Row i scores
/// candidate j by how close j is to node i's natural successor, so there are
/// n-1 rows for n nodes.
#[derive(Debug, Clone)]
pub struct ClassicTransitions {
    pub node_frames: Vec<usize>,
    rows: Vec<f64>,
    pub sigma: f64,
    /// Rows that underflowed to zero and fell back to uniform.
    pub degenerate_rows: Vec<usize>,
}

impl ClassicTransitions {
    pub fn num_rows(&self) -> usize {
        self.node_frames.len().saturating_sub(1)
    }

    pub fn num_nodes(&self) -> usize {
        self.node_frames.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.num_nodes();
        &self.rows[i * n..(i + 1) * n]
    }
}

/// `P[i][j] = exp(-D''[i+1][j] / sigma)`, rows renormalized to sum to one.
/// Sigma is `sigma_multiplier` times the mean nonzero entry of D'' (1.0 when
/// the matrix is all zero).
pub fn classic_probabilities(
    d: &DistanceMatrix,
    sigma_multiplier: f64,
) -> Result<ClassicTransitions, ClassicError> {
    if d.stage != DistanceStage::FutureCost {
        return Err(ClassicError::WrongStage {
            expected: DistanceStage::FutureCost,
            got: d.stage,
        });
    }
    let n = d.n();
    if n < 2 {
        return Err(ClassicError::TooSmall("need at least 2 nodes".into()));
    }
    if sigma_multiplier <= 0.0 {
        return Err(ClassicError::ConfigInvalid(format!(
            "sigma_multiplier must be positive, got {sigma_multiplier}"
        )));
    }
    let nonzero: Vec<f64> = d.values.iter().cloned().filter(|&v| v > 0.0).collect();
    let sigma = if nonzero.is_empty() {
        1.0
    } else {
        sigma_multiplier * nonzero.iter().sum::<f64>() / nonzero.len() as f64
    };
    let mut rows = vec![0.0; (n - 1) * n];
    let mut degenerate_rows = Vec::new();
    for i in 0..n - 1 {
        let row = &mut rows[i * n..(i + 1) * n];
        for (j, r) in row.iter_mut().enumerate() {
            *r = (-d.get(i + 1, j) / sigma).exp();
        }
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for r in row.iter_mut() {
                *r /= sum;
            }
        } else {
            degenerate_rows.push(i);
            for r in row.iter_mut() {
                *r = 1.0 / n as f64;
            }
        }
    }
    Ok(ClassicTransitions {
        node_frames: d.node_frames.clone(),
        rows,
        sigma,
        degenerate_rows,
    })
}

/// Walk the transition matrix: threshold each row at `threshold_keep` times
/// its max, sample uniformly among the survivors, and append
/// `inference_stride` frames per step until `length` frames are emitted.
/// States without a row self-advance with wraparound.
pub fn classic_synthesize<R: Rng>(
    p: &ClassicTransitions,
    cfg: &ClassicConfig,
    length: usize,
    fps: f64,
    frame_count: usize,
    rng: &mut R,
) -> Result<EditList, ClassicError> {
    if !(cfg.threshold_keep > 0.0 && cfg.threshold_keep <= 1.0) {
        return Err(ClassicError::ConfigInvalid(format!(
            "threshold_keep must be in (0, 1], got {}",
            cfg.threshold_keep
        )));
    }
    if cfg.inference_stride == 0 {
        return Err(ClassicError::ConfigInvalid("inference_stride must be >= 1".into()));
    }
    let nodes = p.num_nodes();
    // After emitting inference_stride frames from a node, this many grid
    // nodes have been consumed beyond it.
    let advance = (cfg.inference_stride - 1) / cfg.filter_stride.max(1);

    let mut steps: Vec<EditStep> = Vec::new();
    let mut emitted = 0usize;
    let mut prev_last: Option<usize> = None;

    let emit = |node: usize, steps: &mut Vec<EditStep>, prev_last: &mut Option<usize>| {
        let start = p.node_frames[node];
        let frames: Vec<usize> = (start..(start + cfg.inference_stride).min(frame_count)).collect();
        let count = frames.len();
        let jump = match *prev_last {
            None => false,
            Some(last) => frames.first() != Some(&(last + 1)),
        };
        *prev_last = frames.last().copied().or(*prev_last);
        steps.push(EditStep {
            source_segment: node,
            emitted_frames: frames,
            jump,
        });
        count
    };

    let start = rng.random_range(0..p.num_rows().max(1));
    emitted += emit(start, &mut steps, &mut prev_last);
    let mut state = start + advance;

    while emitted < length {
        let next = if state < p.num_rows() {
            let row = p.row(state);
            let mut argmax = 0;
            let mut max = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > max {
                    argmax = j;
                    max = v;
                }
            }
            if cfg.threshold_keep >= 1.0 {
                // Deterministic walk; ties break to the lowest index.
                argmax
            } else {
                let survivors: Vec<usize> = row
                    .iter()
                    .enumerate()
                    .filter(|&(_, &v)| v >= cfg.threshold_keep * max)
                    .map(|(j, _)| j)
                    .collect();
                survivors[rng.random_range(0..survivors.len())]
            }
        } else {
            (state + 1) % nodes
        };
        emitted += emit(next, &mut steps, &mut prev_last);
        state = next + advance;
    }

    Ok(EditList {
        fps,
        window_seconds: cfg.inference_stride as f64 / fps,
        stride_seconds: cfg.inference_stride as f64 / fps,
        steps,
    })
}
