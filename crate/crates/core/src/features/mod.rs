//! Per-segment feature vectors.
//!
//! Every downstream consumer (the contrastive heads, audio matching, the
//! deep variant of the classic pipeline) works on an [`EmbeddingMatrix`]: one
//! feature row per segment. Rows can come from the built-in pixel statistics,
//! the built-in log-mel audio statistics, or an externally computed embedding
//! file — the three are interchangeable wherever a matrix is consumed.

mod mel;

pub use mel::{logmel_segment_features, MelConfig};

use rayon::prelude::*;
use thiserror::Error;

use crate::media_io::FrameSequence;
use crate::segmentation::SegmentGrid;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("grid does not match the stream: {0}")]
    GridMismatch(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error(transparent)]
    Media(#[from] crate::media_io::MediaError),
}

/// Where a feature matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    Pixel,
    External,
    LogMel,
}

/// An n x d matrix of per-segment feature vectors, row-major f32.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
    pub source: FeatureSource,
}

impl EmbeddingMatrix {
    /// Build from a flat row-major buffer, validating shape and finiteness.
    pub fn new(
        n: usize,
        d: usize,
        values: Vec<f32>,
        source: FeatureSource,
    ) -> Result<Self, FeatureError> {
        if n == 0 || d == 0 || values.len() != n * d {
            return Err(FeatureError::DimMismatch {
                left: n * d,
                right: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite { row: bad / d });
        }
        Ok(Self {
            n,
            d,
            values,
            source,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f32>>, source: FeatureSource) -> Result<Self, FeatureError> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(FeatureError::DimMismatch { left: d, right: 0 });
        }
        Self::new(n, d, rows.into_iter().flatten().collect(), source)
    }

    pub(crate) fn from_raw_unchecked(
        n: usize,
        d: usize,
        values: Vec<f32>,
        source: FeatureSource,
    ) -> Self {
        debug_assert_eq!(values.len(), n * d);
        Self {
            n,
            d,
            values,
            source,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Scale one frame's RGB data down to `thumb` x `thumb` by box averaging.
/// Output values are in [0, 1], laid out as thumb*thumb*3.
pub(crate) fn box_thumbnail(rgb: &[u8], width: usize, height: usize, thumb: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; thumb * thumb * 3];
    for ty in 0..thumb {
        let y0 = ty * height / thumb;
        let y1 = ((ty + 1) * height / thumb).max(y0 + 1);
        for tx in 0..thumb {
            let x0 = tx * width / thumb;
            let x1 = ((tx + 1) * width / thumb).max(x0 + 1);
            let mut acc = [0.0f64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = (y * width + x) * 3;
                    acc[0] += rgb[p] as f64;
                    acc[1] += rgb[p + 1] as f64;
                    acc[2] += rgb[p + 2] as f64;
                }
            }
            let count = ((y1 - y0) * (x1 - x0)) as f64 * 255.0;
            let o = (ty * thumb + tx) * 3;
            out[o] = (acc[0] / count) as f32;
            out[o + 1] = (acc[1] / count) as f32;
            out[o + 2] = (acc[2] / count) as f32;
        }
    }
    out
}

/// Decode every frame and thumbnail it. Shared by pixel features and the
/// classic distance matrix.
pub(crate) fn frame_thumbnails(
    frames: &FrameSequence,
    thumb: usize,
) -> Result<Vec<Vec<f32>>, FeatureError> {
    let (w, h) = (frames.width as usize, frames.height as usize);
    (0..frames.frame_count())
        .into_par_iter()
        .map(|i| {
            let rgb = frames.load_rgb(i)?;
            Ok(box_thumbnail(&rgb, w, h, thumb))
        })
        .collect()
}

/// Built-in video features: for each segment, the concatenation of the mean
/// thumbnail over its frames and the mean absolute temporal difference
/// between consecutive frames, so `d = 2 * thumb * thumb * 3`.
pub fn pixel_segment_features(
    frames: &FrameSequence,
    grid: &SegmentGrid,
    thumb: usize,
) -> Result<EmbeddingMatrix, FeatureError> {
    if !(8..=128).contains(&thumb) {
        return Err(FeatureError::ConfigInvalid(format!(
            "thumb must be in [8, 128], got {thumb}"
        )));
    }
    if (grid.rate - frames.fps).abs() > 1e-9 {
        return Err(FeatureError::GridMismatch(format!(
            "grid rate {} != video fps {}",
            grid.rate, frames.fps
        )));
    }
    if grid.covered_units() > frames.frame_count() {
        return Err(FeatureError::GridMismatch(format!(
            "grid covers {} frames but video has {}",
            grid.covered_units(),
            frames.frame_count()
        )));
    }
    let thumbs = frame_thumbnails(frames, thumb)?;
    let half = thumb * thumb * 3;
    let rows: Vec<Vec<f32>> = (0..grid.n_segments)
        .into_par_iter()
        .map(|i| {
            let (start, end) = grid.segment_bounds(i).expect("index in range");
            let len = (end - start) as f32;
            let mut row = vec![0.0f32; 2 * half];
            for thumb_row in &thumbs[start..end] {
                for (c, &v) in thumb_row.iter().enumerate() {
                    row[c] += v / len;
                }
            }
            if end - start > 1 {
                let pairs = (end - start - 1) as f32;
                for t in start..end - 1 {
                    for c in 0..half {
                        row[half + c] += (thumbs[t + 1][c] - thumbs[t][c]).abs() / pairs;
                    }
                }
            }
            row
        })
        .collect();
    EmbeddingMatrix::from_rows(rows, FeatureSource::Pixel)
}

/// Normalize each row to unit Euclidean norm. All-zero rows stay zero and
/// their indices are returned as warnings.
pub fn l2_normalize_rows(m: &EmbeddingMatrix) -> (EmbeddingMatrix, Vec<usize>) {
    let mut values = m.values.clone();
    let mut zero_rows = Vec::new();
    for i in 0..m.n {
        let row = &mut values[i * m.d..(i + 1) * m.d];
        let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows.push(i);
        } else {
            for v in row.iter_mut() {
                *v = (*v as f64 / norm) as f32;
            }
        }
    }
    (
        EmbeddingMatrix::from_raw_unchecked(m.n, m.d, values, m.source),
        zero_rows,
    )
}

/// Cosine similarity in [-1, 1]; zero if either vector is all zero.
pub fn cosine_sim(a: &[f32], b: &[f32]) -> Result<f64, FeatureError> {
    if a.len() != b.len() {
        return Err(FeatureError::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += (x as f64).powi(2);
        nb += (y as f64).powi(2);
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}
