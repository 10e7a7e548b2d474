//! Overlapping segmentation of a media stream.
//!
//! Both the video and audio paths slice their stream into N overlapping
//! segments with a window of W seconds and a stride of s seconds. Segment i
//! covers units `[i*stride_units, i*stride_units + window_units)`, where a
//! unit is a frame (video) or a sample (audio). Trailing units not covered by
//! a full window are dropped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("stream too short: {total_units} units, window needs {window_units}")]
    TooShort {
        total_units: usize,
        window_units: usize,
    },
    #[error("stride must be positive (got {stride_seconds} s at rate {rate})")]
    NonPositiveStride { stride_seconds: f64, rate: f64 },
    #[error("stride of {stride_units} units exceeds window of {window_units} units")]
    StrideExceedsWindow {
        stride_units: usize,
        window_units: usize,
    },
    #[error("segment index {index} out of range (grid has {n_segments} segments)")]
    IndexOutOfRange { index: usize, n_segments: usize },
}

/// The segmentation of a stream: window/stride in seconds and in whole units,
/// plus the number of full segments that fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentGrid {
    pub window_seconds: f64,
    pub stride_seconds: f64,
    /// Units per second: fps for video, sample rate for audio.
    pub rate: f64,
    pub window_units: usize,
    pub stride_units: usize,
    pub n_segments: usize,
}

/// Seconds to whole units, rounding half up.
fn to_units(seconds: f64, rate: f64) -> usize {
    (seconds * rate + 0.5).floor().max(0.0) as usize
}

/// Lay a grid of overlapping windows over a stream of `total_units` units.
///
/// Returns a grid with `n_segments = floor((total - window) / stride) + 1`.
/// A stream exactly one window long yields a single segment; synthesis
/// requires at least two.
pub fn build_grid(
    total_units: usize,
    rate: f64,
    window_seconds: f64,
    stride_seconds: f64,
) -> Result<SegmentGrid, GridError> {
    let window_units = to_units(window_seconds, rate);
    let stride_units = to_units(stride_seconds, rate);
    if stride_units == 0 {
        return Err(GridError::NonPositiveStride {
            stride_seconds,
            rate,
        });
    }
    if stride_units > window_units {
        return Err(GridError::StrideExceedsWindow {
            stride_units,
            window_units,
        });
    }
    if total_units < window_units || window_units == 0 {
        return Err(GridError::TooShort {
            total_units,
            window_units,
        });
    }
    let n_segments = (total_units - window_units) / stride_units + 1;
    Ok(SegmentGrid {
        window_seconds,
        stride_seconds,
        rate,
        window_units,
        stride_units,
        n_segments,
    })
}

impl SegmentGrid {
    /// Rebuild a grid from already-resolved parts (e.g. when only an
    /// embedding file is at hand and the unit counts are known).
    pub fn from_parts(
        window_seconds: f64,
        stride_seconds: f64,
        rate: f64,
        n_segments: usize,
    ) -> Result<Self, GridError> {
        let window_units = to_units(window_seconds, rate);
        let stride_units = to_units(stride_seconds, rate);
        if stride_units == 0 {
            return Err(GridError::NonPositiveStride {
                stride_seconds,
                rate,
            });
        }
        if stride_units > window_units {
            return Err(GridError::StrideExceedsWindow {
                stride_units,
                window_units,
            });
        }
        Ok(SegmentGrid {
            window_seconds,
            stride_seconds,
            rate,
            window_units,
            stride_units,
            n_segments,
        })
    }

    /// Half-open unit range `[start, end)` covered by segment `i`.
    pub fn segment_bounds(&self, i: usize) -> Result<(usize, usize), GridError> {
        if i >= self.n_segments {
            return Err(GridError::IndexOutOfRange {
                index: i,
                n_segments: self.n_segments,
            });
        }
        let start = i * self.stride_units;
        Ok((start, start + self.window_units))
    }

    /// The final `stride_units` unit indices of segment `i`, in order.
    ///
    /// Appending these after segment `i-1` extends the output by exactly one
    /// stride without repeating the overlap.
    pub fn tail_units(&self, i: usize) -> Result<Vec<usize>, GridError> {
        let (_, end) = self.segment_bounds(i)?;
        Ok(((end - self.stride_units)..end).collect())
    }

    /// Total units covered by the grid: `(n-1)*stride + window`.
    pub fn covered_units(&self) -> usize {
        if self.n_segments == 0 {
            return 0;
        }
        (self.n_segments - 1) * self.stride_units + self.window_units
    }

    /// Duration in seconds of the covered portion of the stream.
    pub fn covered_seconds(&self) -> f64 {
        self.covered_units() as f64 / self.rate
    }

    /// True when two grids share window and stride in seconds; conditioned
    /// synthesis requires this so that segment indices are time-aligned.
    pub fn aligned_with(&self, other: &SegmentGrid) -> bool {
        (self.window_seconds - other.window_seconds).abs() < 1e-9
            && (self.stride_seconds - other.stride_seconds).abs() < 1e-9
    }
}
