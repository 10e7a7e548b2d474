//! Python bindings: the main types and operations of the texture pipeline.
//!
//! Build with `cargo build -p vtx-py --release` and expose
//! `target/release/libvtx.so` as `vtx.so` on the Python path (see
//! `python/smoke_test.py` at the repository root, which does this
//! automatically).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vtx_core::classic;
use vtx_core::contrastive;
use vtx_core::features;
use vtx_core::media_io;
use vtx_core::metrics;
use vtx_core::segmentation;
use vtx_core::synthesis;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// Overlapping segmentation of a stream (frames or samples).
#[pyclass(name = "SegmentGrid", skip_from_py_object)]
#[derive(Clone)]
struct PySegmentGrid {
    inner: segmentation::SegmentGrid,
}

#[pymethods]
impl PySegmentGrid {
    /// Lay a grid over `total_units` units at `rate` units/second.
    #[staticmethod]
    fn build(total_units: usize, rate: f64, window_seconds: f64, stride_seconds: f64) -> PyResult<Self> {
        segmentation::build_grid(total_units, rate, window_seconds, stride_seconds)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// Rebuild a grid when only the segment count is known (e.g. from a
    /// VTXE file).
    #[staticmethod]
    fn from_parts(window_seconds: f64, stride_seconds: f64, rate: f64, n_segments: usize) -> PyResult<Self> {
        segmentation::SegmentGrid::from_parts(window_seconds, stride_seconds, rate, n_segments)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[getter]
    fn n_segments(&self) -> usize {
        self.inner.n_segments
    }

    #[getter]
    fn window_units(&self) -> usize {
        self.inner.window_units
    }

    #[getter]
    fn stride_units(&self) -> usize {
        self.inner.stride_units
    }

    fn segment_bounds(&self, i: usize) -> PyResult<(usize, usize)> {
        self.inner.segment_bounds(i).map_err(value_err)
    }

    fn tail_units(&self, i: usize) -> PyResult<Vec<usize>> {
        self.inner.tail_units(i).map_err(value_err)
    }

    fn covered_seconds(&self) -> f64 {
        self.inner.covered_seconds()
    }

    fn __repr__(&self) -> String {
        format!(
            "SegmentGrid(n={}, window_units={}, stride_units={})",
            self.inner.n_segments, self.inner.window_units, self.inner.stride_units
        )
    }
}

/// One feature row per segment, row-major f32.
#[pyclass(name = "EmbeddingMatrix", skip_from_py_object)]
#[derive(Clone)]
struct PyEmbeddingMatrix {
    inner: features::EmbeddingMatrix,
}

#[pymethods]
impl PyEmbeddingMatrix {
    #[new]
    fn new(rows: Vec<Vec<f32>>) -> PyResult<Self> {
        features::EmbeddingMatrix::from_rows(rows, features::FeatureSource::External)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        media_io::read_embeddings(&path)
            .map(|inner| Self { inner })
            .map_err(io_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        media_io::write_embeddings(&self.inner, &path).map_err(io_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f32>> {
        if i >= self.inner.n() {
            return Err(value_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    /// Unit-normalize every row; returns the indices of all-zero rows.
    fn l2_normalize(&mut self) -> Vec<usize> {
        let (normalized, zero_rows) = features::l2_normalize_rows(&self.inner);
        self.inner = normalized;
        zero_rows
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingMatrix(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

/// The trained two-head transition model.
#[pyclass(name = "BiGramModel")]
struct PyBiGramModel {
    inner: contrastive::BiGramModel,
    epoch_losses: Vec<f64>,
}

#[pymethods]
impl PyBiGramModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        contrastive::load_model(&path)
            .map(|inner| Self {
                inner,
                epoch_losses: Vec::new(),
            })
            .map_err(io_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        contrastive::save_model(&self.inner, &path).map_err(io_err)
    }

    #[getter]
    fn base_dim(&self) -> usize {
        self.inner.base_dim
    }

    #[getter]
    fn train_temperature(&self) -> f64 {
        self.inner.train_temperature
    }

    /// Mean loss per training epoch (empty for loaded models).
    #[getter]
    fn epoch_losses(&self) -> Vec<f64> {
        self.epoch_losses.clone()
    }

    /// Directional similarity between segments i and j of `base`.
    fn score(&self, base: &PyEmbeddingMatrix, i: usize, j: usize) -> PyResult<f64> {
        let (q, t) = contrastive::forward(&self.inner, &base.inner).map_err(value_err)?;
        contrastive::score(&q, &t, i, j).map_err(value_err)
    }

    /// Transition probability row out of segment `current`.
    fn transition_row(&self, base: &PyEmbeddingMatrix, current: usize, tau: f64) -> PyResult<Vec<f64>> {
        synthesis::video_transition_row(&self.inner, &base.inner, current, tau).map_err(value_err)
    }
}

/// A synthesized trace: source segments, emitted frames and jump flags.
#[pyclass(name = "EditList", skip_from_py_object)]
#[derive(Clone)]
struct PyEditList {
    inner: media_io::EditList,
}

#[pymethods]
impl PyEditList {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        media_io::EditList::load(&path)
            .map(|inner| Self { inner })
            .map_err(io_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(io_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(value_err)
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.fps
    }

    fn sources(&self) -> Vec<usize> {
        self.inner.steps.iter().map(|s| s.source_segment).collect()
    }

    fn jumps(&self) -> Vec<bool> {
        self.inner.steps.iter().map(|s| s.jump).collect()
    }

    fn emitted_frames(&self) -> Vec<usize> {
        self.inner.emitted_frames().collect()
    }

    fn duration_seconds(&self) -> f64 {
        self.inner.duration_seconds()
    }

    /// (time_seconds, from_segment, to_segment) for every jump.
    fn transitions(&self) -> Vec<(f64, usize, usize)> {
        metrics::extract_transitions(&self.inner)
            .into_iter()
            .map(|e| (e.output_time_seconds, e.from_segment, e.to_segment))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.steps.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "EditList(steps={}, frames={})",
            self.inner.steps.len(),
            self.inner.emitted_frame_count()
        )
    }
}

/// Pixel statistics per segment from a directory of numbered PNG/PPM frames.
#[pyfunction]
#[pyo3(signature = (frames_dir, fps, window=0.5, stride=0.2, thumb=16))]
fn pixel_features(
    frames_dir: PathBuf,
    fps: f64,
    window: f64,
    stride: f64,
    thumb: usize,
) -> PyResult<PyEmbeddingMatrix> {
    let frames = media_io::read_frames(&frames_dir, fps).map_err(io_err)?;
    let grid = segmentation::build_grid(frames.frame_count(), fps, window, stride)
        .map_err(value_err)?;
    features::pixel_segment_features(&frames, &grid, thumb)
        .map(|inner| PyEmbeddingMatrix { inner })
        .map_err(value_err)
}

/// Log-mel statistics per segment from a PCM WAV file.
#[pyfunction]
#[pyo3(signature = (wav, window=0.5, stride=0.2, n_mels=64, frame_ms=25.0, hop_ms=10.0, fmin=50.0, fmax=None))]
#[allow(clippy::too_many_arguments)]
fn logmel_features(
    wav: PathBuf,
    window: f64,
    stride: f64,
    n_mels: usize,
    frame_ms: f64,
    hop_ms: f64,
    fmin: f64,
    fmax: Option<f64>,
) -> PyResult<PyEmbeddingMatrix> {
    let audio = media_io::read_wav(&wav).map_err(io_err)?;
    let grid = segmentation::build_grid(
        audio.samples.len(),
        audio.sample_rate as f64,
        window,
        stride,
    )
    .map_err(value_err)?;
    let cfg = features::MelConfig {
        n_mels,
        frame_ms,
        hop_ms,
        fmin,
        fmax,
        log_floor: 1e-10,
    };
    features::logmel_segment_features(&audio, &grid, &cfg)
        .map(|inner| PyEmbeddingMatrix { inner })
        .map_err(value_err)
}

/// Fit the two encoder heads on frozen per-segment features.
#[pyfunction]
#[pyo3(signature = (
    base, learning_rate=1e-4, epochs=30, negatives=64, tau=0.1, seed=0,
    batch_size=32, hidden_dim=512, output_dim=512, include_positive=false
))]
#[allow(clippy::too_many_arguments)]
fn train(
    base: &PyEmbeddingMatrix,
    learning_rate: f64,
    epochs: usize,
    negatives: usize,
    tau: f64,
    seed: u64,
    batch_size: usize,
    hidden_dim: usize,
    output_dim: usize,
    include_positive: bool,
) -> PyResult<PyBiGramModel> {
    let cfg = contrastive::TrainConfig {
        learning_rate,
        epochs,
        negatives_per_query: negatives,
        temperature: tau,
        seed,
        init_scale: 1.0,
        batch_size,
        hidden_dim,
        output_dim,
        include_positive_in_denominator: include_positive,
    };
    contrastive::train(&base.inner, &cfg)
        .map(|t| PyBiGramModel {
            inner: t.model,
            epoch_losses: t.epoch_losses,
        })
        .map_err(value_err)
}

fn synthesis_config(
    tau: f64,
    threshold: f64,
    proportional: bool,
    length_seconds: f64,
    seed: u64,
    alpha: f64,
    start_segment: Option<usize>,
) -> synthesis::SynthesisConfig {
    synthesis::SynthesisConfig {
        temperature: tau,
        threshold_keep: threshold,
        survivor_sampling: if proportional {
            synthesis::SurvivorSampling::Proportional
        } else {
            synthesis::SurvivorSampling::Uniform
        },
        length_seconds,
        seed,
        crossfade_frames: 0,
        alpha,
        start_segment,
    }
}

/// Sample a texture edit list from the trained model.
#[pyfunction]
#[pyo3(signature = (model, base, grid, length_seconds, tau=0.5, threshold=0.999, seed=0, proportional=false, start_segment=None))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    model: &PyBiGramModel,
    base: &PyEmbeddingMatrix,
    grid: &PySegmentGrid,
    length_seconds: f64,
    tau: f64,
    threshold: f64,
    seed: u64,
    proportional: bool,
    start_segment: Option<usize>,
) -> PyResult<PyEditList> {
    let cfg = synthesis_config(tau, threshold, proportional, length_seconds, seed, 1.0, start_segment);
    synthesis::synthesize(&model.inner, &base.inner, &grid.inner, &cfg)
        .map(|inner| PyEditList { inner })
        .map_err(value_err)
}

/// Audio-conditioned synthesis; the output length follows the conditioning
/// track's segment count.
#[pyfunction]
#[pyo3(signature = (
    model, base, audio_source, audio_cond, video_grid, source_grid, cond_grid,
    alpha=0.5, tau=0.5, threshold=0.999, seed=0, proportional=false, start_segment=None
))]
#[allow(clippy::too_many_arguments)]
fn conditioned_synthesize(
    model: &PyBiGramModel,
    base: &PyEmbeddingMatrix,
    audio_source: &PyEmbeddingMatrix,
    audio_cond: &PyEmbeddingMatrix,
    video_grid: &PySegmentGrid,
    source_grid: &PySegmentGrid,
    cond_grid: &PySegmentGrid,
    alpha: f64,
    tau: f64,
    threshold: f64,
    seed: u64,
    proportional: bool,
    start_segment: Option<usize>,
) -> PyResult<PyEditList> {
    let cfg = synthesis_config(tau, threshold, proportional, 0.0, seed, alpha, start_segment);
    synthesis::conditioned_synthesize(
        &model.inner,
        &base.inner,
        &audio_source.inner,
        &audio_cond.inner,
        &video_grid.inner,
        &source_grid.inner,
        &cond_grid.inner,
        &cfg,
    )
    .map(|inner| PyEditList { inner })
    .map_err(value_err)
}

/// The classic pixel-distance pipeline end to end.
#[pyfunction]
#[pyo3(signature = (
    frames_dir, fps, length_seconds, thumb=16, tap=4, sigma_multiplier=0.1,
    exponent=2.0, weight=0.999, threshold=0.999, inference_stride=1,
    filter_stride=1, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn classic_synthesize(
    frames_dir: PathBuf,
    fps: f64,
    length_seconds: f64,
    thumb: usize,
    tap: usize,
    sigma_multiplier: f64,
    exponent: f64,
    weight: f64,
    threshold: f64,
    inference_stride: usize,
    filter_stride: usize,
    seed: u64,
) -> PyResult<PyEditList> {
    let frames = media_io::read_frames(&frames_dir, fps).map_err(io_err)?;
    let cfg = classic::ClassicConfig {
        tap,
        sigma_multiplier,
        future_cost_exponent: exponent,
        future_cost_weight: weight,
        threshold_keep: threshold,
        inference_stride,
        filter_stride,
        max_iter: 500,
        eps: 1e-8,
    };
    let d = classic::pairwise_frame_distance(&frames, thumb).map_err(value_err)?;
    let filtered = classic::tap_filter(&d, cfg.tap, cfg.filter_stride).map_err(value_err)?;
    let (costs, _) = classic::future_cost(
        &filtered,
        cfg.future_cost_exponent,
        cfg.future_cost_weight,
        cfg.eps,
        cfg.max_iter,
    )
    .map_err(value_err)?;
    let probs = classic::classic_probabilities(&costs, cfg.sigma_multiplier).map_err(value_err)?;
    let length = ((length_seconds * fps - 1e-9).ceil()).max(0.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    classic::classic_synthesize(&probs, &cfg, length, fps, frames.frame_count(), &mut rng)
        .map(|inner| PyEditList { inner })
        .map_err(value_err)
}

/// Mean number of new transitions per window of the given length.
#[pyfunction]
#[pyo3(signature = (edit, window_seconds=30.0))]
fn diversity(edit: &PyEditList, window_seconds: f64) -> (f64, Vec<usize>) {
    let events = metrics::extract_transitions(&edit.inner);
    let report = metrics::diversity_score(&events, edit.inner.duration_seconds(), window_seconds);
    (report.score, report.per_window_new_counts)
}

/// Render crossfade frames and write the ffmpeg assembly script.
#[pyfunction]
#[pyo3(signature = (edit, frames_dir, script_path, crossfade=4, blend_dir=None))]
fn write_assembly_script(
    edit: &PyEditList,
    frames_dir: PathBuf,
    script_path: PathBuf,
    crossfade: usize,
    blend_dir: Option<PathBuf>,
) -> PyResult<String> {
    let frames = media_io::read_frames(&frames_dir, edit.inner.fps).map_err(io_err)?;
    edit.inner.validate(frames.frame_count()).map_err(value_err)?;
    let plan = synthesis::crossfade(&edit.inner, crossfade);
    let blend_dir = blend_dir.unwrap_or_else(|| script_path.with_extension("blends"));
    if crossfade > 0 {
        media_io::render_blend_frames(&plan, &frames, &blend_dir).map_err(io_err)?;
    }
    media_io::emit_assembly_script_for_plan(&plan, &frames, &script_path, &blend_dir)
        .map_err(io_err)
}

#[pymodule]
fn vtx(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySegmentGrid>()?;
    m.add_class::<PyEmbeddingMatrix>()?;
    m.add_class::<PyBiGramModel>()?;
    m.add_class::<PyEditList>()?;
    m.add_function(wrap_pyfunction!(pixel_features, m)?)?;
    m.add_function(wrap_pyfunction!(logmel_features, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(conditioned_synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(classic_synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(diversity, m)?)?;
    m.add_function(wrap_pyfunction!(write_assembly_script, m)?)?;
    Ok(())
}
