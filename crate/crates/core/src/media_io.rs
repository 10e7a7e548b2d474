//! Disk formats and external hand-offs.
//!
//! Frames come in as directories of consecutively numbered PNG/PPM images,
//! audio as PCM WAV. Per-segment embeddings round-trip through a small binary
//! format (magic `VTXE`) so features can also be computed by external tools.
//! Synthesis results are edit lists (JSON) and are turned into video by a
//! generated POSIX shell script that calls an external encoder; no video
//! codec is linked here.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{EmbeddingMatrix, FeatureSource};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"VTXE";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("frame numbering gap: frame {0} is missing")]
    MissingFrame(u64),
    #[error("duplicate frame number {0}")]
    DuplicateFrame(u64),
    #[error("frame dimensions differ: {path} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        path: PathBuf,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("no usable frames in {0} (need at least 2 numbered png/ppm files)")]
    EmptyDirectory(PathBuf),
    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("embedding dimensions inconsistent: {0}")]
    DimMismatch(String),
    #[error("non-finite value in payload")]
    NonFiniteValue,
    #[error("bad magic bytes (expected {expected:?})")]
    BadMagic { expected: String },
    #[error("unsupported format version {got} (expected {want})")]
    VersionMismatch { got: u32, want: u32 },
    #[error("frame index {index} out of range (video has {frame_count} frames)")]
    FrameOutOfRange { index: usize, frame_count: usize },
    #[error("invalid edit list: {0}")]
    InvalidEditList(String),
    #[error("invalid fps: {0}")]
    InvalidFps(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Frame sequences
// ---------------------------------------------------------------------------

/// An on-disk sequence of RGB frames with uniform dimensions.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    dir: PathBuf,
    files: Vec<PathBuf>,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if digits.is_empty() {
        return None;
    }
    digits.parse().ok()
}

/// Scan a directory of numbered image files and validate it as a sequence.
pub fn read_frames(dir: &Path, fps: f64) -> Result<FrameSequence, MediaError> {
    if fps <= 0.0 || !fps.is_finite() {
        return Err(MediaError::InvalidFps(fps));
    }
    let mut numbered: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !matches!(ext.as_deref(), Some("png") | Some("ppm")) {
            continue;
        }
        if let Some(num) = frame_number(&path) {
            numbered.push((num, path));
        }
    }
    if numbered.len() < 2 {
        return Err(MediaError::EmptyDirectory(dir.to_path_buf()));
    }
    numbered.sort_by_key(|(n, _)| *n);
    for pair in numbered.windows(2) {
        let (a, b) = (pair[0].0, pair[1].0);
        if a == b {
            return Err(MediaError::DuplicateFrame(a));
        }
        if b != a + 1 {
            return Err(MediaError::MissingFrame(a + 1));
        }
    }
    let (want_w, want_h) = image::image_dimensions(&numbered[0].1)
        .map_err(|e| MediaError::CorruptHeader(e.to_string()))?;
    for (_, path) in &numbered {
        let (w, h) =
            image::image_dimensions(path).map_err(|e| MediaError::CorruptHeader(e.to_string()))?;
        if (w, h) != (want_w, want_h) {
            return Err(MediaError::DimensionMismatch {
                path: path.clone(),
                got_w: w,
                got_h: h,
                want_w,
                want_h,
            });
        }
    }
    Ok(FrameSequence {
        dir: dir.to_path_buf(),
        files: numbered.into_iter().map(|(_, p)| p).collect(),
        fps,
        width: want_w,
        height: want_h,
    })
}

impl FrameSequence {
    pub fn frame_count(&self) -> usize {
        self.files.len()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.files.len() as f64 / self.fps
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn frame_path(&self, i: usize) -> Result<&Path, MediaError> {
        self.files
            .get(i)
            .map(PathBuf::as_path)
            .ok_or(MediaError::FrameOutOfRange {
                index: i,
                frame_count: self.files.len(),
            })
    }

    /// Decode frame `i` to packed 8-bit RGB.
    pub fn load_rgb(&self, i: usize) -> Result<Vec<u8>, MediaError> {
        let path = self.frame_path(i)?;
        let img = image::open(path)
            .map_err(|e| MediaError::CorruptHeader(format!("{}: {e}", path.display())))?;
        Ok(img.to_rgb8().into_raw())
    }
}

// ---------------------------------------------------------------------------
// Audio
// ---------------------------------------------------------------------------

/// Mono audio samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrack {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioTrack {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Read a PCM WAV file (16-bit int or 32-bit float, 1 or 2 channels).
/// Stereo is downmixed by averaging; 16-bit samples are scaled by 1/32768.
pub fn read_wav(path: &Path) -> Result<AudioTrack, MediaError> {
    let reader =
        hound::WavReader::open(path).map_err(|e| MediaError::CorruptHeader(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(MediaError::UnsupportedEncoding(format!(
            "{} channels (need 1 or 2)",
            spec.channels
        )));
    }
    if spec.sample_rate < 8000 {
        return Err(MediaError::UnsupportedEncoding(format!(
            "sample rate {} below 8000 Hz",
            spec.sample_rate
        )));
    }
    let mono = |interleaved: Vec<f32>| -> Vec<f32> {
        if spec.channels == 1 {
            interleaved
        } else {
            interleaved.chunks_exact(2).map(|c| (c[0] + c[1]) / 2.0).collect()
        }
    };
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            let raw: Result<Vec<i16>, _> = reader.into_samples().collect();
            let raw = raw.map_err(|e| MediaError::CorruptHeader(e.to_string()))?;
            mono(raw.into_iter().map(|s| s as f32 / 32768.0).collect())
        }
        (hound::SampleFormat::Float, 32) => {
            let raw: Result<Vec<f32>, _> = reader.into_samples().collect();
            let raw = raw.map_err(|e| MediaError::CorruptHeader(e.to_string()))?;
            mono(raw)
        }
        (fmt, bits) => {
            return Err(MediaError::UnsupportedEncoding(format!(
                "{bits}-bit {fmt:?} (need 16-bit int or 32-bit float)"
            )))
        }
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(MediaError::NonFiniteValue);
    }
    Ok(AudioTrack {
        samples,
        sample_rate: spec.sample_rate,
    })
}

// ---------------------------------------------------------------------------
// Embedding files ("VTXE")
// ---------------------------------------------------------------------------

/// Write an embedding matrix: `VTXE`, u32 version, u32 n, u32 d, then n*d
/// little-endian f32 values row-major.
pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<(), MediaError> {
    if m.values().iter().any(|v| !v.is_finite()) {
        return Err(MediaError::NonFiniteValue);
    }
    let mut out = Vec::with_capacity(16 + m.values().len() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n() as u32).to_le_bytes());
    out.extend_from_slice(&(m.d() as u32).to_le_bytes());
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix, MediaError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(MediaError::DimMismatch(format!(
            "file is {} bytes, header needs 16",
            bytes.len()
        )));
    }
    if &bytes[0..4] != EMBEDDING_MAGIC {
        return Err(MediaError::BadMagic {
            expected: "VTXE".into(),
        });
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = word(4);
    if version != EMBEDDING_VERSION {
        return Err(MediaError::VersionMismatch {
            got: version,
            want: EMBEDDING_VERSION,
        });
    }
    let n = word(8) as usize;
    let d = word(12) as usize;
    let expected = 16 + n * d * 4;
    if n == 0 || d == 0 || bytes.len() != expected {
        return Err(MediaError::DimMismatch(format!(
            "header says {n}x{d} ({expected} bytes) but file is {} bytes",
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MediaError::NonFiniteValue);
    }
    Ok(EmbeddingMatrix::from_raw_unchecked(
        n,
        d,
        values,
        FeatureSource::External,
    ))
}

// ---------------------------------------------------------------------------
// Edit lists
// ---------------------------------------------------------------------------

/// One synthesis step: the segment it came from, the original frame indices
/// it emitted, and whether reaching it was a jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditStep {
    pub source_segment: usize,
    pub emitted_frames: Vec<usize>,
    pub jump: bool,
}

/// The complete, replayable trace of a synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditList {
    pub fps: f64,
    pub window_seconds: f64,
    pub stride_seconds: f64,
    pub steps: Vec<EditStep>,
}

impl EditList {
    pub fn emitted_frame_count(&self) -> usize {
        self.steps.iter().map(|s| s.emitted_frames.len()).sum()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.emitted_frame_count() as f64 / self.fps
    }

    /// All emitted frame indices in output order.
    pub fn emitted_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().flat_map(|s| s.emitted_frames.iter().copied())
    }

    /// Check frame ranges and jump-flag consistency. A step is a jump exactly
    /// when its first frame does not continue the previous step's last frame;
    /// the first step is never a jump.
    pub fn validate(&self, frame_count: usize) -> Result<(), MediaError> {
        if self.fps <= 0.0 {
            return Err(MediaError::InvalidFps(self.fps));
        }
        let mut prev_last: Option<usize> = None;
        for (k, step) in self.steps.iter().enumerate() {
            for &f in &step.emitted_frames {
                if f >= frame_count {
                    return Err(MediaError::FrameOutOfRange {
                        index: f,
                        frame_count,
                    });
                }
            }
            if step.emitted_frames.is_empty() {
                return Err(MediaError::InvalidEditList(format!(
                    "step {k} emits no frames"
                )));
            }
            let expect_jump = match prev_last {
                None => false,
                Some(last) => step.emitted_frames[0] != last + 1,
            };
            if step.jump != expect_jump {
                return Err(MediaError::InvalidEditList(format!(
                    "step {k} jump flag is {} but frame continuity says {}",
                    step.jump, expect_jump
                )));
            }
            prev_last = step.emitted_frames.last().copied();
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, MediaError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self, MediaError> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), MediaError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MediaError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// Emission plans and assembly scripts
// ---------------------------------------------------------------------------

/// One output frame of an assembly: either an original frame or a linear
/// blend of two originals (inserted at jumps by the crossfade pass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmissionEntry {
    Source { frame: usize },
    Blend { from: usize, to: usize, weight: f64 },
}

/// Ordered output frames, ready to be copied/rendered and encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionPlan {
    pub fps: f64,
    pub entries: Vec<EmissionEntry>,
}

impl EmissionPlan {
    /// A plan that plays the edit list as-is (no inserted frames).
    pub fn from_edit(edit: &EditList) -> Self {
        EmissionPlan {
            fps: edit.fps,
            entries: edit
                .emitted_frames()
                .map(|frame| EmissionEntry::Source { frame })
                .collect(),
        }
    }

    pub fn max_frame(&self) -> Option<usize> {
        self.entries
            .iter()
            .map(|e| match *e {
                EmissionEntry::Source { frame } => frame,
                EmissionEntry::Blend { from, to, .. } => from.max(to),
            })
            .max()
    }
}

/// Render the blend entries of a plan to PNG files in `blend_dir`, named
/// `blend_NNNNNN.png` by entry index. Returns the number of files written.
pub fn render_blend_frames(
    plan: &EmissionPlan,
    frames: &FrameSequence,
    blend_dir: &Path,
) -> Result<usize, MediaError> {
    fs::create_dir_all(blend_dir)?;
    let mut written = 0;
    for (k, entry) in plan.entries.iter().enumerate() {
        let EmissionEntry::Blend { from, to, weight } = *entry else {
            continue;
        };
        let a = frames.load_rgb(from)?;
        let b = frames.load_rgb(to)?;
        let blended: Vec<u8> = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| {
                ((1.0 - weight) * x as f64 + weight * y as f64).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        let img = image::RgbImage::from_raw(frames.width, frames.height, blended)
            .expect("blend buffer matches dimensions");
        img.save(blend_dir.join(format!("blend_{k:06}.png")))
            .map_err(|e| MediaError::Io(std::io::Error::other(e.to_string())))?;
        written += 1;
    }
    Ok(written)
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

/// Write a POSIX shell script that stages the plan's frames in output order
/// and invokes ffmpeg on the staged sequence. Blend entries reference
/// pre-rendered files in `blend_dir` (see [`render_blend_frames`]).
/// Returns the script text. An empty plan yields a script that warns and
/// exits 1.
pub fn emit_assembly_script_for_plan(
    plan: &EmissionPlan,
    frames: &FrameSequence,
    script_path: &Path,
    blend_dir: &Path,
) -> Result<String, MediaError> {
    if let Some(max) = plan.max_frame() {
        if max >= frames.frame_count() {
            return Err(MediaError::FrameOutOfRange {
                index: max,
                frame_count: frames.frame_count(),
            });
        }
    }
    let mut script = String::from("#!/bin/sh\nset -eu\n");
    if plan.entries.is_empty() {
        script.push_str("echo 'assembly: edit list emitted zero frames' >&2\nexit 1\n");
    } else {
        script.push_str("SEQ_DIR=\"${1:-assembled_frames}\"\n");
        script.push_str("OUT=\"${2:-texture.mp4}\"\n");
        script.push_str("mkdir -p \"$SEQ_DIR\"\n");
        for (k, entry) in plan.entries.iter().enumerate() {
            let src = match *entry {
                EmissionEntry::Source { frame } => shell_quote(frames.frame_path(frame)?),
                EmissionEntry::Blend { .. } => {
                    shell_quote(&blend_dir.join(format!("blend_{k:06}.png")))
                }
            };
            script.push_str(&format!("cp {src} \"$SEQ_DIR\"/{:06}.png\n", k + 1));
        }
        script.push_str(&format!(
            "ffmpeg -y -framerate {} -start_number 1 -i \"$SEQ_DIR\"/%06d.png -pix_fmt yuv420p \"$OUT\"\n",
            plan.fps
        ));
    }
    fs::write(script_path, &script)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(script_path, fs::Permissions::from_mode(0o755))?;
    }
    Ok(script)
}

/// Assembly script for a plain edit list (no crossfade frames).
pub fn emit_assembly_script(
    edit: &EditList,
    frames: &FrameSequence,
    script_path: &Path,
) -> Result<String, MediaError> {
    let plan = EmissionPlan::from_edit(edit);
    emit_assembly_script_for_plan(&plan, frames, script_path, Path::new("."))
}
