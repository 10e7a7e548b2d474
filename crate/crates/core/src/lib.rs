//! Video texture synthesis from a single source video.
//!
//! A video texture replays frames of one input video in a new, plausible
//! order, yielding an arbitrarily long output. This crate implements two
//! transition models over a grid of overlapping segments:
//!
//! - a learned bi-gram model: two MLP encoder heads trained with a
//!   temperature-scaled contrastive loss on per-segment features, sampled
//!   autoregressively with thresholded softmax rows ([`contrastive`],
//!   [`synthesis`]);
//! - the classic pixel-distance pipeline: pairwise frame distances, diagonal
//!   tap filtering, future-cost propagation and exponential transition
//!   probabilities ([`classic`]).
//!
//! Synthesis can additionally be conditioned on an external audio track by
//! blending the video transition row with an audio-similarity row.
//!
//! Frames are consumed as image-file directories and the output is an edit
//! list (a replayable trace of source segments and emitted frames) plus a
//! generated shell script that hands encoding to an external tool; the crate
//! never links a video codec.

pub mod classic;
pub mod contrastive;
pub mod features;
pub mod media_io;
pub mod metrics;
pub mod segmentation;
pub mod synthesis;

pub use classic::{ClassicConfig, DistanceMatrix, DistanceStage};
pub use contrastive::{BiGramModel, TrainConfig, TrainedModel};
pub use features::{EmbeddingMatrix, FeatureSource, MelConfig};
pub use media_io::{AudioTrack, EditList, EditStep, EmissionEntry, EmissionPlan, FrameSequence};
pub use metrics::{DiversityReport, TransitionEvent};
pub use segmentation::SegmentGrid;
pub use synthesis::{SurvivorSampling, SynthesisConfig, TransitionKind, TransitionMatrix};
