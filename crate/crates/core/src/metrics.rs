//! Diagnostics over synthesized edit lists: transition events, the diversity
//! score (distinct transitions per fixed-length window) and temperature
//! sweeps.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::contrastive::BiGramModel;
use crate::features::EmbeddingMatrix;
use crate::media_io::EditList;
use crate::segmentation::SegmentGrid;
use crate::synthesis::{synthesize, SynthesisConfig, SynthesisError};

/// One jump in the output, timed by the frames emitted before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub output_time_seconds: f64,
    pub from_segment: usize,
    pub to_segment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub window_seconds: f64,
    pub per_window_new_counts: Vec<usize>,
    pub score: f64,
}

/// One jump event per step flagged as a jump.
pub fn extract_transitions(edit: &EditList) -> Vec<TransitionEvent> {
    let mut events = Vec::new();
    let mut frames_before = 0usize;
    for (k, step) in edit.steps.iter().enumerate() {
        if step.jump && k > 0 {
            events.push(TransitionEvent {
                output_time_seconds: frames_before as f64 / edit.fps,
                from_segment: edit.steps[k - 1].source_segment,
                to_segment: step.source_segment,
            });
        }
        frames_before += step.emitted_frames.len();
    }
    events
}

/// Mean number of new transitions per window. A transition (from, to) is new
/// if that exact pair has not occurred earlier in the same window; each
/// window starts with a clean slate. A trailing partial window counts when it
/// is at least half a window long, otherwise it is dropped.
pub fn diversity_score(
    events: &[TransitionEvent],
    total_seconds: f64,
    window_seconds: f64,
) -> DiversityReport {
    assert!(window_seconds > 0.0, "window_seconds must be positive");
    let full = (total_seconds / window_seconds).floor() as usize;
    let remainder = total_seconds - full as f64 * window_seconds;
    let windows = full + usize::from(remainder >= window_seconds / 2.0);
    let mut seen: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); windows];
    for e in events {
        let w = (e.output_time_seconds / window_seconds).floor() as usize;
        if w < windows {
            seen[w].insert((e.from_segment, e.to_segment));
        }
    }
    let per_window_new_counts: Vec<usize> = seen.iter().map(BTreeSet::len).collect();
    let score = if windows == 0 {
        0.0
    } else {
        per_window_new_counts.iter().sum::<usize>() as f64 / windows as f64
    };
    DiversityReport {
        window_seconds,
        per_window_new_counts,
        score,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    pub mean_transitions: f64,
    pub std_transitions: f64,
}

/// Synthesize once per (temperature, seed) cell and tabulate the mean and
/// standard deviation of the transition count per temperature.
pub fn temperature_sweep(
    model: &BiGramModel,
    base: &EmbeddingMatrix,
    grid: &SegmentGrid,
    cfg_base: &SynthesisConfig,
    temps: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, SynthesisError> {
    assert!(!temps.is_empty() && !seeds.is_empty());
    let mut rows = Vec::with_capacity(temps.len());
    for &temperature in temps {
        let mut counts = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = SynthesisConfig {
                temperature,
                seed,
                ..cfg_base.clone()
            };
            let edit = synthesize(model, base, grid, &cfg)?;
            counts.push(extract_transitions(&edit).len() as f64);
        }
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / counts.len() as f64;
        rows.push(SweepRow {
            temperature,
            mean_transitions: mean,
            std_transitions: var.sqrt(),
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("temperature,mean_transitions,std_transitions\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.temperature, r.mean_transitions, r.std_transitions
        ));
    }
    out
}
