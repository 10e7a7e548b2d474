//! Shared fixtures and oracles for the integration suites.
#![allow(dead_code)] // each test binary uses its own subset

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtx_core::contrastive::{loss_and_gradients, BiGramModel, TrainConfig};
use vtx_core::features::{EmbeddingMatrix, FeatureSource};

/// Segment features where row i is the one-hot of `i mod period`; with
/// `period == n` every segment is distinct.
pub fn onehot_cycle(n: usize, period: usize) -> EmbeddingMatrix {
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|i| {
            let mut r = vec![0.0f32; period];
            r[i % period] = 1.0;
            r
        })
        .collect();
    EmbeddingMatrix::from_rows(rows, FeatureSource::External).unwrap()
}

/// Training settings that converge to top-1 positives on the synthetic
/// fixtures in a few seconds while keeping the paper's temperature.
pub fn fixture_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.02,
        epochs: 40,
        negatives_per_query: 64,
        temperature: 0.1,
        seed,
        batch_size: 8,
        hidden_dim: 256,
        output_dim: 256,
        ..Default::default()
    }
}

/// Central finite differences of the batch loss against the analytic
/// gradients, with the same negative draws on every evaluation. Returns the
/// max relative error over all parameters of both heads.
pub fn gradient_max_rel_error(
    model: &BiGramModel,
    base: &EmbeddingMatrix,
    batch: &[usize],
    cfg: &TrainConfig,
    rng_seed: u64,
    h: f64,
) -> f64 {
    let loss_at = |m: &BiGramModel| -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        loss_and_gradients(m, base, batch, cfg, &mut rng).unwrap().0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (_, grads) = loss_and_gradients(model, base, batch, cfg, &mut rng).unwrap();
    let analytic = grads.flat();

    let phi_len = model.phi.param_count();
    let mut params = model.phi.flat_params();
    params.extend(model.psi.flat_params());
    assert_eq!(params.len(), analytic.len());

    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for k in 0..params.len() {
        let mut bumped = params.clone();
        bumped[k] += h;
        set_params(&mut probe, &bumped, phi_len);
        let up = loss_at(&probe);
        bumped[k] = params[k] - h;
        set_params(&mut probe, &bumped, phi_len);
        let down = loss_at(&probe);
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((numeric - analytic[k]).abs() / denom);
    }
    worst
}

fn set_params(model: &mut BiGramModel, flat: &[f64], phi_len: usize) {
    model.phi.set_flat_params(&flat[..phi_len]);
    model.psi.set_flat_params(&flat[phi_len..]);
}

/// Smallest |pre-activation| either head produces on the given rows. Finite
/// differencing is only trustworthy when no ReLU kink lies inside the probe
/// interval, so instances are screened on this margin.
pub fn min_abs_preactivation(model: &BiGramModel, base: &EmbeddingMatrix) -> f64 {
    let mut min = f64::INFINITY;
    for head in [&model.phi, &model.psi] {
        for i in 0..base.n() {
            let x: Vec<f64> = base.row(i).iter().map(|&v| v as f64).collect();
            let z1 = affine(&head.weights[0], &head.biases[0], &x, head.hidden);
            let h1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
            let z2 = affine(&head.weights[1], &head.biases[1], &h1, head.hidden);
            for z in z1.iter().chain(&z2) {
                min = min.min(z.abs());
            }
        }
    }
    min
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = x.len();
    (0..out_dim)
        .map(|o| {
            b[o] + w[o * in_dim..(o + 1) * in_dim]
                .iter()
                .zip(x)
                .map(|(wi, xi)| wi * xi)
                .sum::<f64>()
        })
        .collect()
}

/// Write `count` PNG frames where frame i shows pattern `i mod period`:
/// exact periodicity, with visually distinct patterns per phase.
pub fn write_periodic_frames(dir: &Path, count: usize, period: usize, size: u32) {
    for i in 0..count {
        let phase = i % period;
        let img = image::RgbImage::from_fn(size, size, |x, y| {
            let v = ((x as usize * 31 + y as usize * 17 + phase * 97) % 251) as u8;
            image::Rgb([v, v.wrapping_mul(3), 255 - v])
        });
        img.save(dir.join(format!("{:06}.png", i + 1))).unwrap();
    }
}

/// A repetitive but not exactly periodic clip: a bright blob retraces the
/// same orbit every `period` frames while the overall gain drifts linearly.
/// The drift is a pure scale on the pixels: cycle repeats stay
/// cosine-identical in feature space but strictly ordered in L2 pixel
/// distance, which is the regime that separates the learned and classic
/// transition models.
pub fn write_drifting_frames(
    dir: &Path,
    count: usize,
    period: usize,
    size: u32,
    drift: f64,
    style: u64,
) {
    for i in 0..count {
        let phase = (i % period) as f64 / period as f64;
        let t = i as f64 / count as f64;
        let gain = 1.0 - drift * t;
        let angle = 2.0 * std::f64::consts::PI * phase;
        let r = size as f64 * 0.30;
        let c = size as f64 / 2.0;
        let (cx, cy) = match style % 5 {
            0 => (c + r * angle.cos(), c + r * angle.sin()),
            1 => (c + r * angle.cos(), c + 0.6 * r * angle.sin()),
            2 => (
                c + r * (3.0 * angle).cos() * 0.7,
                c + r * (2.0 * angle).sin() * 0.9,
            ),
            3 => (c + r * angle.sin(), c + r * angle.cos()),
            _ => (c + r * angle.sin() * 0.9, c + r * (2.0 * angle).sin() * 0.8),
        };
        let img = image::RgbImage::from_fn(size, size, |x, y| {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let blob = (-(dx * dx + dy * dy) / 18.0).exp();
            let v = |scale: f64| ((gain * blob * scale).clamp(0.0, 255.0)) as u8;
            image::Rgb([v(240.0), v(190.0), v(130.0)])
        });
        img.save(dir.join(format!("{:06}.png", i + 1))).unwrap();
    }
}

/// Ten random (features, model) instances whose pre-activations keep a safe
/// margin from the ReLU kink, so h=1e-4 central differences are valid over
/// every parameter.
pub fn gradcheck_instances() -> Vec<(EmbeddingMatrix, BiGramModel)> {
    let mut out = Vec::new();
    let mut seed = 0u64;
    while out.len() < 10 {
        let base = random_unit_rows(12, 8, 100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = BiGramModel::init(8, 16, 16, 1.0, 0.1, &mut rng);
        if min_abs_preactivation(&model, &base) > 1e-3 {
            out.push((base, model));
        }
        seed += 1;
    }
    out
}

/// A deterministic pseudo-random unit-norm feature matrix.
pub fn random_unit_rows(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| {
            let mut r: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let norm = r.iter().map(|v| v * v).sum::<f32>().sqrt();
            r.iter_mut().for_each(|v| *v /= norm);
            r
        })
        .collect();
    EmbeddingMatrix::from_rows(rows, FeatureSource::External).unwrap()
}
