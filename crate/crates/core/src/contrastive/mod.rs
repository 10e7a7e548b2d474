//! The example-specific bi-gram model.
//!
//! Two encoder heads embed every segment: phi encodes a segment in its role
//! as the current (query) segment, psi in its role as a candidate target.
//! Keeping the heads separate breaks the symmetry of the similarity, so the
//! model can represent temporal direction: `score(i, j) != score(j, i)` in
//! general. The probability of moving from segment i to j is proportional to
//! `exp(sim(phi(x_i), psi(x_j)) / tau)`, and the heads are fit by pushing the
//! score of the true successor above the scores of sampled negative segments
//! (a temperature-scaled contrastive loss) with plain SGD and hand-derived
//! gradients. Base features stay frozen; only the heads train.

mod mlp;

pub use mlp::{MlpGrads, MlpHead};

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{cosine_sim, EmbeddingMatrix, FeatureSource};

pub const MODEL_MAGIC: &[u8; 4] = b"VTXM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: model expects base dim {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for {n} segments")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("negative set is empty")]
    EmptyNegatives,
    #[error("need at least 4 segments to train, got {0}")]
    InsufficientSegments(usize),
    #[error("loss became non-finite at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("unsupported model version {got} (expected {want})")]
    VersionMismatch { got: u32, want: u32 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Query head, target head and the temperature the pair was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGramModel {
    pub phi: MlpHead,
    pub psi: MlpHead,
    pub train_temperature: f64,
    pub base_dim: usize,
    trained: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Negatives sampled per query (capped by the available segments).
    pub negatives_per_query: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Multiplier on the per-layer `1/sqrt(fan_in)` init range.
    pub init_scale: f64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// The loss as printed excludes the positive from the denominator;
    /// set this to recover the standard formulation that includes it.
    pub include_positive_in_denominator: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 30,
            negatives_per_query: 64,
            temperature: 0.1,
            seed: 0,
            init_scale: 1.0,
            batch_size: 32,
            hidden_dim: 512,
            output_dim: 512,
            include_positive_in_denominator: false,
        }
    }
}

/// A trained model plus the mean loss per epoch.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: BiGramModel,
    pub epoch_losses: Vec<f64>,
}

impl BiGramModel {
    /// Fresh heads with independent random parameters. The result is not
    /// considered trained until it has been through [`train`].
    pub fn init<R: Rng>(
        base_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        init_scale: f64,
        temperature: f64,
        rng: &mut R,
    ) -> Self {
        BiGramModel {
            phi: MlpHead::init(base_dim, hidden_dim, output_dim, init_scale, rng),
            psi: MlpHead::init(base_dim, hidden_dim, output_dim, init_scale, rng),
            train_temperature: temperature,
            base_dim,
            trained: false,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }
}

fn row_f64(m: &EmbeddingMatrix, i: usize) -> Vec<f64> {
    m.row(i).iter().map(|&v| v as f64).collect()
}

fn normalize_in_place(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Encode all segments with both heads and L2-normalize the outputs.
/// Returns the query matrix Q and the target matrix T (both n x d_out).
pub fn forward(
    model: &BiGramModel,
    base: &EmbeddingMatrix,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix), ModelError> {
    if base.d() != model.base_dim {
        return Err(ModelError::DimMismatch {
            expected: model.base_dim,
            got: base.d(),
        });
    }
    let encode = |head: &MlpHead| -> EmbeddingMatrix {
        let mut values = Vec::with_capacity(base.n() * head.d_out);
        for i in 0..base.n() {
            let mut out = head.forward(&row_f64(base, i));
            normalize_in_place(&mut out);
            values.extend(out.iter().map(|&v| v as f32));
        }
        EmbeddingMatrix::from_raw_unchecked(base.n(), head.d_out, values, FeatureSource::External)
    };
    Ok((encode(&model.phi), encode(&model.psi)))
}

/// Directional similarity `sim(Q[i], T[j])`.
pub fn score(q: &EmbeddingMatrix, t: &EmbeddingMatrix, i: usize, j: usize) -> Result<f64, ModelError> {
    if i >= q.n() {
        return Err(ModelError::IndexOutOfRange { index: i, n: q.n() });
    }
    if j >= t.n() {
        return Err(ModelError::IndexOutOfRange { index: j, n: t.n() });
    }
    cosine_sim(q.row(i), t.row(j)).map_err(|_| ModelError::DimMismatch {
        expected: q.d(),
        got: t.d(),
    })
}

fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn nce_loss_with_convention(
    q: &EmbeddingMatrix,
    t: &EmbeddingMatrix,
    i: usize,
    negatives: &[usize],
    tau: f64,
    include_positive: bool,
) -> Result<f64, ModelError> {
    if i + 1 >= q.n() {
        return Err(ModelError::IndexOutOfRange { index: i, n: q.n() });
    }
    if negatives.is_empty() {
        return Err(ModelError::EmptyNegatives);
    }
    let a_pos = score(q, t, i, i + 1)? / tau;
    let mut denom: Vec<f64> = negatives
        .iter()
        .map(|&j| score(q, t, i, j).map(|s| s / tau))
        .collect::<Result<_, _>>()?;
    if include_positive {
        denom.push(a_pos);
    }
    Ok(-a_pos + logsumexp(&denom))
}

/// Contrastive loss for one query against a set of negatives, computed with a
/// max-shifted log-sum-exp. The positive `i+1` is excluded from the
/// denominator, so the loss can go negative.
pub fn nce_loss(
    q: &EmbeddingMatrix,
    t: &EmbeddingMatrix,
    i: usize,
    negatives: &[usize],
    tau: f64,
) -> Result<f64, ModelError> {
    nce_loss_with_convention(q, t, i, negatives, tau, false)
}

/// Sample `count` negatives for query `i` uniformly without replacement from
/// `[0, n) \ {i, i+1}` (all of them if fewer are available).
fn draw_negatives<R: Rng>(n: usize, i: usize, count: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).filter(|&j| j != i && j != i + 1).collect();
    let take = count.min(pool.len());
    for k in 0..take {
        let pick = rng.random_range(k..pool.len());
        pool.swap(k, pick);
    }
    pool.truncate(take);
    pool
}

/// Gradients for both heads in the layout of the model parameters.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub phi: MlpGrads,
    pub psi: MlpGrads,
}

impl ModelGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.phi.flat();
        out.extend(self.psi.flat());
        out
    }
}

struct RowEncoding {
    input: Vec<f64>,
    trace: mlp::MlpTrace,
    unit: Vec<f64>,
    norm: f64,
}

fn encode_row(head: &MlpHead, input: Vec<f64>) -> RowEncoding {
    let trace = head.forward_traced(&input);
    let mut unit = trace.out.clone();
    let norm = normalize_in_place(&mut unit);
    RowEncoding {
        input,
        trace,
        unit,
        norm,
    }
}

/// dL/d(pre-normalization output) given dL/d(unit output): project out the
/// radial component and divide by the norm. Zero-norm rows get zero gradient.
fn normalize_backward(d_unit: &[f64], unit: &[f64], norm: f64) -> Vec<f64> {
    if norm == 0.0 {
        return vec![0.0; d_unit.len()];
    }
    let radial: f64 = d_unit.iter().zip(unit).map(|(g, u)| g * u).sum();
    d_unit
        .iter()
        .zip(unit)
        .map(|(g, u)| (g - radial * u) / norm)
        .collect()
}

/// Mean loss over a batch of queries plus exact gradients of that mean with
/// respect to every parameter of both heads. Negatives are drawn from `rng`,
/// so the same seed reproduces the same sets and gradients bit for bit.
pub fn loss_and_gradients<R: Rng>(
    model: &BiGramModel,
    base: &EmbeddingMatrix,
    batch: &[usize],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(f64, ModelGrads), ModelError> {
    let n = base.n();
    if n < 4 {
        return Err(ModelError::InsufficientSegments(n));
    }
    if base.d() != model.base_dim {
        return Err(ModelError::DimMismatch {
            expected: model.base_dim,
            got: base.d(),
        });
    }
    for &i in batch {
        if i + 1 >= n {
            return Err(ModelError::IndexOutOfRange { index: i, n });
        }
    }
    let tau = cfg.temperature;
    let batch_negatives: Vec<Vec<usize>> = batch
        .iter()
        .map(|&i| draw_negatives(n, i, cfg.negatives_per_query, rng))
        .collect();

    // Encode lazily: phi for queries, psi for positives and negatives.
    let mut phi_rows: Vec<Option<RowEncoding>> = (0..n).map(|_| None).collect();
    let mut psi_rows: Vec<Option<RowEncoding>> = (0..n).map(|_| None).collect();
    for (&i, negs) in batch.iter().zip(&batch_negatives) {
        if negs.is_empty() {
            return Err(ModelError::EmptyNegatives);
        }
        if phi_rows[i].is_none() {
            phi_rows[i] = Some(encode_row(&model.phi, row_f64(base, i)));
        }
        for &j in negs.iter().chain(std::iter::once(&(i + 1))) {
            if psi_rows[j].is_none() {
                psi_rows[j] = Some(encode_row(&model.psi, row_f64(base, j)));
            }
        }
    }

    let d_out = model.phi.d_out;
    let mut d_q: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
    let mut d_t: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
    let mut loss_sum = 0.0;

    for (&i, negs) in batch.iter().zip(&batch_negatives) {
        let q_i = phi_rows[i].as_ref().expect("query encoded");
        let pos = i + 1;
        let s = |j: usize| -> f64 {
            let t_j = psi_rows[j].as_ref().expect("target encoded");
            q_i.unit.iter().zip(&t_j.unit).map(|(a, b)| a * b).sum::<f64>()
        };
        let a_pos = s(pos) / tau;
        let mut denom_idx: Vec<usize> = negs.clone();
        if cfg.include_positive_in_denominator {
            denom_idx.push(pos);
        }
        let denom_a: Vec<f64> = denom_idx.iter().map(|&j| s(j) / tau).collect();
        let m = denom_a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = denom_a.iter().map(|a| (a - m).exp()).sum();
        loss_sum += -a_pos + m + z.ln();

        // dL/ds_j: softmax weight / tau for denominator members, -1/tau for
        // the positive.
        let mut coeff: Vec<(usize, f64)> = denom_idx
            .iter()
            .zip(&denom_a)
            .map(|(&j, &a)| (j, (a - m).exp() / z / tau))
            .collect();
        coeff.push((pos, -1.0 / tau));

        let dq_acc = d_q[i].get_or_insert_with(|| vec![0.0; d_out]);
        for &(j, g) in &coeff {
            let t_j = psi_rows[j].as_ref().expect("target encoded");
            for (acc, &tv) in dq_acc.iter_mut().zip(&t_j.unit) {
                *acc += g * tv;
            }
            let dt_acc = d_t[j].get_or_insert_with(|| vec![0.0; d_out]);
            for (acc, &qv) in dt_acc.iter_mut().zip(&q_i.unit) {
                *acc += g * qv;
            }
        }
    }

    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grads = ModelGrads {
        phi: MlpGrads::zeros_like(&model.phi),
        psi: MlpGrads::zeros_like(&model.psi),
    };
    for i in 0..n {
        if let Some(dq) = &d_q[i] {
            let enc = phi_rows[i].as_ref().unwrap();
            let d_raw = normalize_backward(dq, &enc.unit, enc.norm);
            model.phi.backward(&enc.input, &enc.trace, &d_raw, &mut grads.phi);
        }
        if let Some(dt) = &d_t[i] {
            let enc = psi_rows[i].as_ref().unwrap();
            let d_raw = normalize_backward(dt, &enc.unit, enc.norm);
            model.psi.backward(&enc.input, &enc.trace, &d_raw, &mut grads.psi);
        }
    }
    grads.phi.scale(scale);
    grads.psi.scale(scale);
    Ok((loss_sum * scale, grads))
}

/// Fit both heads on frozen base features with full-shuffle mini-batch SGD.
pub fn train(base: &EmbeddingMatrix, cfg: &TrainConfig) -> Result<TrainedModel, ModelError> {
    let n = base.n();
    if n < 4 {
        return Err(ModelError::InsufficientSegments(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = BiGramModel::init(
        base.d(),
        cfg.hidden_dim,
        cfg.output_dim,
        cfg.init_scale,
        cfg.temperature,
        &mut rng,
    );
    let mut queries: Vec<usize> = (0..n - 1).collect();
    let batch_size = cfg.batch_size.max(1);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        queries.shuffle(&mut rng);
        let mut loss_acc = 0.0;
        let mut count = 0usize;
        for chunk in queries.chunks(batch_size) {
            let (loss, grads) = loss_and_gradients(&model, base, chunk, cfg, &mut rng)?;
            if !loss.is_finite() {
                return Err(ModelError::DivergenceDetected { epoch });
            }
            model.phi.apply_gradients(&grads.phi, cfg.learning_rate);
            model.psi.apply_gradients(&grads.psi, cfg.learning_rate);
            loss_acc += loss * chunk.len() as f64;
            count += chunk.len();
        }
        epoch_losses.push(loss_acc / count as f64);
    }
    model.trained = true;
    Ok(TrainedModel {
        model,
        epoch_losses,
    })
}

// ---------------------------------------------------------------------------
// Model files ("VTXM")
// ---------------------------------------------------------------------------

/// Write a model: `VTXM`, u32 version, dims (base, hidden, out), f32 train
/// temperature, then phi and psi parameters in declared layer order as
/// little-endian f32.
pub fn save_model(model: &BiGramModel, path: &Path) -> Result<(), ModelError> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.base_dim as u32).to_le_bytes());
    out.extend_from_slice(&(model.phi.hidden as u32).to_le_bytes());
    out.extend_from_slice(&(model.phi.d_out as u32).to_le_bytes());
    out.extend_from_slice(&(model.train_temperature as f32).to_le_bytes());
    for head in [&model.phi, &model.psi] {
        for v in head.flat_params() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<BiGramModel, ModelError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 {
        return Err(ModelError::Corrupt("file shorter than header".into()));
    }
    if &bytes[0..4] != MODEL_MAGIC {
        return Err(ModelError::Corrupt("bad magic bytes".into()));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = word(4);
    if version != MODEL_VERSION {
        return Err(ModelError::VersionMismatch {
            got: version,
            want: MODEL_VERSION,
        });
    }
    let base_dim = word(8) as usize;
    let hidden = word(12) as usize;
    let d_out = word(16) as usize;
    let temperature = f32::from_le_bytes(bytes[20..24].try_into().unwrap()) as f64;
    if base_dim == 0 || hidden == 0 || d_out == 0 || !temperature.is_finite() {
        return Err(ModelError::Corrupt("invalid header fields".into()));
    }
    let mut dummy_rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = BiGramModel::init(base_dim, hidden, d_out, 0.0, temperature, &mut dummy_rng);
    let per_head = model.phi.param_count();
    let expected = 24 + 2 * per_head * 4;
    if bytes.len() != expected {
        return Err(ModelError::Corrupt(format!(
            "expected {expected} bytes for {base_dim}/{hidden}/{d_out} dims, got {}",
            bytes.len()
        )));
    }
    let mut values = bytes[24..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let phi_params: Vec<f64> = values.by_ref().take(per_head).collect();
    let psi_params: Vec<f64> = values.collect();
    if phi_params.iter().chain(&psi_params).any(|v| !v.is_finite()) {
        return Err(ModelError::Corrupt("non-finite parameter".into()));
    }
    model.phi.set_flat_params(&phi_params);
    model.psi.set_flat_params(&psi_params);
    model.trained = true;
    Ok(model)
}
