//! Three-layer MLP encoder head with hand-written gradients.
//!
//! Layout: affine(d_in -> hidden), ReLU, affine(hidden -> hidden), ReLU,
//! affine(hidden -> d_out). The ReLU subgradient at 0 is 0. Weights are
//! row-major `[out_dim x in_dim]`.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
    pub weights: [Vec<f64>; 3],
    pub biases: [Vec<f64>; 3],
}

/// Forward intermediates needed for the backward pass.
pub(crate) struct MlpTrace {
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    pub out: Vec<f64>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: [Vec<f64>; 3],
    pub biases: [Vec<f64>; 3],
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out_dim: usize, in_dim: usize) -> Vec<f64> {
    let mut out = b.to_vec();
    for (o, out_v) in out.iter_mut().enumerate().take(out_dim) {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *out_v += acc;
    }
    out
}

impl MlpHead {
    /// Uniform init in `[-scale/sqrt(fan_in), scale/sqrt(fan_in)]` per layer,
    /// applied to weights and biases alike.
    pub fn init<R: Rng>(d_in: usize, hidden: usize, d_out: usize, scale: f64, rng: &mut R) -> Self {
        let dims = [(hidden, d_in), (hidden, hidden), (d_out, hidden)];
        let mut weights: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut biases: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (l, &(out, inp)) in dims.iter().enumerate() {
            let s = scale / (inp as f64).sqrt();
            weights[l] = (0..out * inp).map(|_| rng.random_range(-s..=s)).collect();
            biases[l] = (0..out).map(|_| rng.random_range(-s..=s)).collect();
        }
        MlpHead {
            d_in,
            hidden,
            d_out,
            weights,
            biases,
        }
    }

    pub(crate) fn layer_dims(&self) -> [(usize, usize); 3] {
        [
            (self.hidden, self.d_in),
            (self.hidden, self.hidden),
            (self.d_out, self.hidden),
        ]
    }

    pub(crate) fn forward_traced(&self, x: &[f64]) -> MlpTrace {
        let z1 = affine(&self.weights[0], &self.biases[0], x, self.hidden, self.d_in);
        let h1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
        let z2 = affine(&self.weights[1], &self.biases[1], &h1, self.hidden, self.hidden);
        let h2: Vec<f64> = z2.iter().map(|&v| v.max(0.0)).collect();
        let out = affine(&self.weights[2], &self.biases[2], &h2, self.d_out, self.hidden);
        MlpTrace { z1, h1, z2, h2, out }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_traced(x).out
    }

    /// Accumulate parameter gradients for one input given `d_out = dL/d(out)`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        trace: &MlpTrace,
        d_out: &[f64],
        grads: &mut MlpGrads,
    ) {
        let mut d_h2 = vec![0.0; self.hidden];
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.weights[2][o * self.hidden..(o + 1) * self.hidden];
            let grow = &mut grads.weights[2][o * self.hidden..(o + 1) * self.hidden];
            for i in 0..self.hidden {
                grow[i] += g * trace.h2[i];
                d_h2[i] += g * row[i];
            }
            grads.biases[2][o] += g;
        }

        let d_z2: Vec<f64> = d_h2
            .iter()
            .zip(&trace.z2)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let mut d_h1 = vec![0.0; self.hidden];
        for (o, &g) in d_z2.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.weights[1][o * self.hidden..(o + 1) * self.hidden];
            let grow = &mut grads.weights[1][o * self.hidden..(o + 1) * self.hidden];
            for i in 0..self.hidden {
                grow[i] += g * trace.h1[i];
                d_h1[i] += g * row[i];
            }
            grads.biases[1][o] += g;
        }

        let d_z1: Vec<f64> = d_h1
            .iter()
            .zip(&trace.z1)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        for (o, &g) in d_z1.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let grow = &mut grads.weights[0][o * self.d_in..(o + 1) * self.d_in];
            for (gw, &xi) in grow.iter_mut().zip(x) {
                *gw += g * xi;
            }
            grads.biases[0][o] += g;
        }
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(o, i)| o * i + o)
            .sum()
    }

    /// All parameters in declared layer order: W1, b1, W2, b2, W3, b3.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..3 {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut offset = 0;
        for l in 0..3 {
            let wl = self.weights[l].len();
            self.weights[l].copy_from_slice(&params[offset..offset + wl]);
            offset += wl;
            let bl = self.biases[l].len();
            self.biases[l].copy_from_slice(&params[offset..offset + bl]);
            offset += bl;
        }
    }

    /// `p -= lr * g` over all parameters.
    pub fn apply_gradients(&mut self, grads: &MlpGrads, lr: f64) {
        for l in 0..3 {
            for (p, g) in self.weights[l].iter_mut().zip(&grads.weights[l]) {
                *p -= lr * g;
            }
            for (p, g) in self.biases[l].iter_mut().zip(&grads.biases[l]) {
                *p -= lr * g;
            }
        }
    }
}

impl MlpGrads {
    pub fn zeros_like(head: &MlpHead) -> Self {
        MlpGrads {
            weights: [
                vec![0.0; head.weights[0].len()],
                vec![0.0; head.weights[1].len()],
                vec![0.0; head.weights[2].len()],
            ],
            biases: [
                vec![0.0; head.biases[0].len()],
                vec![0.0; head.biases[1].len()],
                vec![0.0; head.biases[2].len()],
            ],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in 0..3 {
            for g in self.weights[l].iter_mut() {
                *g *= factor;
            }
            for g in self.biases[l].iter_mut() {
                *g *= factor;
            }
        }
    }

    /// Same flat layout as [`MlpHead::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..3 {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }
}
