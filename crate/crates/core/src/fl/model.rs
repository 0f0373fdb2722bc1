//! Fully-connected classifier over a flat parameter vector.
//!
//! Layer `l` maps `dims[l]` inputs to `dims[l+1]` outputs. Its parameters are
//! stored as a row-major `out x in` weight matrix followed by `out` biases.
//! Hidden layers use tanh; the output layer is a softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::Sample;
use crate::error::{Error, Result};

pub const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub params: Vec<f64>,
    pub layer_dims: Vec<usize>,
    pub param_count: usize,
}

pub fn param_count_for(layer_dims: &[usize]) -> usize {
    layer_dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl ModelState {
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::invalid(format!(
                "layer dims need >= 2 positive entries, got {layer_dims:?}"
            )));
        }
        let param_count = param_count_for(layer_dims);
        Ok(ModelState {
            params: vec![0.0; param_count],
            layer_dims: layer_dims.to_vec(),
            param_count,
        })
    }

    /// Uniform initialization in `[-INIT_RANGE, INIT_RANGE]`.
    pub fn init_uniform<R: Rng>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(layer_dims)?;
        for p in &mut m.params {
            *p = rng.random_range(-INIT_RANGE..=INIT_RANGE);
        }
        Ok(m)
    }

    pub fn from_params(layer_dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let m = Self::zeros(layer_dims)?;
        if params.len() != m.param_count {
            return Err(Error::invalid(format!(
                "expected {} params for {layer_dims:?}, got {}",
                m.param_count,
                params.len()
            )));
        }
        Ok(ModelState { params, ..m })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// SHA-256 over the little-endian parameter bytes, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        let mut offset = 0;
        self.layer_dims.windows(2).map(move |w| {
            let l = Layer {
                offset,
                fan_in: w[0],
                fan_out: w[1],
            };
            offset += (w[0] + 1) * w[1];
            l
        })
    }

    fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "feature length {} does not match model input {}",
                features.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds raw output logits.
    fn activations(&self, features: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.layer_dims.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(features.to_vec());
        for (li, layer) in self.layers().enumerate() {
            let input = &acts[li];
            let (w, b) = layer.split(&self.params);
            let mut out: Vec<f64> = b.to_vec();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(layer.fan_in)) {
                *o += dot(row, input);
            }
            if li + 1 < n_layers {
                out.iter_mut().for_each(|z| *z = z.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_input(features)?;
        Ok(self.activations(features).pop().unwrap())
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(features)?))
    }

    /// Mean cross-entropy of the batch.
    pub fn loss(&self, batch: &[&Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut total = 0.0;
        for s in batch {
            total += cross_entropy(&self.logits(&s.features)?, s.label);
        }
        Ok(total / batch.len() as f64)
    }

    /// Gradient of the mean cross-entropy over `batch` with respect to `params`.
    pub fn gradient(&self, batch: &[&Sample]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let layers: Vec<Layer> = self.layers().collect();
        let mut grad = vec![0.0; self.param_count];
        for s in batch {
            self.check_input(&s.features)?;
            if s.label >= self.num_classes() {
                return Err(Error::invalid(format!(
                    "label {} outside model's {} classes",
                    s.label,
                    self.num_classes()
                )));
            }
            let acts = self.activations(&s.features);
            // dL/dz at the output: softmax minus one-hot
            let mut delta = softmax(acts.last().unwrap());
            delta[s.label] -= 1.0;
            for (li, layer) in layers.iter().enumerate().rev() {
                let input = &acts[li];
                let (gw, gb) = layer.split_mut(&mut grad);
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    let row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (g, &x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                if li == 0 {
                    break;
                }
                let (w, _) = layer.split(&self.params);
                let mut prev = vec![0.0; layer.fan_in];
                for (o, &d) in delta.iter().enumerate() {
                    for (p, &wv) in prev.iter_mut().zip(&w[o * layer.fan_in..(o + 1) * layer.fan_in]) {
                        *p += d * wv;
                    }
                }
                // input is tanh output: derivative is 1 - a^2
                for (p, &a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok(grad)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    offset: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Layer {
    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let w_end = self.offset + self.fan_in * self.fan_out;
        (
            &params[self.offset..w_end],
            &params[w_end..w_end + self.fan_out],
        )
    }

    fn split_mut<'a>(&self, params: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let w_end = self.offset + self.fan_in * self.fan_out;
        let (w, rest) = params[self.offset..].split_at_mut(w_end - self.offset);
        (w, &mut rest[..self.fan_out])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(z)[label]`, computed via log-sum-exp.
pub fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
