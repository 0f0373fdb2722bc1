//! Oracles shared by the integration suites. They use only the public
//! gradient and loss primitives, never the aggregation or local-update code
//! they are checked against.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use uavfl::fl::{Dataset, ModelState, Sample, TrainingPolicy};
use uavfl::rng::{stream, Stream};

/// Largest relative error between the analytic gradient and central
/// differences of the loss, over every coordinate.
pub fn max_fd_error(model: &ModelState, batch: &[&Sample], h: f64) -> f64 {
    let analytic = model.gradient(batch).unwrap();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = model.clone();
        plus.params[i] += h;
        let mut minus = model.clone();
        minus.params[i] -= h;
        let numeric = (plus.loss(batch).unwrap() - minus.loss(batch).unwrap()) / (2.0 * h);
        let denom = (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

pub fn random_samples(n: usize, dim: usize, classes: usize, seed: u64) -> Vec<Sample> {
    let mut rng = stream(seed, Stream::Data);
    (0..n)
        .map(|i| Sample {
            features: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            label: i % classes,
        })
        .collect()
}

pub fn brute_force_average(rows: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let total: f64 = rows.iter().map(|r| r.1).sum();
    (0..rows[0].0.len())
        .map(|c| rows.iter().map(|(p, w)| w * p[c]).sum::<f64>() / total)
        .collect()
}

/// Plain minibatch SGD written out directly, consuming the same client
/// streams the simulator uses.
pub fn plain_sgd_trace(
    init: &ModelState,
    data: &Dataset,
    indices: &[usize],
    policy: &TrainingPolicy,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut params = init.params.clone();
    let mut trace = Vec::new();
    for round in 0..policy.max_rounds {
        let mut rng = stream(seed, Stream::Client { round, ue: 0 });
        let mut order = indices.to_vec();
        for _ in 0..policy.local_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(policy.batch_size) {
                let model = ModelState::from_params(&init.layer_dims, params.clone()).unwrap();
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.samples[i]).collect();
                let g = model.gradient(&batch).unwrap();
                for (p, gv) in params.iter_mut().zip(&g) {
                    *p -= policy.learning_rate * gv;
                }
            }
        }
        trace.push(params.clone());
    }
    trace
}
