//! Client selection, local SGD and federated averaging.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Sample, Shard, UeId};
use super::model::{argmax, cross_entropy, ModelState};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPolicy {
    pub client_fraction_alpha: f64,
    pub local_epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_rounds: u32,
}

impl Default for TrainingPolicy {
    fn default() -> Self {
        TrainingPolicy {
            client_fraction_alpha: 0.1,
            local_epochs: 1,
            batch_size: 10,
            learning_rate: 0.05,
            max_rounds: 100,
        }
    }
}

/// `ceil(alpha * n)`, computed so that exact products like `0.1 * 100` are
/// not pushed up by rounding noise.
pub fn clients_per_round(num_clients: usize, alpha: f64) -> usize {
    let raw = alpha * num_clients as f64;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    (k as usize).clamp(1, num_clients.max(1))
}

/// Uniform subset of `ceil(alpha * num_clients)` UEs, returned in ascending order.
pub fn select_clients(num_clients: usize, alpha: f64, round_rng: &mut SimRng) -> Result<Vec<UeId>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if num_clients == 0 {
        return Err(Error::invalid("no clients to select from"));
    }
    let k = clients_per_round(num_clients, alpha);
    let mut ids: Vec<UeId> = rand::seq::index::sample(round_rng, num_clients, k)
        .into_iter()
        .map(|i| i as UeId)
        .collect();
    ids.sort_unstable();
    Ok(ids)
}

/// One SGD step in place: `params -= lr * grad`.
pub fn sgd_step(model: &mut ModelState, batch: &[&Sample], learning_rate: f64) -> Result<()> {
    let grad = model.gradient(batch)?;
    for (p, g) in model.params.iter_mut().zip(grad) {
        *p -= learning_rate * g;
    }
    Ok(())
}

/// Runs `local_epochs` epochs of minibatch SGD over the shard, starting from
/// a copy of `global`. Each epoch reshuffles the shard order with `client_rng`;
/// the final batch of an epoch may be short.
pub fn local_update(
    global: &ModelState,
    dataset: &Dataset,
    shard: &Shard,
    policy: &TrainingPolicy,
    client_rng: &mut SimRng,
) -> Result<ModelState> {
    if shard.indices.is_empty() {
        return Err(Error::invalid(format!("UE {} has an empty shard", shard.owner_ue)));
    }
    if policy.batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let mut model = global.clone();
    let mut order = shard.indices.clone();
    for _ in 0..policy.local_epochs {
        order.shuffle(client_rng);
        for chunk in order.chunks(policy.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();
            sgd_step(&mut model, &batch, policy.learning_rate)?;
        }
    }
    Ok(model)
}

/// A model returned by one UE together with its aggregation weight.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub ue: UeId,
    pub model: ModelState,
    pub weight: f64,
}

/// Weighted average of client models.
///
/// Updates are accumulated in ascending UE order with weights normalized
/// first, so the result does not depend on the order of `updates` and a
/// single update is returned bit-for-bit.
pub fn fedavg_aggregate(updates: &[ClientUpdate]) -> Result<ModelState> {
    let first = updates
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty update list"))?;
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.ue);
    for u in &sorted {
        if u.model.layer_dims != first.model.layer_dims || u.model.params.len() != first.model.param_count {
            return Err(Error::invalid(format!(
                "UE {} update has shape {:?}, expected {:?}",
                u.ue, u.model.layer_dims, first.model.layer_dims
            )));
        }
        if !(u.weight >= 0.0 && u.weight.is_finite()) {
            return Err(Error::invalid(format!("UE {} has invalid weight {}", u.ue, u.weight)));
        }
    }
    let total: f64 = sorted.iter().map(|u| u.weight).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::invalid("aggregation weights sum to zero"));
    }
    let mut params = vec![0.0; first.model.param_count];
    for u in &sorted {
        let w = u.weight / total;
        for (acc, &p) in params.iter_mut().zip(&u.model.params) {
            *acc += w * p;
        }
    }
    ModelState::from_params(&first.model.layer_dims, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

pub fn evaluate(model: &ModelState, testset: &Dataset) -> Result<Evaluation> {
    if testset.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty test set"));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for s in &testset.samples {
        let z = model.logits(&s.features)?;
        if argmax(&z) == s.label {
            correct += 1;
        }
        loss += cross_entropy(&z, s.label);
    }
    let n = testset.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        mean_loss: loss / n,
    })
}
