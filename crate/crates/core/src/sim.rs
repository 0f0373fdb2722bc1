//! Scenario construction and the round loop.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, PartitionKind, ScenarioConfig};
use crate::energy::{self, ComputeSpec, RoundTiming, UeLink};
use crate::error::{Error, Result};
use crate::fl::{self, ClientUpdate, Dataset, ModelState, Shard, TrainingPolicy, UeId};
use crate::rng::{stream, Stream};

/// One terrestrial client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEquipment {
    pub id: UeId,
    pub horizontal_dist_m: f64,
    pub cpu_hz: f64,
    pub tx_power_w: f64,
    pub shard: Shard,
}

impl UserEquipment {
    pub fn link(&self, cycles_per_bit: f64, feature_dim: usize) -> UeLink {
        UeLink {
            id: self.id,
            horizontal_dist_m: self.horizontal_dist_m,
            compute: ComputeSpec {
                cpu_hz: self.cpu_hz,
                cycles_per_bit,
                shard_bits: energy::shard_bits(self.shard.indices.len(), feature_dim),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub ues: Vec<UserEquipment>,
    pub train: Dataset,
    pub test: Dataset,
    pub initial_model: ModelState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u32,
    pub selected: Vec<UeId>,
    pub timing: RoundTiming,
    pub cumulative_flight_j: f64,
    pub cumulative_dissemination_j: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
}

impl RoundRecord {
    pub fn cumulative_total_j(&self) -> f64 {
        self.cumulative_flight_j + self.cumulative_dissemination_j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub records: Vec<RoundRecord>,
    pub final_model_digest: String,
    pub wall_seconds_host: f64,
}

impl RunResult {
    pub fn final_energy(&self) -> energy::UavEnergy {
        self.records
            .last()
            .map(|r| energy::UavEnergy {
                flight_j: r.cumulative_flight_j,
                dissemination_j: r.cumulative_dissemination_j,
                total_j: r.cumulative_total_j(),
            })
            .unwrap_or_default()
    }

    /// First round (1-based count of records) whose accuracy reaches `threshold`.
    pub fn rounds_to_accuracy(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .position(|r| r.test_accuracy >= threshold)
            .map(|i| i + 1)
    }
}

/// Loads or synthesizes data as configured and returns `(train, test)`.
pub fn load_data(config: &ScenarioConfig) -> Result<(Dataset, Dataset)> {
    let d = &config.data;
    match d.source {
        DataSource::Mnist => {
            let [ti, tl, vi, vl] = config.mnist_paths();
            let train = fl::load_mnist_idx(&ti, &tl)?;
            let test = fl::load_mnist_idx(&vi, &vl)?;
            Ok((train, test))
        }
        DataSource::Synthetic => {
            let mut rng = stream(config.seed, Stream::Data);
            let all = fl::synth_dataset(
                d.synthetic_train + d.synthetic_test,
                d.synthetic_classes,
                d.synthetic_dim,
                &mut rng,
            )?;
            let mut samples = all.samples;
            let test = samples.split_off(d.synthetic_train);
            Ok((
                Dataset::new(format!("{}-train", all.name), samples, all.num_classes)?,
                Dataset::new(format!("{}-test", all.name), test, all.num_classes)?,
            ))
        }
    }
}

pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let (train, test) = load_data(config)?;
    build_scenario_with_data(config, train, test)
}

/// Builds a scenario around already-loaded datasets.
pub fn build_scenario_with_data(config: &ScenarioConfig, train: Dataset, test: Dataset) -> Result<Scenario> {
    config.validate()?;
    let dims = &config.training.layer_dims;
    for (name, ds) in [("train", &train), ("test", &test)] {
        if ds.is_empty() {
            return Err(Error::Validation(vec![format!("{name} dataset is empty")]));
        }
        if ds.feature_dim() != dims[0] {
            return Err(Error::Validation(vec![format!(
                "{name} features have dimension {}, model input is {}",
                ds.feature_dim(),
                dims[0]
            )]));
        }
        if ds.num_classes > *dims.last().unwrap() {
            return Err(Error::Validation(vec![format!(
                "{name} has {} classes, model output is {}",
                ds.num_classes,
                dims.last().unwrap()
            )]));
        }
    }
    let n = config.network.num_ues;
    if train.len() < n {
        return Err(Error::Validation(vec![format!(
            "{} training samples cannot cover {n} UEs",
            train.len()
        )]));
    }

    let mut part_rng = stream(config.seed, Stream::Partition);
    let shards = match config.data.partition {
        PartitionKind::Iid => fl::partition_iid(train.len(), n, &mut part_rng)?,
        PartitionKind::Shards => {
            fl::partition_shards_noniid(&train, n, config.data.shards_per_client, &mut part_rng)?
        }
    };

    let g = &config.geometry;
    let c = &config.compute;
    let mut geo_rng = stream(config.seed, Stream::Geometry);
    let mut cpu_rng = stream(config.seed, Stream::Compute);
    let ue_tx_power_w = config.link_params().ue_tx_power_w;
    let ues = shards
        .into_iter()
        .map(|shard| UserEquipment {
            id: shard.owner_ue,
            horizontal_dist_m: uniform(&mut geo_rng, g.r_min_m, g.r_max_m),
            cpu_hz: uniform(&mut cpu_rng, c.cpu_min_ghz, c.cpu_max_ghz) * 1e9,
            tx_power_w: ue_tx_power_w,
            shard,
        })
        .collect();

    let initial_model = ModelState::init_uniform(dims, &mut stream(config.seed, Stream::Init))?;
    Ok(Scenario {
        config: config.clone(),
        ues,
        train,
        test,
        initial_model,
    })
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// How local updates within a round are executed. Results are identical
/// for every thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel { threads: usize },
}

impl Scenario {
    pub fn policy(&self) -> TrainingPolicy {
        self.config.training_policy()
    }

    pub fn run(&self, policy: &TrainingPolicy) -> Result<RunResult> {
        self.run_with(policy, Execution::Sequential)
    }

    pub fn run_with(&self, policy: &TrainingPolicy, exec: Execution) -> Result<RunResult> {
        self.run_observed(policy, exec, |_, _| {})
    }

    /// Like [`Scenario::run_with`], calling `observe` after each finished
    /// round with its record and the new global model.
    pub fn run_observed(
        &self,
        policy: &TrainingPolicy,
        exec: Execution,
        mut observe: impl FnMut(&RoundRecord, &ModelState),
    ) -> Result<RunResult> {
        let started = Instant::now();
        let pool = match exec {
            Execution::Sequential => None,
            Execution::Parallel { threads } => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads.max(1))
                    .build()
                    .map_err(|e| Error::invalid(format!("thread pool: {e}")))?,
            ),
        };

        let cfg = &self.config;
        let link = cfg.link_params();
        let power = cfg.power_model();
        let payload = energy::model_payload_bits(self.initial_model.param_count, cfg.training.bits_per_param)?;
        let feature_dim = self.train.feature_dim();

        let mut global = self.initial_model.clone();
        let mut records: Vec<RoundRecord> = Vec::new();
        let mut timings: Vec<RoundTiming> = Vec::new();

        for round in 0..policy.max_rounds {
            let selected = fl::select_clients(
                self.ues.len(),
                policy.client_fraction_alpha,
                &mut stream(cfg.seed, Stream::Selection { round }),
            )?;
            let chosen: Vec<&UserEquipment> = selected.iter().map(|&id| &self.ues[id as usize]).collect();

            let local = |ue: &&UserEquipment| -> Result<ClientUpdate> {
                let mut rng = stream(cfg.seed, Stream::Client { round, ue: ue.id });
                let model = fl::local_update(&global, &self.train, &ue.shard, policy, &mut rng)?;
                Ok(ClientUpdate {
                    ue: ue.id,
                    model,
                    weight: ue.shard.indices.len() as f64,
                })
            };
            let updates: Vec<ClientUpdate> = match &pool {
                None => chosen.iter().map(local).collect::<Result<_>>()?,
                Some(pool) => pool.install(|| chosen.par_iter().map(local).collect::<Result<_>>())?,
            };

            let links: Vec<UeLink> = chosen
                .iter()
                .map(|ue| ue.link(cfg.compute.cycles_per_bit, feature_dim))
                .collect();
            let timing = energy::round_timing(&links, &link, payload, policy.local_epochs)?;

            global = fl::fedavg_aggregate(&updates)?;
            if !global.is_finite() {
                return Err(Error::invalid(format!(
                    "global model diverged to non-finite values in round {round}"
                )));
            }
            let eval = fl::evaluate(&global, &self.test)?;

            timings.push(timing.clone());
            let e = energy::uav_energy(&timings, &power);
            let record = RoundRecord {
                round_index: round,
                selected,
                timing,
                cumulative_flight_j: e.flight_j,
                cumulative_dissemination_j: e.dissemination_j,
                test_accuracy: eval.accuracy,
                test_loss: eval.mean_loss,
            };
            observe(&record, &global);
            let reached = cfg
                .training
                .target_accuracy
                .is_some_and(|target| record.test_accuracy >= target);
            records.push(record);
            if reached {
                break;
            }
        }

        Ok(RunResult {
            config: cfg.clone(),
            records,
            final_model_digest: global.digest(),
            wall_seconds_host: started.elapsed().as_secs_f64(),
        })
    }
}

/// Builds the scenario and runs it with the configured policy.
pub fn run_config(config: &ScenarioConfig, exec: Execution) -> Result<RunResult> {
    let scenario = build_scenario(config)?;
    scenario.run_with(&scenario.policy(), exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::synthetic();
        c.network.num_ues = 10;
        c.training.alpha = 0.3;
        c.training.max_rounds = 4;
        c.training.layer_dims = vec![16, 8, 4];
        c.data.synthetic_dim = 16;
        c.data.synthetic_classes = 4;
        c.data.synthetic_train = 200;
        c.data.synthetic_test = 80;
        c
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_scenario(&small()).unwrap();
        let b = build_scenario(&small()).unwrap();
        assert_eq!(a.ues, b.ues);
        assert_eq!(a.initial_model, b.initial_model);
        assert_eq!(a.train, b.train);
        for ue in &a.ues {
            assert!((0.0..=10.0).contains(&ue.horizontal_dist_m));
            assert!((1.8e9..=2.0e9).contains(&ue.cpu_hz));
            assert_eq!(ue.shard.indices.len(), 20);
        }
    }

    #[test]
    fn degenerate_geometry_range() {
        let mut c = small();
        c.geometry.r_min_m = 5.0;
        c.geometry.r_max_m = 5.0;
        let s = build_scenario(&c).unwrap();
        assert!(s.ues.iter().all(|u| u.horizontal_dist_m == 5.0));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = small();
        c.training.alpha = 2.0;
        c.geometry.r_max_m = -1.0;
        match build_scenario(&c) {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_rounds_is_empty() {
        let s = build_scenario(&small()).unwrap();
        let policy = TrainingPolicy {
            max_rounds: 0,
            ..s.policy()
        };
        let r = s.run(&policy).unwrap();
        assert!(r.records.is_empty());
        assert_eq!(r.final_energy(), energy::UavEnergy::default());
        assert_eq!(r.final_model_digest, s.initial_model.digest());
    }

    #[test]
    fn zero_learning_rate_keeps_accuracy_flat() {
        let s = build_scenario(&small()).unwrap();
        let init = fl::evaluate(&s.initial_model, &s.test).unwrap();
        let policy = TrainingPolicy {
            learning_rate: 0.0,
            ..s.policy()
        };
        let r = s.run(&policy).unwrap();
        assert_eq!(r.records.len(), 4);
        for rec in &r.records {
            assert_eq!(rec.test_accuracy, init.accuracy);
            assert_eq!(rec.test_loss, init.mean_loss);
        }
    }

    #[test]
    fn records_are_consistent() {
        let s = build_scenario(&small()).unwrap();
        let r = s.run(&s.policy()).unwrap();
        let mut prev = (0.0, 0.0);
        for (i, rec) in r.records.iter().enumerate() {
            assert_eq!(rec.round_index as usize, i);
            assert_eq!(rec.selected.len(), 3);
            assert!(rec.timing.is_consistent());
            assert!(rec.cumulative_flight_j >= prev.0 && rec.cumulative_dissemination_j >= prev.1);
            assert!((0.0..=1.0).contains(&rec.test_accuracy));
            prev = (rec.cumulative_flight_j, rec.cumulative_dissemination_j);
        }
        let e = energy::uav_energy(r.records.iter().map(|r| &r.timing), &s.config.power_model());
        let last = r.records.last().unwrap();
        assert!((last.cumulative_flight_j - e.flight_j).abs() <= 1e-12 * e.flight_j);
        assert!((last.cumulative_dissemination_j - e.dissemination_j).abs() <= 1e-12 * e.dissemination_j);
    }

    #[test]
    fn early_stop_on_target() {
        let mut c = small();
        c.training.max_rounds = 50;
        c.training.target_accuracy = Some(0.0);
        let r = run_config(&c, Execution::Sequential).unwrap();
        assert_eq!(r.records.len(), 1);
    }
}
