//! Federated averaging over a small fully-connected classifier.

pub mod data;
pub mod model;
pub mod train;

pub use data::{
    load_mnist_idx, partition_iid, partition_shards_noniid, synth_dataset, Dataset, Sample, Shard, UeId,
};
pub use model::{param_count_for, ModelState};
pub use train::{
    clients_per_round, evaluate, fedavg_aggregate, local_update, select_clients, sgd_step, ClientUpdate,
    Evaluation, TrainingPolicy,
};
