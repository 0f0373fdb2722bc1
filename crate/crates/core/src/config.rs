//! Scenario configuration.
//!
//! Config files are TOML with one section per concern. Physical values carry
//! their unit in the key name (`_mhz`, `_mw`, `_db`, `_dbm`, `_ghz`, `_m`) and
//! are converted to SI by the accessor methods. Overrides address keys by
//! dotted path, e.g. `training.epochs=5`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::LinkParams;
use crate::energy::PowerModel;
use crate::error::{Error, Result};
use crate::fl::TrainingPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub network: NetworkSection,
    pub link: LinkSection,
    pub power: PowerSection,
    pub compute: ComputeSection,
    pub geometry: GeometrySection,
    pub training: TrainingSection,
    pub data: DataSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub num_ues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub system_bandwidth_mhz: f64,
    pub ue_tx_power_mw: f64,
    pub uav_tx_power_mw: f64,
    pub beta0_db: f64,
    pub noise_dbm: f64,
    pub uav_height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub propulsion_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeSection {
    pub cpu_min_ghz: f64,
    pub cpu_max_ghz: f64,
    pub cycles_per_bit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub r_min_m: f64,
    pub r_max_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub alpha: f64,
    pub epochs: u32,
    pub max_rounds: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub layer_dims: Vec<usize>,
    pub bits_per_param: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    Iid,
    Shards,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Directory holding the four standard MNIST IDX files.
    pub mnist_dir: PathBuf,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub synthetic_classes: usize,
    pub synthetic_dim: usize,
    pub partition: PartitionKind,
    pub shards_per_client: usize,
}

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Keys that may be absent from a serialized config but still accept overrides.
const OPTIONAL_KEYS: &[&str] = &["training.target_accuracy"];

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            network: NetworkSection { num_ues: 100 },
            link: LinkSection {
                system_bandwidth_mhz: 1.0,
                ue_tx_power_mw: 100.0,
                uav_tx_power_mw: 10.0,
                beta0_db: -50.0,
                noise_dbm: -110.0,
                uav_height_m: 100.0,
            },
            power: PowerSection { propulsion_w: 100.0 },
            compute: ComputeSection {
                cpu_min_ghz: 1.8,
                cpu_max_ghz: 2.0,
                cycles_per_bit: 20.0,
            },
            geometry: GeometrySection {
                r_min_m: 0.0,
                r_max_m: 10.0,
            },
            training: TrainingSection {
                alpha: 0.1,
                epochs: 1,
                max_rounds: 100,
                target_accuracy: None,
                batch_size: 10,
                learning_rate: 0.05,
                layer_dims: vec![784, 32, 10],
                bits_per_param: 32,
            },
            data: DataSection {
                source: DataSource::Mnist,
                mnist_dir: PathBuf::from("data/mnist"),
                synthetic_train: 2000,
                synthetic_test: 1000,
                synthetic_classes: 10,
                synthetic_dim: 784,
                partition: PartitionKind::Iid,
                shards_per_client: 2,
            },
        }
    }
}

impl ScenarioConfig {
    /// Default physical and training setup on synthetic Gaussian-blob data.
    pub fn synthetic() -> Self {
        let mut c = Self::default();
        c.data.source = DataSource::Synthetic;
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Reads a config file. Relative `mnist_dir` paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.data.mnist_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.data.mnist_dir = parent.join(&cfg.data.mnist_dir);
            }
        }
        Ok(cfg)
    }

    /// Applies `key=value` overrides. Values are parsed as TOML literals,
    /// falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{raw}` is not key=value")))?;
            set_path(&mut doc, key.trim(), parse_literal(value.trim()))?;
        }
        toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn has_key(&self, key: &str) -> bool {
        if OPTIONAL_KEYS.contains(&key) {
            return true;
        }
        let doc = toml::Table::try_from(self).expect("config serializes to TOML");
        lookup(&doc, key).is_some()
    }

    /// Returns every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        let t = &self.training;
        check(self.network.num_ues >= 1, "network.num_ues must be >= 1".into());
        check(
            t.alpha > 0.0 && t.alpha <= 1.0,
            format!("training.alpha must lie in (0, 1], got {}", t.alpha),
        );
        check(t.epochs >= 1, "training.epochs must be >= 1".into());
        check(t.batch_size >= 1, "training.batch_size must be >= 1".into());
        check(
            t.learning_rate >= 0.0 && t.learning_rate.is_finite(),
            format!("training.learning_rate must be finite and >= 0, got {}", t.learning_rate),
        );
        check(t.bits_per_param >= 1, "training.bits_per_param must be >= 1".into());
        check(
            t.layer_dims.len() >= 2 && t.layer_dims.iter().all(|&d| d >= 1),
            format!("training.layer_dims needs >= 2 positive sizes, got {:?}", t.layer_dims),
        );
        if let Some(a) = t.target_accuracy {
            check(
                (0.0..=1.0).contains(&a),
                format!("training.target_accuracy must lie in [0, 1], got {a}"),
            );
        }
        let c = &self.compute;
        check(
            c.cpu_min_ghz > 0.0 && c.cpu_min_ghz <= c.cpu_max_ghz && c.cpu_max_ghz.is_finite(),
            format!(
                "compute range must satisfy 0 < cpu_min_ghz <= cpu_max_ghz, got [{}, {}]",
                c.cpu_min_ghz, c.cpu_max_ghz
            ),
        );
        check(
            c.cycles_per_bit > 0.0,
            format!("compute.cycles_per_bit must be > 0, got {}", c.cycles_per_bit),
        );
        let g = &self.geometry;
        check(
            g.r_min_m >= 0.0 && g.r_min_m <= g.r_max_m && g.r_max_m.is_finite(),
            format!(
                "geometry range must satisfy 0 <= r_min_m <= r_max_m, got [{}, {}]",
                g.r_min_m, g.r_max_m
            ),
        );
        check(
            self.power.propulsion_w >= 0.0,
            format!("power.propulsion_w must be >= 0, got {}", self.power.propulsion_w),
        );
        let d = &self.data;
        if d.source == DataSource::Synthetic {
            check(
                d.synthetic_train >= self.network.num_ues,
                format!(
                    "data.synthetic_train ({}) must be >= network.num_ues ({})",
                    d.synthetic_train, self.network.num_ues
                ),
            );
            check(d.synthetic_test >= 1, "data.synthetic_test must be >= 1".into());
            check(d.synthetic_classes >= 1, "data.synthetic_classes must be >= 1".into());
            check(
                t.layer_dims.first() == Some(&d.synthetic_dim),
                format!(
                    "training.layer_dims input {:?} must equal data.synthetic_dim {}",
                    t.layer_dims.first(),
                    d.synthetic_dim
                ),
            );
            check(
                t.layer_dims.last() == Some(&d.synthetic_classes),
                format!(
                    "training.layer_dims output {:?} must equal data.synthetic_classes {}",
                    t.layer_dims.last(),
                    d.synthetic_classes
                ),
            );
        }
        if d.partition == PartitionKind::Shards {
            check(d.shards_per_client >= 1, "data.shards_per_client must be >= 1".into());
        }
        if let Err(Error::Validation(v)) = self.link_params().validate() {
            errs.extend(v.into_iter().map(|m| format!("link: {m}")));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn link_params(&self) -> LinkParams {
        let l = &self.link;
        LinkParams {
            beta0_db: l.beta0_db,
            noise_dbm: l.noise_dbm,
            system_bandwidth_hz: l.system_bandwidth_mhz * 1e6,
            uav_height_m: l.uav_height_m,
            uav_tx_power_w: l.uav_tx_power_mw * 1e-3,
            ue_tx_power_w: l.ue_tx_power_mw * 1e-3,
        }
    }

    pub fn power_model(&self) -> PowerModel {
        PowerModel {
            propulsion_w: self.power.propulsion_w,
            uav_tx_w: self.link.uav_tx_power_mw * 1e-3,
        }
    }

    pub fn training_policy(&self) -> TrainingPolicy {
        let t = &self.training;
        TrainingPolicy {
            client_fraction_alpha: t.alpha,
            local_epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            max_rounds: t.max_rounds,
        }
    }

    pub fn mnist_paths(&self) -> [PathBuf; 4] {
        MNIST_FILES.map(|f| self.data.mnist_dir.join(f))
    }
}

fn parse_literal(value: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

fn lookup<'a>(doc: &'a toml::Table, key: &str) -> Option<&'a toml::Value> {
    let mut parts = key.split('.');
    let mut cur = doc.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let unknown = || Error::Config(format!("unknown config key `{key}`"));
    let (parent, leaf) = match key.rsplit_once('.') {
        Some((p, l)) => (Some(p), l),
        None => (None, key),
    };
    let table = match parent {
        None => doc,
        Some(p) => {
            let mut cur = &mut *doc;
            for part in p.split('.') {
                cur = cur
                    .get_mut(part)
                    .and_then(toml::Value::as_table_mut)
                    .ok_or_else(unknown)?;
            }
            cur
        }
    };
    if !table.contains_key(leaf) && !OPTIONAL_KEYS.contains(&key) {
        return Err(unknown());
    }
    if matches!(table.get(leaf), Some(toml::Value::Table(_))) {
        return Err(Error::Config(format!("`{key}` is a section, not a value")));
    }
    // integer literals given for float fields still deserialize as floats
    let value = match (table.get(leaf), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    table.insert(leaf.to_string(), value);
    Ok(())
}
