//! Datasets, MNIST IDX loading, and client partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IdxError, Result};
use crate::rng::SimRng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub type UeId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>, num_classes: usize) -> Result<Self> {
        let name = name.into();
        if let Some(first) = samples.first() {
            let dim = first.features.len();
            for (i, s) in samples.iter().enumerate() {
                if s.features.len() != dim {
                    return Err(Error::invalid(format!(
                        "{name}: sample {i} has {} features, expected {dim}",
                        s.features.len()
                    )));
                }
                if s.label >= num_classes {
                    return Err(Error::invalid(format!(
                        "{name}: sample {i} label {} outside [0, {num_classes})",
                        s.label
                    )));
                }
            }
        }
        Ok(Dataset {
            name,
            samples,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn label_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &i in indices {
            h[self.samples[i].label] += 1;
        }
        h
    }
}

/// Indices of one UE's local data within the parent dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub owner_ue: UeId,
    pub indices: Vec<usize>,
}

struct Reader<'a> {
    file: &'a str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, field: &'static str) -> std::result::Result<u32, IdxError> {
        let bytes = self.take(4, field)?;
        Ok(u32::from_be_bytes(bytes.try_into().unwrap()))
    }

    fn take(&mut self, n: usize, field: &'static str) -> std::result::Result<&'a [u8], IdxError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(IdxError::Truncated {
                file: self.file.to_string(),
                field,
            }),
        }
    }
}

/// Parses an IDX3 image file into per-image pixel vectors scaled to [0, 1].
pub fn parse_idx_images(file: &str, buf: &[u8]) -> std::result::Result<Vec<Vec<f64>>, IdxError> {
    let mut r = Reader { file, buf, pos: 0 };
    let magic = r.u32("magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            file: file.to_string(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = r.u32("count")? as usize;
    let rows = r.u32("rows")?;
    let cols = r.u32("cols")?;
    for (field, value) in [("rows", rows), ("cols", cols)] {
        if value == 0 {
            return Err(IdxError::BadHeader {
                file: file.to_string(),
                field,
                value,
            });
        }
    }
    let dim = rows as usize * cols as usize;
    let pixels = r.take(count * dim, "pixels")?;
    Ok(pixels
        .chunks_exact(dim)
        .map(|img| img.iter().map(|&p| p as f64 / 255.0).collect())
        .collect())
}

pub fn parse_idx_labels(file: &str, buf: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    let mut r = Reader { file, buf, pos: 0 };
    let magic = r.u32("magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            file: file.to_string(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = r.u32("count")? as usize;
    Ok(r.take(count, "labels")?.to_vec())
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images_buf = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels_buf = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let images = parse_idx_images(&images_path.display().to_string(), &images_buf)?;
    let labels = parse_idx_labels(&labels_path.display().to_string(), &labels_buf)?;
    if images.len() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        }
        .into());
    }
    let samples = images
        .into_iter()
        .zip(labels)
        .map(|(features, label)| Sample {
            features,
            label: label as usize,
        })
        .collect();
    let name = images_path
        .file_name()
        .map_or_else(|| "mnist".to_string(), |n| n.to_string_lossy().into_owned());
    Dataset::new(name, samples, 10)
}

/// Gaussian-blob classification data.
///
/// Each class gets a standard-normal center; samples add unit isotropic noise.
/// The whole set is then mapped affinely into [0, 1] using the global min and
/// max over all feature values.
pub fn synth_dataset(
    num_samples: usize,
    num_classes: usize,
    feature_dim: usize,
    rng: &mut SimRng,
) -> Result<Dataset> {
    if num_samples == 0 || num_classes == 0 || feature_dim == 0 {
        return Err(Error::invalid("synthetic dataset sizes must all be >= 1"));
    }
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..feature_dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut samples: Vec<Sample> = (0..num_samples)
        .map(|i| {
            // round-robin labels keep classes balanced
            let label = i % num_classes;
            let features = centers[label]
                .iter()
                .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                .collect();
            Sample { features, label }
        })
        .collect();
    samples.shuffle(rng);

    let (lo, hi) = samples
        .iter()
        .flat_map(|s| s.features.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    for s in &mut samples {
        for x in &mut s.features {
            *x = (*x - lo) / span;
        }
    }
    Dataset::new(
        format!("synthetic-{num_samples}x{feature_dim}-{num_classes}c"),
        samples,
        num_classes,
    )
}

/// Seeded shuffle, then contiguous slices. The first `len % num_clients`
/// clients get one extra sample each.
pub fn partition_iid(len: usize, num_clients: usize, rng: &mut SimRng) -> Result<Vec<Shard>> {
    if num_clients == 0 {
        return Err(Error::invalid("partition needs at least one client"));
    }
    if len == 0 {
        return Err(Error::invalid("cannot partition an empty dataset"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    let base = len / num_clients;
    let extra = len % num_clients;
    let mut shards = Vec::with_capacity(num_clients);
    let mut start = 0;
    for c in 0..num_clients {
        let size = base + usize::from(c < extra);
        shards.push(Shard {
            owner_ue: c as UeId,
            indices: order[start..start + size].to_vec(),
        });
        start += size;
    }
    Ok(shards)
}

/// Label-sorted pathological split: sort by label, cut into
/// `num_clients * shards_per_client` equal slices and deal
/// `shards_per_client` random slices to each client.
pub fn partition_shards_noniid(
    dataset: &Dataset,
    num_clients: usize,
    shards_per_client: usize,
    rng: &mut SimRng,
) -> Result<Vec<Shard>> {
    let slices = num_clients * shards_per_client;
    if slices == 0 {
        return Err(Error::invalid("num_clients and shards_per_client must be >= 1"));
    }
    if dataset.is_empty() || !dataset.len().is_multiple_of(slices) {
        return Err(Error::invalid(format!(
            "{} samples cannot be cut into {slices} equal slices",
            dataset.len()
        )));
    }
    let slice_len = dataset.len() / slices;
    let mut by_label: Vec<usize> = (0..dataset.len()).collect();
    by_label.sort_by_key(|&i| (dataset.samples[i].label, i));
    let mut slice_ids: Vec<usize> = (0..slices).collect();
    slice_ids.shuffle(rng);
    Ok(slice_ids
        .chunks(shards_per_client)
        .enumerate()
        .map(|(c, ids)| {
            let mut indices = Vec::with_capacity(slice_len * shards_per_client);
            for &s in ids {
                indices.extend_from_slice(&by_label[s * slice_len..(s + 1) * slice_len]);
            }
            Shard {
                owner_ue: c as UeId,
                indices,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    fn assert_partition(shards: &[Shard], len: usize) {
        let mut all: Vec<usize> = shards.iter().flat_map(|s| s.indices.iter().copied()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..len).collect::<Vec<_>>());
    }

    #[test]
    fn parses_images_big_endian() {
        let buf = idx_images(2, 1, 2, &[0, 255, 51, 102]);
        let imgs = parse_idx_images("t", &buf).unwrap();
        assert_eq!(imgs, vec![vec![0.0, 1.0], vec![0.2, 0.4]]);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut buf = idx_images(1, 1, 1, &[0]);
        buf[3] = 0x01;
        match parse_idx_images("imgs", &buf) {
            Err(IdxError::BadMagic { found, .. }) => assert_eq!(found, 0x0801),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_idx_labels("lbls", &idx_images(1, 1, 1, &[0])),
            Err(IdxError::BadMagic { .. })
        ));
    }

    #[test]
    fn truncation_names_field() {
        let buf = idx_images(3, 2, 2, &[0; 11]);
        match parse_idx_images("imgs", &buf) {
            Err(IdxError::Truncated { field, .. }) => assert_eq!(field, "pixels"),
            other => panic!("{other:?}"),
        }
        match parse_idx_images("imgs", &buf[..10]) {
            Err(IdxError::Truncated { field, .. }) => assert_eq!(field, "rows"),
            other => panic!("{other:?}"),
        }
        let mut lbl = idx_labels(&[1, 2, 3]);
        lbl.pop();
        assert!(matches!(
            parse_idx_labels("l", &lbl),
            Err(IdxError::Truncated { field: "labels", .. })
        ));
    }

    #[test]
    fn count_mismatch_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("images");
        let lp = dir.path().join("labels");
        std::fs::write(&ip, idx_images(10, 2, 2, &[7; 40])).unwrap();
        std::fs::write(&lp, idx_labels(&[1; 9])).unwrap();
        match load_mnist_idx(&ip, &lp) {
            Err(Error::Idx(IdxError::CountMismatch { images, labels })) => {
                assert_eq!((images, labels), (10, 9))
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&lp, idx_labels(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9])).unwrap();
        let ds = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.feature_dim(), 4);
        assert!(matches!(
            load_mnist_idx(&dir.path().join("missing"), &lp),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let a = synth_dataset(1000, 10, 784, &mut stream(7, Stream::Data)).unwrap();
        let b = synth_dataset(1000, 10, 784, &mut stream(7, Stream::Data)).unwrap();
        assert_eq!(a, b);
        assert!(a
            .samples
            .iter()
            .flat_map(|s| &s.features)
            .all(|&x| (0.0..=1.0).contains(&x)));

        let small = synth_dataset(10, 2, 4, &mut stream(3, Stream::Data)).unwrap();
        assert_eq!(small.len(), 10);
        assert!(small.samples.iter().all(|s| s.label < 2 && s.features.len() == 4));
        assert!(synth_dataset(0, 2, 4, &mut stream(3, Stream::Data)).is_err());
    }

    #[test]
    fn iid_sizes() {
        let mut rng = stream(1, Stream::Partition);
        let shards = partition_iid(60000, 100, &mut rng).unwrap();
        assert_eq!(shards.len(), 100);
        assert!(shards.iter().all(|s| s.indices.len() == 600));
        assert_partition(&shards, 60000);

        let shards = partition_iid(10, 3, &mut rng).unwrap();
        let sizes: Vec<_> = shards.iter().map(|s| s.indices.len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_partition(&shards, 10);
        assert!(partition_iid(10, 0, &mut rng).is_err());
        assert!(partition_iid(0, 3, &mut rng).is_err());
    }

    #[test]
    fn noniid_label_skew() {
        // 10-class balanced labels, 60000 samples, no features needed
        let samples = (0..60000)
            .map(|i| Sample {
                features: vec![],
                label: i % 10,
            })
            .collect();
        let ds = Dataset::new("labels-only", samples, 10).unwrap();
        let shards = partition_shards_noniid(&ds, 100, 2, &mut stream(5, Stream::Partition)).unwrap();
        assert_eq!(shards.len(), 100);
        assert_partition(&shards, 60000);
        for s in &shards {
            assert_eq!(s.indices.len(), 600);
            let distinct = ds.label_histogram(&s.indices).iter().filter(|&&c| c > 0).count();
            // two 300-sample slices of a label-sorted 6000-per-class set
            assert!(distinct <= 2, "client {} holds {distinct} labels", s.owner_ue);
        }
        let again = partition_shards_noniid(&ds, 100, 2, &mut stream(5, Stream::Partition)).unwrap();
        assert_eq!(shards, again);
        assert!(partition_shards_noniid(&ds, 7, 3, &mut stream(5, Stream::Partition)).is_err());
    }

    proptest! {
        #[test]
        fn iid_partition_properties(len in 1usize..500, clients in 1usize..40, seed in any::<u64>()) {
            let a = partition_iid(len, clients, &mut stream(seed, Stream::Partition)).unwrap();
            let b = partition_iid(len, clients, &mut stream(seed, Stream::Partition)).unwrap();
            prop_assert_eq!(&a, &b);
            assert_partition(&a, len);
            let max = a.iter().map(|s| s.indices.len()).max().unwrap();
            let min = a.iter().map(|s| s.indices.len()).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn noniid_partition_properties(clients in 1usize..12, k in 1usize..4, per in 1usize..6, seed in any::<u64>()) {
            let len = clients * k * per;
            let samples = (0..len).map(|i| Sample { features: vec![0.0], label: (i * 7) % 5 }).collect();
            let ds = Dataset::new("p", samples, 5).unwrap();
            let a = partition_shards_noniid(&ds, clients, k, &mut stream(seed, Stream::Partition)).unwrap();
            let b = partition_shards_noniid(&ds, clients, k, &mut stream(seed, Stream::Partition)).unwrap();
            prop_assert_eq!(&a, &b);
            assert_partition(&a, len);
        }
    }
}
