//! Datasets, non-i.i.d. partitioning and minibatch sampling.

pub mod idx;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::rng::{Purpose, Rng, RngStream};

/// A labelled sample collection where every class in `[0, C)` occurs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Batch,
    num_classes: usize,
}

impl Dataset {
    pub fn new(samples: Batch, num_classes: usize) -> Result<Self> {
        let mut seen = vec![false; num_classes];
        for &label in samples.labels() {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { label, num_classes });
            }
            seen[label] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::MissingClass(missing));
        }
        Ok(Self {
            samples,
            num_classes,
        })
    }

    pub fn samples(&self) -> &Batch {
        &self.samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.samples.input_dim()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Row indices of each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.samples.labels().iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }

    /// Moves the last `per_class` samples of every class into a held-out set.
    pub fn split_holdout(&self, per_class: usize) -> Result<(Dataset, Dataset)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for rows in self.class_indices() {
            if rows.len() <= per_class {
                return Err(Error::Partition(format!(
                    "cannot hold out {per_class} samples from a class of {}",
                    rows.len()
                )));
            }
            let cut = rows.len() - per_class;
            train.extend_from_slice(&rows[..cut]);
            test.extend_from_slice(&rows[cut..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((
            Dataset::new(self.samples.select(&train)?, self.num_classes)?,
            Dataset::new(self.samples.select(&test)?, self.num_classes)?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    pub class_sep: f64,
    pub noise_sigma: f64,
}

/// Isotropic Gaussian blobs whose means lie on a sphere of radius
/// `class_sep`. Samples are stored class by class.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    if spec.num_classes < 2 || spec.samples_per_class == 0 || spec.input_dim == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = RngStream::new(seed, 0, 0, Purpose::Data).rng();
    let d = spec.input_dim;
    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm * spec.class_sep).collect()
        })
        .collect();

    let n = spec.num_classes * spec.samples_per_class;
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(m + spec.noise_sigma * z);
            }
            labels.push(class);
        }
    }
    Dataset::new(Batch::new(features, labels, d)?, spec.num_classes)
}

/// One device's private training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub device_id: usize,
    pub samples: Batch,
    pub class_set: BTreeSet<usize>,
    /// Row indices into the partitioned dataset.
    pub source_rows: Vec<usize>,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionSpec {
    pub num_devices: usize,
    pub classes_per_device: usize,
    pub seed: u64,
}

/// Splits the dataset into `N` disjoint shards holding exactly `P` classes each.
///
/// Each class is cut into `N*P/C` contiguous chunks (the remainder of an
/// uneven class goes to its last chunk). Chunks are listed class-major and
/// chunk `j` is dealt to device `perm[j mod N]` for a seeded permutation
/// `perm`. Since `N*P/C <= N` whenever `P <= C`, two chunks landing on the same
/// device are at least `N` positions apart and therefore of different classes.
pub fn partition_noniid(dataset: &Dataset, spec: &PartitionSpec) -> Result<Vec<Shard>> {
    let (n, p, c) = (spec.num_devices, spec.classes_per_device, dataset.num_classes());
    if n == 0 || p == 0 {
        return Err(Error::Partition("device count and P must be positive".into()));
    }
    if p > c {
        return Err(Error::Partition(format!("P = {p} exceeds class count {c}")));
    }
    if (n * p) % c != 0 {
        return Err(Error::Partition(format!(
            "N*P = {} is not divisible by C = {c}",
            n * p
        )));
    }
    let chunks_per_class = n * p / c;
    let by_class = dataset.class_indices();
    if let Some((class, rows)) = by_class
        .iter()
        .enumerate()
        .find(|(_, rows)| rows.len() < chunks_per_class)
    {
        return Err(Error::Partition(format!(
            "class {class} has {} samples, fewer than {chunks_per_class} chunks",
            rows.len()
        )));
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut RngStream::new(spec.seed, 0, 0, Purpose::Partition).rng());

    let mut rows_of = vec![Vec::new(); n];
    let mut classes_of = vec![BTreeSet::new(); n];
    for (class, rows) in by_class.iter().enumerate() {
        let size = rows.len() / chunks_per_class;
        for k in 0..chunks_per_class {
            let start = k * size;
            let end = if k + 1 == chunks_per_class {
                rows.len()
            } else {
                start + size
            };
            let device = perm[(class * chunks_per_class + k) % n];
            rows_of[device].extend_from_slice(&rows[start..end]);
            classes_of[device].insert(class);
        }
    }

    rows_of
        .into_iter()
        .zip(classes_of)
        .enumerate()
        .map(|(device_id, (rows, class_set))| {
            Ok(Shard {
                device_id,
                samples: dataset.samples().select(&rows)?,
                class_set,
                source_rows: rows,
            })
        })
        .collect()
}

/// Minibatch stream over a shard: shuffled passes, sampled without
/// replacement within a pass. The last batch of a pass may be short.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(rng: Rng) -> Self {
        Self {
            rng,
            order: Vec::new(),
            cursor: 0,
        }
    }

    /// Row indices of the next batch.
    pub fn next_rows(&mut self, shard_len: usize, batch_size: usize) -> Result<Vec<usize>> {
        if shard_len == 0 {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 {
            return Err(Error::Partition("batch size must be at least 1".into()));
        }
        if self.order.len() != shard_len || self.cursor >= self.order.len() {
            self.order = (0..shard_len).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + batch_size).min(self.order.len());
        let rows = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Ok(rows)
    }

    pub fn next_batch(&mut self, shard: &Shard, batch_size: usize) -> Result<Batch> {
        if shard.is_empty() {
            return Err(Error::EmptyShard(shard.device_id));
        }
        let rows = self.next_rows(shard.len(), batch_size)?;
        shard.samples.select(&rows)
    }

    pub fn random_u64(&mut self) -> u64 {
        self.rng.random()
    }
}

/// Value-style wrapper around [`BatchSampler::next_batch`].
pub fn sample_batch(
    shard: &Shard,
    batch_size: usize,
    mut state: BatchSampler,
) -> Result<(Batch, BatchSampler)> {
    let batch = state.next_batch(shard, batch_size)?;
    Ok((batch, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn blobs(c: usize, per_class: usize) -> Dataset {
        synth_dataset(
            &SynthSpec {
                num_classes: c,
                input_dim: 3,
                samples_per_class: per_class,
                class_sep: 4.0,
                noise_sigma: 1.0,
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn synth_is_deterministic() {
        assert_eq!(blobs(4, 10), blobs(4, 10));
    }

    #[test]
    fn zero_noise_collapses_to_means() {
        let spec = SynthSpec {
            num_classes: 3,
            input_dim: 4,
            samples_per_class: 5,
            class_sep: 2.0,
            noise_sigma: 0.0,
        };
        let ds = synth_dataset(&spec, 1).unwrap();
        for rows in ds.class_indices() {
            let first = ds.samples().row(rows[0]).to_vec();
            let radius = first.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((radius - 2.0).abs() < 1e-12);
            for r in rows {
                assert_eq!(ds.samples().row(r), first.as_slice());
            }
        }
    }

    #[test]
    fn dataset_rejects_missing_class() {
        let b = Batch::new(vec![0.0, 1.0], vec![0, 2], 1).unwrap();
        assert!(matches!(Dataset::new(b, 3), Err(Error::MissingClass(1))));
    }

    #[test]
    fn holdout_split_is_per_class() {
        let ds = blobs(3, 10);
        let (train, test) = ds.split_holdout(4).unwrap();
        assert_eq!(train.len(), 18);
        assert_eq!(test.len(), 12);
        assert!(test.class_indices().iter().all(|r| r.len() == 4));
    }

    #[test]
    fn one_chunk_per_class_when_n_p_equals_c() {
        let ds = blobs(10, 20);
        let shards = partition_noniid(
            &ds,
            &PartitionSpec {
                num_devices: 5,
                classes_per_device: 2,
                seed: 1,
            },
        )
        .unwrap();
        let mut owners = vec![0; 10];
        for s in &shards {
            assert_eq!(s.class_set.len(), 2);
            for &c in &s.class_set {
                owners[c] += 1;
            }
        }
        assert_eq!(owners, vec![1; 10]);
    }

    #[test]
    fn fifty_devices_two_classes_each() {
        let ds = blobs(10, 100);
        let shards = partition_noniid(
            &ds,
            &PartitionSpec {
                num_devices: 50,
                classes_per_device: 2,
                seed: 9,
            },
        )
        .unwrap();
        assert_eq!(shards.len(), 50);
        for s in &shards {
            assert_eq!(s.class_set.len(), 2);
            // 100 samples per class in 10 chunks of 10
            assert_eq!(s.len(), 20);
            let labels: BTreeSet<usize> = s.samples.labels().iter().copied().collect();
            assert_eq!(labels, s.class_set);
        }
        let total: usize = shards.iter().map(Shard::len).sum();
        assert_eq!(total, ds.len());
    }

    #[test]
    fn remainder_goes_to_last_chunk() {
        // 3 classes of 7 samples, 3 devices x 2 classes -> 2 chunks per class of 3 and 4
        let spec = SynthSpec {
            num_classes: 3,
            input_dim: 2,
            samples_per_class: 7,
            class_sep: 1.0,
            noise_sigma: 0.1,
        };
        let ds = synth_dataset(&spec, 0).unwrap();
        let shards = partition_noniid(
            &ds,
            &PartitionSpec {
                num_devices: 3,
                classes_per_device: 2,
                seed: 0,
            },
        )
        .unwrap();
        let total: usize = shards.iter().map(Shard::len).sum();
        assert_eq!(total, 21);
        let mut sizes: Vec<usize> = shards.iter().map(Shard::len).collect();
        sizes.sort();
        assert!(sizes.iter().all(|&s| (6..=8).contains(&s)));
    }

    #[test]
    fn indivisible_partition_is_rejected() {
        let ds = blobs(10, 10);
        let err = partition_noniid(
            &ds,
            &PartitionSpec {
                num_devices: 7,
                classes_per_device: 2,
                seed: 0,
            },
        );
        assert!(matches!(err, Err(Error::Partition(_))));
    }

    fn shard_of(n: usize) -> Shard {
        let b = Batch::new((0..n).map(|i| i as f64).collect(), vec![0; n], 1).unwrap();
        Shard {
            device_id: 0,
            samples: b,
            class_set: [0].into(),
            source_rows: (0..n).collect(),
        }
    }

    #[test]
    fn full_batch_is_a_permutation() {
        let shard = shard_of(9);
        let (b, _) = sample_batch(&shard, 9, BatchSampler::new(Rng::seed_from_u64(1))).unwrap();
        let mut seen: Vec<f64> = b.features().to_vec();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..9).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn pass_is_disjoint_and_complete() {
        let mut sampler = BatchSampler::new(Rng::seed_from_u64(4));
        let mut seen = Vec::new();
        while seen.len() < 23 {
            seen.extend(sampler.next_rows(23, 5).unwrap());
        }
        assert_eq!(seen.len(), 23);
        seen.sort();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
        // next pass starts over
        assert_eq!(sampler.next_rows(23, 5).unwrap().len(), 5);
    }

    #[test]
    fn same_state_same_batch() {
        let shard = shard_of(30);
        let state = BatchSampler::new(Rng::seed_from_u64(2));
        let (a, _) = sample_batch(&shard, 4, state.clone()).unwrap();
        let (b, _) = sample_batch(&shard, 4, state).unwrap();
        assert_eq!(a, b);
    }
}
