use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;

/// Permutation of `0..n` drawn with a seeded Fisher–Yates shuffle.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Number of held-out rows: `⌊fraction · n⌋`, so the train side gets `⌈(1 − fraction) · n⌉`.
pub(crate) fn held_out_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Train/test indices of split `split_index`, permuted with seed `base_seed + split_index`.
pub fn split_indices(n: usize, split_index: usize, base_seed: u64, test_fraction: f64) -> SplitIndices {
    let perm = seeded_permutation(n, base_seed.wrapping_add(split_index as u64));
    let n_train = n - held_out_count(n, test_fraction);
    let (train, test) = perm.split_at(n_train);
    SplitIndices {
        train: train.to_vec(),
        test: test.to_vec(),
    }
}

pub fn split_dataset(dataset: &Dataset, split_index: usize, base_seed: u64, test_fraction: f64) -> (Dataset, Dataset) {
    let idx = split_indices(dataset.len(), split_index, base_seed, test_fraction);
    (dataset.subset(&idx.train), dataset.subset(&idx.test))
}
