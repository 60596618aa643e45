//! Deterministic synthetic interaction data for tests and smoke runs.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{InteractionDataset, RawInteraction, SplitDataset, UserItemSet};
use crate::error::{Error, Result};

/// The bundled toy log: 20 users × 10 items each, 200 interactions.
///
/// User `u` interacts with items `u, u+1, …, u+9 (mod 20)`, so every user and
/// item has degree 10 and the set survives a 10-core filter untouched.
/// Ratings cycle through 3, 4, 5.
pub fn toy_interactions() -> Vec<RawInteraction> {
    let mut out = Vec::with_capacity(200);
    for u in 0..20 {
        for k in 0..10 {
            let i = (u + k) % 20;
            out.push(RawInteraction {
                user_key: format!("u{u}"),
                item_key: format!("i{i}"),
                rating: Some(3.0 + ((u + i) % 3) as f64),
                timestamp: Some(1_000_000 + (u * 10 + k) as i64),
            });
        }
    }
    out
}

/// Writes interactions as headerless TSV: user, item[, rating[, timestamp]].
pub fn write_tsv(raw: &[RawInteraction], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in raw {
        let mut line = format!("{}\t{}", r.user_key, r.item_key);
        if let Some(rating) = r.rating {
            line.push_str(&format!("\t{rating}"));
            if let Some(ts) = r.timestamp {
                line.push_str(&format!("\t{ts}"));
            }
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Uniformly random pairs: each of `num_users` users draws between
/// `min_items` and `max_items` distinct items.
pub fn random_dataset(
    num_users: usize,
    num_items: usize,
    min_items: usize,
    max_items: usize,
    seed: u64,
) -> InteractionDataset {
    assert!(1 <= min_items && min_items <= max_items && max_items <= num_items);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..num_items).collect();
    let mut user_items = Vec::with_capacity(num_users);
    for _ in 0..num_users {
        let n = rng.gen_range(min_items..=max_items);
        all.shuffle(&mut rng);
        user_items.push(all[..n].to_vec());
    }
    let set = UserItemSet::from_user_items(num_items, user_items);
    // drop items nobody picked so every id appears in a pair
    let degrees = set.item_degrees();
    let mut remap = vec![usize::MAX; num_items];
    let mut next = 0;
    for (i, &d) in degrees.iter().enumerate() {
        if d > 0 {
            remap[i] = next;
            next += 1;
        }
    }
    let pairs: Vec<_> = set.pairs().map(|(u, i)| (u, remap[i])).collect();
    InteractionDataset::from_set(UserItemSet::from_pairs(num_users, next, pairs))
}

/// Two-block data with cross-block noise.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub blocks: usize,
    /// Noise edges added to train, as a fraction of the clean edges.
    pub noise_frac: f64,
    /// Share of each user's clean edges held out for validation.
    pub val_frac: f64,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            num_users: 60,
            num_items: 40,
            blocks: 2,
            noise_frac: 0.1,
            val_frac: 0.2,
        }
    }
}

/// Block of user `u` (or item `i`) when `n` ids are cut into `blocks` runs.
fn block_of(id: usize, n: usize, blocks: usize) -> usize {
    id * blocks / n
}

/// Every user likes every item of its block. Validation holds out clean
/// in-block edges; noise edges to other blocks appear only in train. The
/// test view is empty.
pub fn block_split(spec: &BlockSpec, seed: u64) -> SplitDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nu, ni, b) = (spec.num_users, spec.num_items, spec.blocks);
    let mut train = vec![Vec::new(); nu];
    let mut val = vec![Vec::new(); nu];
    let mut clean = 0;
    for u in 0..nu {
        let mut items: Vec<usize> = (0..ni).filter(|&i| block_of(i, ni, b) == block_of(u, nu, b)).collect();
        clean += items.len();
        items.shuffle(&mut rng);
        let n_val = ((spec.val_frac * items.len() as f64).round() as usize).min(items.len() - 1);
        val[u] = items[..n_val].to_vec();
        train[u] = items[n_val..].to_vec();
    }
    let noise = (spec.noise_frac * clean as f64).round() as usize;
    let mut added = 0;
    while added < noise {
        let u = rng.gen_range(0..nu);
        let i = rng.gen_range(0..ni);
        if block_of(i, ni, b) != block_of(u, nu, b) && !train[u].contains(&i) {
            train[u].push(i);
            added += 1;
        }
    }
    SplitDataset {
        train: UserItemSet::from_user_items(ni, train),
        validation: UserItemSet::from_user_items(ni, val),
        test: UserItemSet::from_user_items(ni, vec![Vec::new(); nu]),
        seed,
    }
}

/// Low-rank preferences with a share of true positives hidden from training.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub num_users: usize,
    pub num_items: usize,
    /// Rank of the hidden preference model.
    pub latent_dim: usize,
    /// True positives per user: the top items under the hidden scores.
    pub likes_per_user: usize,
    /// Share of each user's true positives hidden from training (the test set).
    pub hidden_frac: f64,
    /// Share of the visible positives held out for validation.
    pub val_frac: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            num_users: 300,
            num_items: 200,
            latent_dim: 4,
            likes_per_user: 20,
            hidden_frac: 0.2,
            val_frac: 0.1,
        }
    }
}

/// Samples Gaussian user and item factors and lets each user like its
/// top-scoring items. The hidden positives are unlabeled during training, so
/// they are drawn as negatives, and they form the test ground truth.
pub fn planted_false_negatives(spec: &PlantedSpec, seed: u64) -> SplitDataset {
    assert!(spec.likes_per_user >= 3 && spec.likes_per_user <= spec.num_items);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nu, ni, k) = (spec.num_users, spec.num_items, spec.latent_dim);
    let mut factors = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..k).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    };
    let users = factors(nu);
    let items = factors(ni);
    let mut train = vec![Vec::new(); nu];
    let mut val = vec![Vec::new(); nu];
    let mut test = vec![Vec::new(); nu];
    for u in 0..nu {
        let scores: Vec<f64> = items
            .iter()
            .map(|y| y.iter().zip(&users[u]).map(|(a, b)| a * b).sum())
            .collect();
        let mut liked: Vec<usize> = (0..ni).collect();
        liked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        liked.truncate(spec.likes_per_user);
        liked.shuffle(&mut rng);
        let n = liked.len();
        let n_test = ((spec.hidden_frac * n as f64).round() as usize).clamp(1, n - 1);
        let rest = n - n_test;
        let n_val = ((spec.val_frac * rest as f64).round() as usize).min(rest - 1);
        test[u] = liked[..n_test].to_vec();
        val[u] = liked[n_test..n_test + n_val].to_vec();
        train[u] = liked[n_test + n_val..].to_vec();
    }
    SplitDataset {
        train: UserItemSet::from_user_items(ni, train),
        validation: UserItemSet::from_user_items(ni, val),
        test: UserItemSet::from_user_items(ni, test),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{index_dataset, k_core_filter};

    #[test]
    fn toy_is_a_ten_core() {
        let raw = toy_interactions();
        assert_eq!(raw.len(), 200);
        let kept = k_core_filter(raw.clone(), 10).unwrap();
        assert_eq!(kept.len(), 200);
        let ds = index_dataset(&kept).unwrap();
        assert_eq!((ds.num_users(), ds.num_items()), (20, 20));
    }

    #[test]
    fn block_split_shape() {
        let s = block_split(&BlockSpec::default(), 3);
        assert_eq!(s.validation.len(), 60 * 4);
        assert_eq!(s.train.len(), 60 * 16 + 120);
        for (u, i) in s.validation.pairs() {
            assert_eq!(block_of(u, 60, 2), block_of(i, 40, 2));
            assert!(!s.train.contains(u, i));
        }
    }

    #[test]
    fn planted_split_is_disjoint() {
        let s = planted_false_negatives(&PlantedSpec::default(), 1);
        for (u, i) in s.test.pairs() {
            assert!(!s.train.contains(u, i) && !s.validation.contains(u, i));
        }
        assert!((0..s.num_users()).all(|u| !s.train.positives(u).is_empty() && !s.test.positives(u).is_empty()));
    }

    #[test]
    fn random_dataset_ids_are_dense() {
        let ds = random_dataset(50, 30, 2, 8, 4);
        assert_eq!(ds.num_users(), 50);
        assert!(ds.interactions.item_degrees().iter().all(|&d| d > 0));
    }
}
