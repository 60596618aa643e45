//! Training batches and the per-user positive prior.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::UserItemSet;
use crate::error::{Error, Result};

/// One anchor pair with its sampled negatives and extra positives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingRow {
    pub user: usize,
    pub pos: usize,
    /// Drawn uniformly from all items, so they may contain unlabeled positives.
    pub negs: Vec<usize>,
    /// Drawn uniformly from the user's train positives.
    pub extra_pos: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingBatch {
    pub rows: Vec<TrainingRow>,
    pub num_negatives: usize,
    pub num_extra: usize,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Stateful sampler owning its random stream.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
    num_negatives: usize,
    num_extra: usize,
}

impl Sampler {
    pub fn new(seed: u64, num_negatives: usize, num_extra: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            num_negatives,
            num_extra,
        }
    }

    /// Uses an already-seeded stream.
    pub fn from_rng(rng: ChaCha8Rng, num_negatives: usize, num_extra: usize) -> Self {
        Self {
            rng,
            num_negatives,
            num_extra,
        }
    }

    /// Completes the given anchors with negatives and extra positives.
    pub fn complete(&mut self, train: &UserItemSet, anchors: &[(usize, usize)]) -> TrainingBatch {
        let num_items = train.num_items();
        let rows = anchors
            .iter()
            .map(|&(user, pos)| {
                let negs = (0..self.num_negatives)
                    .map(|_| self.rng.gen_range(0..num_items))
                    .collect();
                let positives = train.positives(user);
                assert!(!positives.is_empty(), "user {user} has no train positives");
                let extra_pos = (0..self.num_extra)
                    .map(|_| positives[self.rng.gen_range(0..positives.len())])
                    .collect();
                TrainingRow {
                    user,
                    pos,
                    negs,
                    extra_pos,
                }
            })
            .collect();
        TrainingBatch {
            rows,
            num_negatives: self.num_negatives,
            num_extra: self.num_extra,
        }
    }

    /// `batch_size` anchors drawn uniformly (with replacement) from `pairs`.
    pub fn sample(&mut self, train: &UserItemSet, pairs: &[(usize, usize)], batch_size: usize) -> TrainingBatch {
        assert!(!pairs.is_empty(), "cannot sample from an empty train set");
        let anchors: Vec<_> = (0..batch_size)
            .map(|_| pairs[self.rng.gen_range(0..pairs.len())])
            .collect();
        self.complete(train, &anchors)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// A batch of `batch_size` rows, each with `num_negatives` negatives and
/// `num_extra` extra positives; deterministic per seed.
pub fn sample_batch(
    train: &UserItemSet,
    batch_size: usize,
    num_negatives: usize,
    num_extra: usize,
    seed: u64,
) -> TrainingBatch {
    let pairs: Vec<_> = train.pairs().collect();
    Sampler::new(seed, num_negatives, num_extra).sample(train, &pairs, batch_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    #[default]
    Constant,
    /// `|I_u| / |I|`.
    PerUserRate,
    /// Share of total train popularity held by the user's positives.
    Popularity,
}

impl FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(PriorMode::Constant),
            "per_user_rate" => Ok(PriorMode::PerUserRate),
            "popularity" | "pop" | "pop." => Ok(PriorMode::Popularity),
            other => Err(Error::Config(format!("unknown prior mode `{other}`"))),
        }
    }
}

impl fmt::Display for PriorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorMode::Constant => "constant",
            PriorMode::PerUserRate => "per_user_rate",
            PriorMode::Popularity => "popularity",
        })
    }
}

/// Per-user class prior τ⁺ (and τ⁻ = 1 − τ⁺).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorEstimate {
    pub mode: PriorMode,
    tau_plus: Vec<f64>,
}

/// Data-driven estimates are capped here so τ⁻ stays positive.
pub const MAX_TAU_PLUS: f64 = 1.0 - 1e-6;

impl PriorEstimate {
    /// The same τ⁺ for `num_users` users.
    pub fn constant(num_users: usize, tau_plus: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&tau_plus) {
            return Err(Error::InvalidConstant(tau_plus));
        }
        Ok(Self {
            mode: PriorMode::Constant,
            tau_plus: vec![tau_plus; num_users],
        })
    }

    pub fn tau_plus(&self, u: usize) -> f64 {
        self.tau_plus[u]
    }

    pub fn tau_minus(&self, u: usize) -> f64 {
        1.0 - self.tau_plus[u]
    }

    pub fn values(&self) -> &[f64] {
        &self.tau_plus
    }
}

pub fn estimate_prior(train: &UserItemSet, mode: PriorMode, constant: Option<f64>) -> Result<PriorEstimate> {
    let num_items = train.num_items() as f64;
    let tau_plus: Vec<f64> = match mode {
        PriorMode::Constant => {
            return PriorEstimate::constant(train.num_users(), constant.unwrap_or(f64::NAN));
        }
        PriorMode::PerUserRate => train.user_degrees().into_iter().map(|d| d as f64 / num_items).collect(),
        PriorMode::Popularity => {
            let pop = train.item_degrees();
            let total: usize = pop.iter().sum();
            (0..train.num_users())
                .map(|u| {
                    let mass: usize = train.positives(u).iter().map(|&i| pop[i]).sum();
                    if total == 0 {
                        0.0
                    } else {
                        mass as f64 / total as f64
                    }
                })
                .collect()
        }
    };
    Ok(PriorEstimate {
        mode,
        tau_plus: tau_plus.into_iter().map(|t| t.min(MAX_TAU_PLUS)).collect(),
    })
}
