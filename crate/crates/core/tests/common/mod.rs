//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use cwrec::backbones::{init_embeddings, EmbeddingTable};
use cwrec::losses::{compute_loss, LossConfig};
use cwrec::sampling::{PriorEstimate, TrainingBatch, TrainingRow};

/// One user, `1 + n + m` items: item 0 is the anchor, then the negatives,
/// then the extra positives.
pub fn single_row_batch(n: usize, m: usize) -> TrainingBatch {
    TrainingBatch {
        rows: vec![TrainingRow {
            user: 0,
            pos: 0,
            negs: (1..=n).collect(),
            extra_pos: (n + 1..=n + m).collect(),
        }],
        num_negatives: n,
        num_extra: m,
    }
}

/// Largest violation of the finite-difference check over every touched
/// coordinate: `|analytic - numeric| / max(|analytic|, |numeric|)`, with
/// pairs closer than `abs_floor` counted as exact.
pub fn fd_max_rel_error(
    emb: &EmbeddingTable,
    batch: &TrainingBatch,
    cfg: &LossConfig,
    prior: &PriorEstimate,
    h: f64,
    abs_floor: f64,
) -> f64 {
    let out = compute_loss(emb, batch, cfg, Some(prior)).unwrap();
    let dim = emb.dim();
    let mut worst: f64 = 0.0;
    for node in 0..emb.num_nodes() {
        for k in 0..dim {
            let analytic = out.grads.row(node).map_or(0.0, |g| g[k]);
            let mut plus = emb.clone();
            plus.as_mut_slice()[node * dim + k] += h;
            let mut minus = emb.clone();
            minus.as_mut_slice()[node * dim + k] -= h;
            let fp = compute_loss(&plus, batch, cfg, Some(prior)).unwrap().value;
            let fm = compute_loss(&minus, batch, cfg, Some(prior)).unwrap().value;
            let numeric = (fp - fm) / (2.0 * h);
            let diff = (analytic - numeric).abs();
            if diff < abs_floor {
                continue;
            }
            worst = worst.max(diff / analytic.abs().max(numeric.abs()));
        }
    }
    worst
}

/// A random single-row context with `d = 8`, `N = 6`, `M = 3`.
pub fn random_context(seed: u64) -> (EmbeddingTable, TrainingBatch) {
    (init_embeddings(1, 10, 8, seed, 1.0), single_row_batch(6, 3))
}
