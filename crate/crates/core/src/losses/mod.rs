//! Training objectives with analytic gradients.
//!
//! A loss is evaluated row by row on [`PairScoreContext`]s (see
//! [`row_loss`]), averaged over the batch, and its score derivatives are
//! chained through the scoring function back to the embedding rows.
//!
//! For the half-cosine score every touched row is normalized once per batch.
//! Gradients are accumulated on the unit vectors and pulled back through the
//! normalization at the end, which keeps the cost linear in the number of
//! scored pairs.

mod config;
mod estimator;
mod row;

pub use config::{Activation, LossConfig, LossKind, SigmaForm};
pub use estimator::corrected_expectation_estimator;
pub use row::{log_phi, phi, row_loss, row_value, PairScoreContext, RowLoss};

use crate::backbones::{dot, norm, unnormalize_into, EmbeddingTable, Scoring};
use crate::error::{Entity, Error, Result};
use crate::grad::Gradients;
use crate::sampling::{PriorEstimate, TrainingBatch};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// One row per embedding that appears in the batch.
    pub grads: Gradients,
    /// Fraction of rows whose corrected log argument was floored.
    pub clamp_rate: f64,
}

/// Unit rows, computed on first use.
struct UnitCache<'a> {
    emb: &'a EmbeddingTable,
    unit: Vec<f64>,
    norms: Vec<f64>,
}

impl<'a> UnitCache<'a> {
    fn new(emb: &'a EmbeddingTable) -> Self {
        Self {
            emb,
            unit: vec![0.0; emb.as_slice().len()],
            norms: vec![-1.0; emb.num_nodes()],
        }
    }

    fn ensure(&mut self, node: usize) -> Result<()> {
        if self.norms[node] >= 0.0 {
            return Ok(());
        }
        let dim = self.emb.dim();
        let row = self.emb.row(node);
        let n = norm(row);
        if n == 0.0 || !n.is_finite() {
            let nu = self.emb.num_users();
            let (entity, id) = if node < nu {
                (Entity::User, node)
            } else {
                (Entity::Item, node - nu)
            };
            return Err(Error::ZeroNormVector { entity, id });
        }
        for (u, x) in self.unit[node * dim..(node + 1) * dim].iter_mut().zip(row) {
            *u = x / n;
        }
        self.norms[node] = n;
        Ok(())
    }

    fn get(&self, node: usize) -> &[f64] {
        let dim = self.emb.dim();
        &self.unit[node * dim..(node + 1) * dim]
    }
}

/// Batch loss for `cfg.kind`, averaged over rows.
///
/// `prior` is required by the corrected losses and ignored otherwise.
pub fn compute_loss(
    emb: &EmbeddingTable,
    batch: &TrainingBatch,
    cfg: &LossConfig,
    prior: Option<&PriorEstimate>,
) -> Result<LossOutput> {
    cfg.validate()?;
    let (nu, ni, dim) = (emb.num_users(), emb.num_items(), emb.dim());
    let prior = if cfg.kind.uses_correction() {
        Some(prior.ok_or_else(|| Error::Config(format!("{} requires a class prior", cfg.kind)))?)
    } else {
        None
    };
    let scoring = cfg.kind.scoring();
    let rows = batch.rows.len();
    // gradient on the unit vectors (cosine) or directly on the rows (dot)
    let mut acc = Gradients::new(nu, ni, dim);
    if rows == 0 {
        return Ok(LossOutput {
            value: 0.0,
            grads: acc,
            clamp_rate: 0.0,
        });
    }
    let mut cache = UnitCache::new(emb);
    let half = match scoring {
        Scoring::HalfCosine => 0.5,
        Scoring::Dot => 1.0,
    };

    let inv_rows = 1.0 / rows as f64;
    let mut total = 0.0;
    let mut clamped = 0usize;
    for r in &batch.rows {
        let un = r.user;
        let pn = nu + r.pos;
        if scoring == Scoring::HalfCosine {
            cache.ensure(un)?;
            cache.ensure(pn)?;
            for &j in r.negs.iter().chain(&r.extra_pos) {
                cache.ensure(nu + j)?;
            }
        }
        let eu = match scoring {
            Scoring::HalfCosine => cache.get(un).to_vec(),
            Scoring::Dot => emb.row(un).to_vec(),
        };
        let sc = |c: &UnitCache<'_>, node: usize| -> f64 {
            let v = match scoring {
                Scoring::HalfCosine => c.get(node),
                Scoring::Dot => c.emb.row(node),
            };
            half * dot(&eu, v)
        };
        let ctx = PairScoreContext {
            r_ui: sc(&cache, pn),
            r_uj: r.negs.iter().map(|&j| sc(&cache, nu + j)).collect(),
            r_uik: r.extra_pos.iter().map(|&k| sc(&cache, nu + k)).collect(),
        };
        let tau_plus = prior.map_or(0.0, |p| p.tau_plus(un));
        let out = row_loss(&ctx, cfg, tau_plus)?;
        total += out.value;
        clamped += out.clamped as usize;

        // dr/de_u = half * e_i and dr/de_i = half * e_u (on the unit vectors for cosine)
        let item_terms = std::iter::once((r.pos, out.grad_pos))
            .chain(r.negs.iter().copied().zip(out.grad_negs.iter().copied()))
            .chain(r.extra_pos.iter().copied().zip(out.grad_extra.iter().copied()));
        let mut gu = vec![0.0; dim];
        for (item, g) in item_terms {
            let node = nu + item;
            let coef = g * half * inv_rows;
            let ei = match scoring {
                Scoring::HalfCosine => cache.get(node),
                Scoring::Dot => emb.row(node),
            };
            for (a, x) in gu.iter_mut().zip(ei) {
                *a += coef * x;
            }
            acc.add_to_row(node, coef, &eu);
        }
        acc.add_to_row(un, 1.0, &gu);
    }

    let value = total * inv_rows;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let grads = match scoring {
        Scoring::Dot => acc,
        Scoring::HalfCosine => {
            let mut g = Gradients::new(nu, ni, dim);
            for node in acc.touched_nodes() {
                let dz = acc.row(node).expect("touched");
                unnormalize_into(g.row_mut(node), dz, cache.get(node), cache.norms[node]);
            }
            g
        }
    };
    Ok(LossOutput {
        value,
        grads,
        clamp_rate: clamped as f64 / rows as f64,
    })
}

fn with_kind(cfg: &LossConfig, kind: LossKind) -> LossConfig {
    LossConfig { kind, ..cfg.clone() }
}

/// BPR on dot-product scores; every row must carry exactly one negative.
pub fn loss_bpr(emb: &EmbeddingTable, batch: &TrainingBatch) -> Result<LossOutput> {
    compute_loss(emb, batch, &LossConfig::of_kind(LossKind::Bpr), None)
}

pub fn loss_sl(emb: &EmbeddingTable, batch: &TrainingBatch, cfg: &LossConfig) -> Result<LossOutput> {
    compute_loss(emb, batch, &with_kind(cfg, LossKind::Sl), None)
}

pub fn loss_bsl(emb: &EmbeddingTable, batch: &TrainingBatch, cfg: &LossConfig) -> Result<LossOutput> {
    compute_loss(emb, batch, &with_kind(cfg, LossKind::Bsl), None)
}

pub fn loss_psl(emb: &EmbeddingTable, batch: &TrainingBatch, cfg: &LossConfig) -> Result<LossOutput> {
    compute_loss(emb, batch, &with_kind(cfg, LossKind::Psl), None)
}

pub fn loss_weighted(emb: &EmbeddingTable, batch: &TrainingBatch, cfg: &LossConfig) -> Result<LossOutput> {
    compute_loss(emb, batch, &with_kind(cfg, LossKind::Weighted), None)
}

pub fn loss_corrected(
    emb: &EmbeddingTable,
    batch: &TrainingBatch,
    cfg: &LossConfig,
    prior: &PriorEstimate,
) -> Result<LossOutput> {
    compute_loss(emb, batch, &with_kind(cfg, LossKind::Corrected), Some(prior))
}

pub fn loss_cw(
    emb: &EmbeddingTable,
    batch: &TrainingBatch,
    cfg: &LossConfig,
    prior: &PriorEstimate,
) -> Result<LossOutput> {
    compute_loss(emb, batch, &with_kind(cfg, LossKind::Cw), Some(prior))
}
