//! Sparse Adam with decoupled weight decay, and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbones::{xsimgcl_contrast_loss, BackboneConfig, BackboneKind, EmbeddingTable, Model};
use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, RankingReport};
use crate::grad::Gradients;
use crate::losses::{compute_loss, LossConfig, LossKind};
use crate::sampling::{PriorEstimate, Sampler};

/// Adam moments over an embedding table.
///
/// Moments are only updated on rows that receive a gradient; the step
/// counter and bias correction are global.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub wd: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64, wd: f64) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            lr,
            wd,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_table(table: &EmbeddingTable, lr: f64, wd: f64) -> Self {
        Self::new(table.as_slice().len(), lr, wd)
    }
}

/// One Adam step on the rows touched by `grads`.
///
/// Touched rows are first decayed as `p ← p (1 − lr·wd)`, then moved by the
/// bias-corrected Adam delta. Untouched rows and their moments are left
/// bit-identical. Nothing is modified if any gradient is non-finite.
pub fn adam_step(state: &mut AdamState, params: &mut EmbeddingTable, grads: &Gradients) -> Result<()> {
    let dim = params.dim();
    if state.m.len() != params.as_slice().len() || grads.num_rows() != params.num_nodes() || grads.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: params.as_slice().len(),
            actual: state.m.len(),
        });
    }
    for (entity, id, g) in grads.iter() {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { entity, id });
        }
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powf(state.t as f64);
    let bc2 = 1.0 - state.beta2.powf(state.t as f64);
    let decay = 1.0 - state.lr * state.wd;
    let data = params.as_mut_slice();
    for node in grads.touched_nodes() {
        let g = grads.row(node).expect("touched");
        let span = node * dim..(node + 1) * dim;
        let (p, m, v) = (&mut data[span.clone()], &mut state.m[span.clone()], &mut state.v[span]);
        for k in 0..dim {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            p[k] = p[k] * decay - state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    /// Validate every this many epochs; 0 disables validation.
    pub eval_every: usize,
    /// Stop after this many validations without improvement.
    pub early_stop_patience: Option<usize>,
    /// Cutoff used for model selection.
    pub eval_k: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 1024,
            eval_every: 1,
            early_stop_patience: None,
            eval_k: 20,
        }
    }
}

/// Everything `train` needs besides data, prior and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub backbone: BackboneConfig,
    pub loss: LossConfig,
    /// Negatives per row (N); BPR always uses one.
    pub num_negatives: usize,
    /// Extra positives per row (M).
    pub num_extra: usize,
    pub lr: f64,
    pub wd: f64,
    pub schedule: TrainSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::mf(),
            loss: LossConfig::default(),
            num_negatives: 1000,
            num_extra: 4,
            lr: 1e-3,
            wd: 0.0,
            schedule: TrainSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn effective_negatives(&self) -> usize {
        if self.loss.kind == LossKind::Bpr {
            1
        } else {
            self.num_negatives
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.loss.validate()?;
        if self.schedule.batch_size == 0 {
            return Err(Error::Config("schedule.batch_size must be >= 1".into()));
        }
        if self.effective_negatives() == 0 {
            return Err(Error::Config("sampler.N must be >= 1".into()));
        }
        if self.loss.kind.uses_correction() && self.num_extra == 0 {
            return Err(Error::Config("sampler.M must be >= 1 for corrected losses".into()));
        }
        if !(self.lr > 0.0) || !(self.wd >= 0.0) {
            return Err(Error::Config("optim.lr must be > 0 and optim.wd >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub clamp_rate: f64,
    pub val_recall: Option<f64>,
    pub val_ndcg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model with the best validation NDCG (the last one if never validated).
    pub model: Model,
    pub log: Vec<EpochRecord>,
    /// 0 means the initial model.
    pub best_epoch: usize,
    pub best_val_ndcg: Option<f64>,
}

/// Writes the per-epoch log as CSV.
pub fn write_epoch_log<W: std::io::Write>(w: W, log: &[EpochRecord], k: usize) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "epoch".to_string(),
        "train_loss".to_string(),
        "clamp_rate".to_string(),
        format!("val_recall@{k}"),
        format!("val_ndcg@{k}"),
    ])?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for r in log {
        out.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.clamp_rate.to_string(),
            opt(r.val_recall),
            opt(r.val_ndcg),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<epoch log>", e))?;
    Ok(())
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Validation report of `model` (train pairs masked).
pub fn validate_model(model: &Model, split: &SplitDataset, k: usize) -> Result<RankingReport> {
    evaluate(&model.snapshot()?, &split.validation, &split.train, k)
}

/// Epoch-based training.
///
/// Every epoch visits a fresh shuffle of all train pairs in `batch_size`
/// chunks; each anchor gets freshly sampled negatives and extra positives.
/// The returned model is the one with the best validation NDCG@K.
pub fn train(split: &SplitDataset, cfg: &TrainConfig, prior: &PriorEstimate, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_set = &split.train;
    if train_set.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut model = Model::initialize(cfg.backbone.clone(), cfg.loss.kind.scoring(), train_set, seed)?;
    let mut adam = AdamState::for_table(&model.base, cfg.lr, cfg.wd);
    let mut sampler = Sampler::from_rng(stream(seed, 1), cfg.effective_negatives(), cfg.num_extra);
    let mut shuffle_rng = stream(seed, 2);
    let mut noise_rng = stream(seed, 3);
    let mut pairs: Vec<(usize, usize)> = train_set.pairs().collect();

    let sched = &cfg.schedule;
    let validating = sched.eval_every > 0 && !split.validation.is_empty();
    let mut best_base = model.base.clone();
    let mut best_epoch = 0;
    let mut best_ndcg: Option<f64> = None;
    let mut stale = 0;
    let mut log = Vec::with_capacity(sched.epochs);

    for epoch in 1..=sched.epochs {
        pairs.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut clamp_sum = 0.0;
        for chunk in pairs.chunks(sched.batch_size) {
            let batch = sampler.complete(train_set, chunk);
            let fwd = model.forward(&mut noise_rng)?;
            let out = compute_loss(&fwd.final_emb, &batch, &cfg.loss, Some(prior))?;
            let mut grad_final = out.grads;
            let mut grad_layer: Option<Gradients> = None;
            let mut value = out.value;
            if cfg.backbone.kind == BackboneKind::XSimGCL && cfg.backbone.contrast_weight > 0.0 {
                let nu = train_set.num_users();
                let mut users: Vec<usize> = batch.rows.iter().map(|r| r.user).collect();
                let mut items: Vec<usize> = batch.rows.iter().map(|r| nu + r.pos).collect();
                users.sort_unstable();
                users.dedup();
                items.sort_unstable();
                items.dedup();
                let mut layer = Gradients::new(nu, train_set.num_items(), cfg.backbone.dim);
                for nodes in [&users, &items] {
                    let c = xsimgcl_contrast_loss(
                        &fwd.per_layer,
                        &fwd.final_emb,
                        nodes,
                        cfg.backbone.contrast_layer,
                        cfg.backbone.contrast_temp,
                        cfg.backbone.contrast_weight,
                    )?;
                    value += c.loss;
                    grad_final.accumulate(&c.grad_final, 1.0);
                    layer.accumulate(&c.grad_layer, 1.0);
                }
                grad_layer = Some(layer);
            }
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            let grads = model.backward(
                &grad_final,
                grad_layer.as_ref().map(|g| (cfg.backbone.contrast_layer, g)),
            )?;
            adam_step(&mut adam, &mut model.base, &grads)?;
            let w = chunk.len() as f64;
            loss_sum += value * w;
            clamp_sum += out.clamp_rate * w;
        }
        let n = pairs.len() as f64;
        let mut rec = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            clamp_rate: clamp_sum / n,
            val_recall: None,
            val_ndcg: None,
        };
        let mut stop = false;
        if validating && (epoch % sched.eval_every == 0 || epoch == sched.epochs) {
            let report = validate_model(&model, split, sched.eval_k)?;
            rec.val_recall = Some(report.mean_recall);
            rec.val_ndcg = Some(report.mean_ndcg);
            if best_ndcg.is_none_or(|b| report.mean_ndcg > b) {
                best_ndcg = Some(report.mean_ndcg);
                best_base = model.base.clone();
                best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                stop = sched.early_stop_patience.is_some_and(|p| stale >= p);
            }
        }
        log.push(rec);
        if stop {
            break;
        }
    }

    if validating && best_ndcg.is_some() {
        model.base = best_base;
    } else {
        best_epoch = log.len();
    }
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_val_ndcg: best_ndcg,
    })
}
