//! Flat `key = value` experiment configuration.
//!
//! Lines are `dotted.key = value`; blank lines and lines starting with `#`
//! are ignored. Every key has a default, so an empty file is valid apart
//! from `data.path`. Optional values are written as `auto`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::backbones::{BackboneConfig, BackboneKind, CheckpointMode};
use crate::data::Format;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::optim::{TrainConfig, TrainSchedule};
use crate::sampling::PriorMode;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_path: Option<PathBuf>,
    pub data_format: Format,
    pub k_core: usize,
    pub min_rating: f64,
    pub split_seed: u64,
    pub test_frac: f64,
    pub val_frac: f64,
    pub backbone: BackboneConfig,
    pub loss: LossConfig,
    pub num_negatives: usize,
    pub num_extra: usize,
    pub prior_mode: PriorMode,
    pub prior_constant: f64,
    pub lr: f64,
    pub wd: f64,
    pub schedule: TrainSchedule,
    pub train_seed: u64,
    pub eval_k: usize,
    pub output_dir: PathBuf,
    pub checkpoint_format: CheckpointMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_path: None,
            data_format: Format::Tsv,
            k_core: 10,
            min_rating: 3.0,
            split_seed: 0,
            test_frac: 0.2,
            val_frac: 0.1,
            backbone: BackboneConfig::mf(),
            loss: LossConfig::default(),
            num_negatives: 1000,
            num_extra: 4,
            prior_mode: PriorMode::Constant,
            prior_constant: 0.1,
            lr: 1e-3,
            wd: 0.0,
            schedule: TrainSchedule::default(),
            train_seed: 0,
            eval_k: 20,
            output_dir: PathBuf::from("out"),
            checkpoint_format: CheckpointMode::Text,
        }
    }
}

/// Every accepted key, in snapshot order.
pub const KEYS: &[&str] = &[
    "data.path",
    "data.format",
    "data.k_core",
    "data.min_rating",
    "split.seed",
    "split.test_frac",
    "split.val_frac",
    "backbone.kind",
    "backbone.dim",
    "backbone.layers",
    "backbone.noise_eps",
    "backbone.contrast_layer",
    "backbone.contrast_temp",
    "backbone.contrast_weight",
    "backbone.init_scale",
    "loss.kind",
    "loss.tau",
    "loss.tau2",
    "loss.beta",
    "loss.activation",
    "loss.sigma_form",
    "loss.eps_clamp",
    "loss.q",
    "sampler.N",
    "sampler.M",
    "prior.mode",
    "prior.constant",
    "optim.lr",
    "optim.wd",
    "schedule.epochs",
    "schedule.batch_size",
    "schedule.eval_every",
    "schedule.patience",
    "train.seed",
    "eval.K",
    "output.dir",
    "output.checkpoint_format",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for {key}")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

/// Splits `key = value` / `key=value`.
pub fn split_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{s}`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            pairs.push(split_assignment(line)?);
        }
        let mut cfg = Self::default();
        cfg.apply_all(&pairs)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Applies overrides. A `backbone.kind` change first resets the backbone
    /// to that kind's defaults, so the other backbone keys in the same batch
    /// take effect on top of them.
    pub fn apply_all(&mut self, pairs: &[(String, String)]) -> Result<()> {
        if let Some((_, kind)) = pairs.iter().rev().find(|(k, _)| k == "backbone.kind") {
            let kind: BackboneKind = kind.parse()?;
            if kind != self.backbone.kind {
                let dim = self.backbone.dim;
                let init = self.backbone.init_scale;
                self.backbone = BackboneConfig::for_kind(kind);
                self.backbone.dim = dim;
                self.backbone.init_scale = init;
            }
        }
        for (k, v) in pairs {
            if k != "backbone.kind" {
                self.set(k, v)?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "data.path" => self.data_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.format" => self.data_format = v.parse()?,
            "data.k_core" => self.k_core = parse(key, v)?,
            "data.min_rating" => self.min_rating = parse(key, v)?,
            "split.seed" => self.split_seed = parse(key, v)?,
            "split.test_frac" => self.test_frac = parse(key, v)?,
            "split.val_frac" => self.val_frac = parse(key, v)?,
            "backbone.kind" => self.apply_all(&[(key.to_string(), v.to_string())])?,
            "backbone.dim" => self.backbone.dim = parse(key, v)?,
            "backbone.layers" => self.backbone.layers = parse(key, v)?,
            "backbone.noise_eps" => self.backbone.noise_eps = parse(key, v)?,
            "backbone.contrast_layer" => self.backbone.contrast_layer = parse(key, v)?,
            "backbone.contrast_temp" => self.backbone.contrast_temp = parse(key, v)?,
            "backbone.contrast_weight" => self.backbone.contrast_weight = parse(key, v)?,
            "backbone.init_scale" => self.backbone.init_scale = parse_opt(key, v)?,
            "loss.kind" => self.loss.kind = v.parse()?,
            "loss.tau" => self.loss.tau = parse(key, v)?,
            "loss.tau2" => self.loss.tau2 = parse(key, v)?,
            "loss.beta" => self.loss.beta = parse(key, v)?,
            "loss.activation" => self.loss.activation = v.parse()?,
            "loss.sigma_form" => self.loss.sigma_form = v.parse()?,
            "loss.eps_clamp" => self.loss.eps_clamp = parse(key, v)?,
            "loss.q" => self.loss.q = parse_opt(key, v)?,
            "sampler.N" => self.num_negatives = parse(key, v)?,
            "sampler.M" => self.num_extra = parse(key, v)?,
            "prior.mode" => self.prior_mode = v.parse()?,
            "prior.constant" => self.prior_constant = parse(key, v)?,
            "optim.lr" => self.lr = parse(key, v)?,
            "optim.wd" => self.wd = parse(key, v)?,
            "schedule.epochs" => self.schedule.epochs = parse(key, v)?,
            "schedule.batch_size" => self.schedule.batch_size = parse(key, v)?,
            "schedule.eval_every" => self.schedule.eval_every = parse(key, v)?,
            "schedule.patience" => self.schedule.early_stop_patience = parse_opt(key, v)?,
            "train.seed" => self.train_seed = parse(key, v)?,
            "eval.K" => {
                self.eval_k = parse(key, v)?;
                self.schedule.eval_k = self.eval_k;
            }
            "output.dir" => self.output_dir = PathBuf::from(v),
            "output.checkpoint_format" => {
                self.checkpoint_format = match v {
                    "text" => CheckpointMode::Text,
                    "binary" => CheckpointMode::Binary,
                    _ => return Err(Error::Config(format!("invalid value `{v}` for {key}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Value of `key` as it appears in a snapshot.
    pub fn get(&self, key: &str) -> Option<String> {
        let b = &self.backbone;
        let l = &self.loss;
        let s = &self.schedule;
        Some(match key {
            "data.path" => self
                .data_path
                .as_ref()
                .map_or_else(String::new, |p| p.display().to_string()),
            "data.format" => self.data_format.to_string(),
            "data.k_core" => self.k_core.to_string(),
            "data.min_rating" => self.min_rating.to_string(),
            "split.seed" => self.split_seed.to_string(),
            "split.test_frac" => self.test_frac.to_string(),
            "split.val_frac" => self.val_frac.to_string(),
            "backbone.kind" => b.kind.to_string(),
            "backbone.dim" => b.dim.to_string(),
            "backbone.layers" => b.layers.to_string(),
            "backbone.noise_eps" => b.noise_eps.to_string(),
            "backbone.contrast_layer" => b.contrast_layer.to_string(),
            "backbone.contrast_temp" => b.contrast_temp.to_string(),
            "backbone.contrast_weight" => b.contrast_weight.to_string(),
            "backbone.init_scale" => opt(&b.init_scale),
            "loss.kind" => l.kind.to_string(),
            "loss.tau" => l.tau.to_string(),
            "loss.tau2" => l.tau2.to_string(),
            "loss.beta" => l.beta.to_string(),
            "loss.activation" => l.activation.to_string(),
            "loss.sigma_form" => l.sigma_form.to_string(),
            "loss.eps_clamp" => l.eps_clamp.to_string(),
            "loss.q" => opt(&l.q),
            "sampler.N" => self.num_negatives.to_string(),
            "sampler.M" => self.num_extra.to_string(),
            "prior.mode" => self.prior_mode.to_string(),
            "prior.constant" => self.prior_constant.to_string(),
            "optim.lr" => self.lr.to_string(),
            "optim.wd" => self.wd.to_string(),
            "schedule.epochs" => s.epochs.to_string(),
            "schedule.batch_size" => s.batch_size.to_string(),
            "schedule.eval_every" => s.eval_every.to_string(),
            "schedule.patience" => opt(&s.early_stop_patience),
            "train.seed" => self.train_seed.to_string(),
            "eval.K" => self.eval_k.to_string(),
            "output.dir" => self.output_dir.display().to_string(),
            "output.checkpoint_format" => match self.checkpoint_format {
                CheckpointMode::Text => "text".to_string(),
                CheckpointMode::Binary => "binary".to_string(),
            },
            _ => return None,
        })
    }

    /// Every key with its resolved value; parses back to `self`.
    pub fn to_resolved_string(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("known key")).expect("write to string");
        }
        out
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            backbone: self.backbone.clone(),
            loss: self.loss.clone(),
            num_negatives: self.num_negatives,
            num_extra: self.num_extra,
            lr: self.lr,
            wd: self.wd,
            schedule: TrainSchedule {
                eval_k: self.eval_k,
                ..self.schedule.clone()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_core == 0 {
            return Err(Error::Config("data.k_core must be >= 1".into()));
        }
        for (name, f) in [("split.test_frac", self.test_frac), ("split.val_frac", self.val_frac)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.eval_k == 0 {
            return Err(Error::Config("eval.K must be >= 1".into()));
        }
        if self.prior_mode == PriorMode::Constant && !(0.0..1.0).contains(&self.prior_constant) {
            return Err(Error::InvalidConstant(self.prior_constant));
        }
        self.train_config().validate()
    }
}
