//! Embedding backbones: MF, LightGCN and XSimGCL.
//!
//! All three share one learnable [`EmbeddingTable`]; they differ in how the
//! table is turned into the embeddings that are scored. MF scores the table
//! directly, LightGCN averages `L` rounds of normalized neighborhood
//! aggregation, and XSimGCL additionally perturbs every propagated layer and
//! regularizes with a cross-layer InfoNCE term during training.

mod checkpoint;
mod contrast;
mod embedding;
mod graph;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMode};
pub(crate) use contrast::unnormalize_into;
pub use contrast::{xsimgcl_contrast_loss, ContrastOutput};
pub use embedding::{default_init_scale, dot_score, init_embeddings, score, score_all_items, EmbeddingTable};
pub(crate) use embedding::{dot, norm};
pub use graph::{propagate, propagate_backward, propagate_with_rng, NormalizedAdjacency, Propagation};

use crate::data::UserItemSet;
use crate::error::{Entity, Error, Result};
use crate::grad::Gradients;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackboneKind {
    #[default]
    MF,
    LightGCN,
    XSimGCL,
}

impl BackboneKind {
    pub fn is_graph(self) -> bool {
        !matches!(self, BackboneKind::MF)
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(BackboneKind::MF),
            "lightgcn" => Ok(BackboneKind::LightGCN),
            "xsimgcl" => Ok(BackboneKind::XSimGCL),
            other => Err(Error::Config(format!("unknown backbone `{other}`"))),
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackboneKind::MF => "MF",
            BackboneKind::LightGCN => "LightGCN",
            BackboneKind::XSimGCL => "XSimGCL",
        })
    }
}

/// How a user–item preference is computed from two embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scoring {
    /// Half cosine similarity, in `[-1/2, 1/2]`.
    #[default]
    HalfCosine,
    /// Raw inner product (the BPR convention).
    Dot,
}

impl FromStr for Scoring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Scoring::HalfCosine),
            "dot" => Ok(Scoring::Dot),
            other => Err(Error::Config(format!("unknown scoring `{other}`"))),
        }
    }
}

impl fmt::Display for Scoring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scoring::HalfCosine => "cosine",
            Scoring::Dot => "dot",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub dim: usize,
    /// Propagation depth; ignored for MF.
    pub layers: usize,
    /// Per-layer perturbation magnitude; only XSimGCL uses it.
    pub noise_eps: f64,
    /// Layer `l*` contrasted against the final embeddings (0 = input layer).
    pub contrast_layer: usize,
    pub contrast_temp: f64,
    /// Weight λ of the InfoNCE regularizer.
    pub contrast_weight: f64,
    /// Standard deviation of the initial entries; `None` means `0.1 / sqrt(d)`.
    pub init_scale: Option<f64>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::mf()
    }
}

impl BackboneConfig {
    pub const DEFAULT_DIM: usize = 64;

    pub fn mf() -> Self {
        Self {
            kind: BackboneKind::MF,
            dim: Self::DEFAULT_DIM,
            layers: 0,
            noise_eps: 0.0,
            contrast_layer: 0,
            contrast_temp: 0.1,
            contrast_weight: 0.0,
            init_scale: None,
        }
    }

    pub fn lightgcn() -> Self {
        Self {
            kind: BackboneKind::LightGCN,
            layers: 2,
            ..Self::mf()
        }
    }

    pub fn xsimgcl() -> Self {
        Self {
            kind: BackboneKind::XSimGCL,
            layers: 3,
            noise_eps: 0.1,
            contrast_layer: 1,
            contrast_temp: 0.1,
            contrast_weight: 0.1,
            ..Self::mf()
        }
    }

    /// Defaults for a kind.
    pub fn for_kind(kind: BackboneKind) -> Self {
        match kind {
            BackboneKind::MF => Self::mf(),
            BackboneKind::LightGCN => Self::lightgcn(),
            BackboneKind::XSimGCL => Self::xsimgcl(),
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn init_scale(&self) -> f64 {
        self.init_scale.unwrap_or_else(|| default_init_scale(self.dim))
    }

    /// Layers actually propagated.
    pub fn effective_layers(&self) -> usize {
        if self.kind.is_graph() {
            self.layers
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("backbone.dim must be >= 1".into()));
        }
        if self.kind == BackboneKind::XSimGCL {
            if self.contrast_layer > self.layers {
                return Err(Error::Config(format!(
                    "backbone.contrast_layer {} exceeds backbone.layers {}",
                    self.contrast_layer, self.layers
                )));
            }
            if !(self.contrast_temp > 0.0) {
                return Err(Error::Config("backbone.contrast_temp must be > 0".into()));
            }
        }
        if !(self.noise_eps >= 0.0) || !(self.contrast_weight >= 0.0) {
            return Err(Error::Config("backbone noise and contrast weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Embeddings produced by one training forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub final_emb: EmbeddingTable,
    /// Retained layers for graph backbones (empty for MF).
    pub per_layer: Vec<EmbeddingTable>,
}

/// A backbone with its learnable base table.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: BackboneConfig,
    pub scoring: Scoring,
    pub base: EmbeddingTable,
    adjacency: Option<NormalizedAdjacency>,
}

impl Model {
    /// `train` supplies the graph edges for LightGCN / XSimGCL.
    pub fn new(config: BackboneConfig, scoring: Scoring, base: EmbeddingTable, train: &UserItemSet) -> Result<Self> {
        config.validate()?;
        if base.dim() != config.dim {
            return Err(Error::DimensionMismatch {
                expected: config.dim,
                actual: base.dim(),
            });
        }
        if base.num_users() != train.num_users() || base.num_items() != train.num_items() {
            return Err(Error::DimensionMismatch {
                expected: train.num_users() + train.num_items(),
                actual: base.num_nodes(),
            });
        }
        let adjacency = config
            .kind
            .is_graph()
            .then(|| NormalizedAdjacency::from_interactions(train));
        Ok(Self {
            config,
            scoring,
            base,
            adjacency,
        })
    }

    pub fn initialize(config: BackboneConfig, scoring: Scoring, train: &UserItemSet, seed: u64) -> Result<Self> {
        let base = init_embeddings(
            train.num_users(),
            train.num_items(),
            config.dim,
            seed,
            config.init_scale(),
        );
        Self::new(config, scoring, base, train)
    }

    pub fn adjacency(&self) -> Option<&NormalizedAdjacency> {
        self.adjacency.as_ref()
    }

    /// Training-time embeddings; XSimGCL layers are perturbed using `rng`.
    pub fn forward<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Forward> {
        match &self.adjacency {
            None => Ok(Forward {
                final_emb: self.base.clone(),
                per_layer: Vec::new(),
            }),
            Some(adj) => {
                let eps = if self.config.kind == BackboneKind::XSimGCL {
                    self.config.noise_eps
                } else {
                    0.0
                };
                let p = propagate_with_rng(&self.base, adj, self.config.layers, eps, rng)?;
                Ok(Forward {
                    final_emb: p.final_emb,
                    per_layer: p.per_layer,
                })
            }
        }
    }

    /// Unperturbed embeddings used for scoring and evaluation.
    pub fn inference_embeddings(&self) -> Result<EmbeddingTable> {
        match &self.adjacency {
            None => Ok(self.base.clone()),
            Some(adj) => Ok(propagate(&self.base, adj, self.config.layers, 0.0, 0)?.final_emb),
        }
    }

    /// Maps gradients on the forward outputs back to the base table.
    pub fn backward(&self, grad_final: &Gradients, layer_grad: Option<(usize, &Gradients)>) -> Result<Gradients> {
        let Some(adj) = &self.adjacency else {
            let mut g = grad_final.clone();
            if let Some((_, lg)) = layer_grad {
                g.accumulate(lg, 1.0);
            }
            return Ok(g);
        };
        let extra: Vec<(usize, &[f64])> = layer_grad.map(|(l, g)| (l, g.as_dense())).into_iter().collect();
        let dense = propagate_backward(adj, self.config.layers, self.base.dim(), grad_final.as_dense(), &extra)?;
        Ok(Gradients::from_dense(
            self.base.num_users(),
            self.base.num_items(),
            self.base.dim(),
            dense,
        ))
    }

    pub fn snapshot(&self) -> Result<ScoreSnapshot> {
        ScoreSnapshot::new(&self.inference_embeddings()?, self.scoring)
    }
}

/// Read-only scoring view over inference embeddings.
///
/// For cosine scoring the rows are pre-normalized once, so scoring a user
/// against all items is a single pass of inner products.
#[derive(Debug, Clone)]
pub struct ScoreSnapshot {
    scoring: Scoring,
    table: EmbeddingTable,
}

impl ScoreSnapshot {
    pub fn new(emb: &EmbeddingTable, scoring: Scoring) -> Result<Self> {
        let mut table = emb.clone();
        if scoring == Scoring::HalfCosine {
            for node in 0..table.num_nodes() {
                let row = table.row_mut(node);
                let n = norm(row);
                if n == 0.0 {
                    let (entity, id) = if node < emb.num_users() {
                        (Entity::User, node)
                    } else {
                        (Entity::Item, node - emb.num_users())
                    };
                    return Err(Error::ZeroNormVector { entity, id });
                }
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
        Ok(Self { scoring, table })
    }

    pub fn num_users(&self) -> usize {
        self.table.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.table.num_items()
    }

    pub fn score_into(&self, u: usize, out: &mut Vec<f64>) {
        let eu = self.table.user(u);
        let half = match self.scoring {
            Scoring::HalfCosine => 0.5,
            Scoring::Dot => 1.0,
        };
        out.clear();
        out.extend((0..self.table.num_items()).map(|i| half * dot(eu, self.table.item(i))));
    }
}
