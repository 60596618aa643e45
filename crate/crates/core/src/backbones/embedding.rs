use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Entity, Error, Result};

/// Learnable user and item vectors.
///
/// Rows are stored contiguously, users first and then items, so the table is
/// also the node-feature matrix of the user–item bipartite graph: node `u`
/// is user `u` and node `num_users + i` is item `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    num_users: usize,
    num_items: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        Self {
            num_users,
            num_items,
            dim,
            data: vec![0.0; (num_users + num_items) * dim],
        }
    }

    /// Builds a table from row-major user and item matrices.
    pub fn from_parts(dim: usize, user_vecs: &[f64], item_vecs: &[f64]) -> Result<Self> {
        if dim == 0 || !user_vecs.len().is_multiple_of(dim) || !item_vecs.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: user_vecs.len() % dim.max(1) + item_vecs.len() % dim.max(1),
            });
        }
        let mut data = Vec::with_capacity(user_vecs.len() + item_vecs.len());
        data.extend_from_slice(user_vecs);
        data.extend_from_slice(item_vecs);
        Ok(Self {
            num_users: user_vecs.len() / dim,
            num_items: item_vecs.len() / dim,
            dim,
            data,
        })
    }

    pub(crate) fn from_raw(num_users: usize, num_items: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), (num_users + num_items) * dim);
        Self {
            num_users,
            num_items,
            dim,
            data,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user(&self, u: usize) -> &[f64] {
        assert!(u < self.num_users, "user {u} out of range");
        self.row(u)
    }

    pub fn item(&self, i: usize) -> &[f64] {
        assert!(i < self.num_items, "item {i} out of range");
        self.row(self.num_users + i)
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        assert!(u < self.num_users, "user {u} out of range");
        self.row_mut(u)
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        assert!(i < self.num_items, "item {i} out of range");
        let n = self.num_users + i;
        self.row_mut(n)
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.data[node * self.dim..(node + 1) * self.dim]
    }

    pub fn row_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.data[node * self.dim..(node + 1) * self.dim]
    }

    pub fn entity_row(&self, entity: Entity, id: usize) -> &[f64] {
        match entity {
            Entity::User => self.user(id),
            Entity::Item => self.item(id),
        }
    }

    pub fn entity_row_mut(&mut self, entity: Entity, id: usize) -> &mut [f64] {
        match entity {
            Entity::User => self.user_mut(id),
            Entity::Item => self.item_mut(id),
        }
    }

    pub fn user_vecs(&self) -> &[f64] {
        &self.data[..self.num_users * self.dim]
    }

    pub fn item_vecs(&self) -> &[f64] {
        &self.data[self.num_users * self.dim..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= factor);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.num_users == other.num_users && self.num_items == other.num_items && self.dim == other.dim
    }
}

/// Default initialization scale, `0.1 / sqrt(d)`.
pub fn default_init_scale(dim: usize) -> f64 {
    0.1 / (dim as f64).sqrt()
}

/// I.i.d. `Normal(0, scale^2)` entries, deterministic per seed.
pub fn init_embeddings(num_users: usize, num_items: usize, dim: usize, seed: u64, scale: f64) -> EmbeddingTable {
    let mut table = EmbeddingTable::zeros(num_users, num_items, dim);
    if scale == 0.0 {
        return table;
    }
    let normal = Normal::new(0.0, scale.abs()).expect("finite scale");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in table.as_mut_slice() {
        *x = normal.sample(&mut rng);
    }
    table
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Half cosine similarity of user `u` and item `i`, in `[-1/2, 1/2]`.
pub fn score(emb: &EmbeddingTable, u: usize, i: usize) -> Result<f64> {
    let eu = emb.user(u);
    let ei = emb.item(i);
    let nu = norm(eu);
    if nu == 0.0 {
        return Err(Error::ZeroNormVector {
            entity: Entity::User,
            id: u,
        });
    }
    let ni = norm(ei);
    if ni == 0.0 {
        return Err(Error::ZeroNormVector {
            entity: Entity::Item,
            id: i,
        });
    }
    Ok(0.5 * dot(eu, ei) / (nu * ni))
}

/// [`score`] of user `u` against every item.
pub fn score_all_items(emb: &EmbeddingTable, u: usize) -> Result<Vec<f64>> {
    let eu = emb.user(u);
    let nu = norm(eu);
    if nu == 0.0 {
        return Err(Error::ZeroNormVector {
            entity: Entity::User,
            id: u,
        });
    }
    (0..emb.num_items())
        .map(|i| {
            let ei = emb.item(i);
            let ni = norm(ei);
            if ni == 0.0 {
                return Err(Error::ZeroNormVector {
                    entity: Entity::Item,
                    id: i,
                });
            }
            Ok(0.5 * dot(eu, ei) / (nu * ni))
        })
        .collect()
}

/// Plain inner product, the score convention of BPR.
pub fn dot_score(emb: &EmbeddingTable, u: usize, i: usize) -> f64 {
    dot(emb.user(u), emb.item(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(u: &[f64], i: &[f64]) -> EmbeddingTable {
        EmbeddingTable::from_parts(u.len(), u, i).unwrap()
    }

    #[test]
    fn zero_scale_gives_zero_table() {
        let t = init_embeddings(3, 4, 5, 1, 0.0);
        assert!(t.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_embeddings(5, 7, 64, 11, default_init_scale(64));
        let b = init_embeddings(5, 7, 64, 11, default_init_scale(64));
        let c = init_embeddings(5, 7, 64, 12, default_init_scale(64));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.dim(), 64);
    }

    #[test]
    fn score_extremes() {
        assert!((score(&pair(&[1.0, 2.0], &[1.0, 2.0]), 0, 0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(score(&pair(&[1.0, 0.0], &[0.0, 3.0]), 0, 0).unwrap(), 0.0);
        let s = score(&pair(&[1.0, -2.0], &[-1.0, 2.0]), 0, 0).unwrap();
        assert!((s + 0.5).abs() < 1e-15);
    }

    #[test]
    fn score_rejects_zero_vectors() {
        let t = pair(&[0.0, 0.0], &[1.0, 0.0]);
        assert!(matches!(
            score(&t, 0, 0),
            Err(Error::ZeroNormVector {
                entity: Entity::User,
                id: 0
            })
        ));
        let t = pair(&[1.0, 0.0], &[0.0, 0.0]);
        assert!(matches!(
            score_all_items(&t, 0),
            Err(Error::ZeroNormVector {
                entity: Entity::Item,
                ..
            })
        ));
    }

    #[test]
    fn score_all_matches_pointwise() {
        let t = EmbeddingTable::from_parts(2, &[0.3, -1.0], &[1.0, 0.5, -0.2, 0.9]).unwrap();
        let all = score_all_items(&t, 0).unwrap();
        assert_eq!(all, vec![score(&t, 0, 0).unwrap(), score(&t, 0, 1).unwrap()]);
    }

    #[test]
    fn equal_items_give_constant_scores() {
        let t = EmbeddingTable::from_parts(2, &[0.3, -1.0], &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let all = score_all_items(&t, 0).unwrap();
        assert!(all.windows(2).all(|w| w[0] == w[1]));
    }
}
