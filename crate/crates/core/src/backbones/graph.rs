//! Symmetric-normalized bipartite adjacency and LightGCN-style propagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::embedding::{norm, EmbeddingTable};
use crate::data::UserItemSet;
use crate::error::{Error, Result};

/// `D^{-1/2} A D^{-1/2}` over the `num_users + num_items` nodes, in CSR form.
///
/// Only train edges are present, the matrix is symmetric and has no
/// self-loops. The entry for edge (u, i) is `1 / sqrt(deg(u) deg(i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_users: usize,
    num_items: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_interactions(train: &UserItemSet) -> Self {
        let num_users = train.num_users();
        let num_items = train.num_items();
        let user_deg = train.user_degrees();
        let item_deg = train.item_degrees();

        let mut item_users: Vec<Vec<usize>> = vec![Vec::new(); num_items];
        for (u, i) in train.pairs() {
            item_users[i].push(u);
        }

        let n = num_users + num_items;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(2 * train.len());
        let mut values = Vec::with_capacity(2 * train.len());
        row_ptr.push(0);
        for (u, &du) in user_deg.iter().enumerate() {
            for &i in train.positives(u) {
                col_idx.push(num_users + i);
                values.push(1.0 / ((du * item_deg[i]) as f64).sqrt());
            }
            row_ptr.push(col_idx.len());
        }
        for (i, users) in item_users.iter().enumerate() {
            for &u in users {
                col_idx.push(u);
                values.push(1.0 / ((user_deg[u] * item_deg[i]) as f64).sqrt());
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            num_users,
            num_items,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of one row as (column, value).
    pub fn row(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[node]..self.row_ptr[node + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Row dotted with the all-ones vector.
    pub fn row_sum(&self, node: usize) -> f64 {
        self.row(node).map(|(_, v)| v).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.num_nodes();
        let mut dense = vec![vec![0.0; n]; n];
        for (r, row) in dense.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        dense
    }

    /// `out = A * input` for row-major node matrices of width `dim`.
    pub fn multiply(&self, input: &[f64], out: &mut [f64], dim: usize) {
        debug_assert_eq!(input.len(), self.num_nodes() * dim);
        debug_assert_eq!(out.len(), input.len());
        for node in 0..self.num_nodes() {
            let dst = &mut out[node * dim..(node + 1) * dim];
            dst.iter_mut().for_each(|x| *x = 0.0);
            for (c, v) in self.row(node) {
                let src = &input[c * dim..(c + 1) * dim];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
    }
}

/// Output of [`propagate`]: the layer mean and every layer `E(0)..E(L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub final_emb: EmbeddingTable,
    pub per_layer: Vec<EmbeddingTable>,
}

/// `E(k+1) = A E(k)`, optionally perturbed, and the mean of all layers.
///
/// With `noise_eps > 0` each propagated row receives
/// `eps * sign(row) ⊙ ξ / ‖ξ‖` with `ξ ~ U[0,1)^d`.
pub fn propagate(
    base: &EmbeddingTable,
    adj: &NormalizedAdjacency,
    layers: usize,
    noise_eps: f64,
    seed: u64,
) -> Result<Propagation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    propagate_with_rng(base, adj, layers, noise_eps, &mut rng)
}

pub fn propagate_with_rng<R: Rng + ?Sized>(
    base: &EmbeddingTable,
    adj: &NormalizedAdjacency,
    layers: usize,
    noise_eps: f64,
    rng: &mut R,
) -> Result<Propagation> {
    if adj.num_nodes() != base.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: adj.num_nodes(),
            actual: base.num_nodes(),
        });
    }
    let dim = base.dim();
    let mut per_layer = Vec::with_capacity(layers + 1);
    per_layer.push(base.clone());
    let mut xi = vec![0.0; dim];
    for _ in 0..layers {
        let prev = per_layer.last().expect("layer 0 present");
        let mut next = vec![0.0; prev.as_slice().len()];
        adj.multiply(prev.as_slice(), &mut next, dim);
        if noise_eps > 0.0 {
            for row in next.chunks_mut(dim) {
                xi.iter_mut().for_each(|x| *x = rng.gen::<f64>());
                let n = norm(&xi);
                if n == 0.0 {
                    continue;
                }
                for (r, x) in row.iter_mut().zip(&xi) {
                    let sign = if *r > 0.0 {
                        1.0
                    } else if *r < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *r += noise_eps * sign * x / n;
                }
            }
        }
        per_layer.push(EmbeddingTable::from_raw(base.num_users(), base.num_items(), dim, next));
    }

    let scale = 1.0 / (layers + 1) as f64;
    let mut mean = vec![0.0; base.as_slice().len()];
    for layer in &per_layer {
        for (m, x) in mean.iter_mut().zip(layer.as_slice()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m *= scale);
    Ok(Propagation {
        final_emb: EmbeddingTable::from_raw(base.num_users(), base.num_items(), dim, mean),
        per_layer,
    })
}

/// Gradient with respect to the base table, given gradients on the layer
/// mean and optionally directly on individual layers.
///
/// The perturbation is piecewise constant in the embeddings, so it
/// contributes nothing to the derivative and the backward pass is the
/// transpose of the linear propagation (A is symmetric).
pub fn propagate_backward(
    adj: &NormalizedAdjacency,
    layers: usize,
    dim: usize,
    grad_final: &[f64],
    layer_grads: &[(usize, &[f64])],
) -> Result<Vec<f64>> {
    let len = adj.num_nodes() * dim;
    if grad_final.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            actual: grad_final.len(),
        });
    }
    for &(layer, g) in layer_grads {
        if layer > layers {
            return Err(Error::LayerIndexOutOfRange {
                index: layer,
                layers: layers + 1,
            });
        }
        if g.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: g.len(),
            });
        }
    }
    let scale = 1.0 / (layers + 1) as f64;
    let mut carry = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    for k in (0..=layers).rev() {
        // carry holds dL/dE(k+1); pull it back through A
        if k < layers {
            adj.multiply(&carry, &mut tmp, dim);
            std::mem::swap(&mut carry, &mut tmp);
        }
        for (c, g) in carry.iter_mut().zip(grad_final) {
            *c += scale * g;
        }
        for &(layer, g) in layer_grads {
            if layer == k {
                for (c, x) in carry.iter_mut().zip(g) {
                    *c += x;
                }
            }
        }
    }
    Ok(carry)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_edge() -> NormalizedAdjacency {
        NormalizedAdjacency::from_interactions(&UserItemSet::from_pairs(1, 1, [(0, 0)]))
    }

    #[test]
    fn zero_layers_is_identity() {
        let base = EmbeddingTable::from_parts(2, &[1.0, 2.0], &[3.0, -1.0]).unwrap();
        let p = propagate(&base, &single_edge(), 0, 0.0, 0).unwrap();
        assert_eq!(p.final_emb, base);
        assert_eq!(p.per_layer.len(), 1);
    }

    #[test]
    fn single_edge_hand_propagation() {
        let base = EmbeddingTable::from_parts(2, &[1.0, 2.0], &[3.0, -1.0]).unwrap();
        let p = propagate(&base, &single_edge(), 1, 0.0, 0).unwrap();
        // deg(u) = deg(i) = 1, so E(1) swaps the two rows
        assert_eq!(p.per_layer[1].user(0), &[3.0, -1.0]);
        assert_eq!(p.per_layer[1].item(0), &[1.0, 2.0]);
        assert_eq!(p.final_emb.user(0), &[2.0, 0.5]);
        assert_eq!(p.final_emb.item(0), &[2.0, 0.5]);
    }

    #[test]
    fn adjacency_is_symmetric_without_self_loops() {
        let set = UserItemSet::from_pairs(3, 2, [(0, 0), (0, 1), (1, 1), (2, 1)]);
        let dense = NormalizedAdjacency::from_interactions(&set).to_dense();
        for r in 0..dense.len() {
            assert_eq!(dense[r][r], 0.0);
            for (c, row) in dense.iter().enumerate() {
                assert_eq!(dense[r][c], row[r]);
            }
        }
        // edge (0, item 1): deg(u0) = 2, deg(i1) = 3
        assert!((dense[0][3 + 1] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_table_is_rejected() {
        let base = EmbeddingTable::zeros(2, 2, 3);
        assert!(matches!(
            propagate(&base, &single_edge(), 1, 0.0, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn noise_has_requested_magnitude_and_sign() {
        let set = UserItemSet::from_pairs(2, 2, [(0, 0), (1, 1), (0, 1)]);
        let adj = NormalizedAdjacency::from_interactions(&set);
        let base = crate::backbones::init_embeddings(2, 2, 4, 3, 1.0);
        let clean = propagate(&base, &adj, 1, 0.0, 9).unwrap();
        let noisy = propagate(&base, &adj, 1, 0.1, 9).unwrap();
        for node in 0..4 {
            let c = clean.per_layer[1].row(node);
            let n = noisy.per_layer[1].row(node);
            let delta: Vec<f64> = n.iter().zip(c).map(|(a, b)| a - b).collect();
            assert!((norm(&delta) - 0.1).abs() < 1e-12);
            for (d, x) in delta.iter().zip(c) {
                assert!(d * x >= 0.0);
            }
        }
        assert_eq!(noisy, propagate(&base, &adj, 1, 0.1, 9).unwrap());
    }
}
