//! Cross-layer InfoNCE regularizer used by the XSimGCL backbone.

use super::embedding::{dot, norm, EmbeddingTable};
use crate::error::{Error, Result};
use crate::grad::Gradients;

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastOutput {
    pub loss: f64,
    /// Gradient on the layer-mean embeddings.
    pub grad_final: Gradients,
    /// Gradient on layer `contrast_layer`.
    pub grad_layer: Gradients,
}

/// InfoNCE between the final and the `contrast_layer`-th embeddings of
/// `batch_nodes`, scaled by `weight`.
///
/// For each node the positive is its own other view and the negatives are
/// the other views of the remaining batch nodes. Duplicate nodes are
/// collapsed. A batch with fewer than two nodes has loss 0.
pub fn xsimgcl_contrast_loss(
    per_layer: &[EmbeddingTable],
    final_emb: &EmbeddingTable,
    batch_nodes: &[usize],
    contrast_layer: usize,
    temp: f64,
    weight: f64,
) -> Result<ContrastOutput> {
    let layer = per_layer.get(contrast_layer).ok_or(Error::LayerIndexOutOfRange {
        index: contrast_layer,
        layers: per_layer.len(),
    })?;
    if !layer.same_shape(final_emb) {
        return Err(Error::DimensionMismatch {
            expected: final_emb.num_nodes(),
            actual: layer.num_nodes(),
        });
    }
    let (nu, ni, dim) = (final_emb.num_users(), final_emb.num_items(), final_emb.dim());
    let mut out = ContrastOutput {
        loss: 0.0,
        grad_final: Gradients::new(nu, ni, dim),
        grad_layer: Gradients::new(nu, ni, dim),
    };

    let mut nodes = batch_nodes.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    if nodes.len() < 2 || weight == 0.0 {
        return Ok(out);
    }

    let unit = |t: &EmbeddingTable, node: usize| -> Result<(Vec<f64>, f64)> {
        let row = t.row(node);
        let n = norm(row);
        if n == 0.0 {
            let entity = if node < nu {
                crate::Entity::User
            } else {
                crate::Entity::Item
            };
            let id = if node < nu { node } else { node - nu };
            return Err(Error::ZeroNormVector { entity, id });
        }
        Ok((row.iter().map(|x| x / n).collect(), n))
    };
    let mut z1 = Vec::with_capacity(nodes.len());
    let mut z2 = Vec::with_capacity(nodes.len());
    for &node in &nodes {
        z1.push(unit(final_emb, node)?);
        z2.push(unit(layer, node)?);
    }

    let n = nodes.len();
    let coef = weight / n as f64;
    let mut dz1 = vec![vec![0.0; dim]; n];
    let mut dz2 = vec![vec![0.0; dim]; n];
    let mut logits = vec![0.0; n];
    let mut total = 0.0;
    for a in 0..n {
        for b in 0..n {
            logits[b] = dot(&z1[a].0, &z2[b].0) / temp;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|s| (s - max).exp()).sum();
        total += max + sum.ln() - logits[a];
        for b in 0..n {
            let p = (logits[b] - max).exp() / sum;
            let g = coef * (p - if a == b { 1.0 } else { 0.0 }) / temp;
            for d in 0..dim {
                dz1[a][d] += g * z2[b].0[d];
                dz2[b][d] += g * z1[a].0[d];
            }
        }
    }
    out.loss = coef * total;

    for (idx, &node) in nodes.iter().enumerate() {
        unnormalize_into(out.grad_final.row_mut(node), &dz1[idx], &z1[idx].0, z1[idx].1);
        unnormalize_into(out.grad_layer.row_mut(node), &dz2[idx], &z2[idx].0, z2[idx].1);
    }
    Ok(out)
}

/// Pulls a gradient on `z = x / |x|` back to `x`.
pub(crate) fn unnormalize_into(dst: &mut [f64], dz: &[f64], z: &[f64], x_norm: f64) {
    let proj = dot(dz, z);
    for ((d, g), zz) in dst.iter_mut().zip(dz).zip(z) {
        *d += (g - proj * zz) / x_norm;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::init_embeddings;

    fn views() -> (Vec<EmbeddingTable>, EmbeddingTable) {
        let l0 = init_embeddings(3, 2, 4, 1, 1.0);
        let l1 = init_embeddings(3, 2, 4, 2, 1.0);
        let fin = init_embeddings(3, 2, 4, 3, 1.0);
        (vec![l0, l1], fin)
    }

    #[test]
    fn zero_weight_gives_zero() {
        let (layers, fin) = views();
        let out = xsimgcl_contrast_loss(&layers, &fin, &[0, 1, 2], 1, 0.1, 0.0).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.grad_final.touched_count(), 0);
    }

    #[test]
    fn single_node_batch_is_zero() {
        let (layers, fin) = views();
        let out = xsimgcl_contrast_loss(&layers, &fin, &[2, 2], 1, 0.1, 0.2).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn out_of_range_layer() {
        let (layers, fin) = views();
        assert!(matches!(
            xsimgcl_contrast_loss(&layers, &fin, &[0, 1], 2, 0.1, 0.2),
            Err(Error::LayerIndexOutOfRange { index: 2, layers: 2 })
        ));
    }
}
