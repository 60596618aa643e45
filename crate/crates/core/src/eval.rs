//! Masked full-ranking Top-K evaluation.
//!
//! Two rank conventions coexist. Ranked lists break score ties by ascending
//! item id, so metrics are deterministic. [`dcg_full`] instead uses the
//! Heaviside rank `π(i) = #{j : r_j ≥ r_i}`, which counts ties against the
//! item, because that is the quantity the softmax bounds are stated for.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use crate::backbones::ScoreSnapshot;
use crate::data::{IdMap, UserItemSet};
use crate::error::{Error, Result};

/// Anything that can score every item for a user.
pub trait ItemScorer {
    fn num_users(&self) -> usize;
    fn num_items(&self) -> usize;
    /// Replaces `out` with the scores of all items for user `u`.
    fn score_user(&self, u: usize, out: &mut Vec<f64>);
}

impl ItemScorer for ScoreSnapshot {
    fn num_users(&self) -> usize {
        ScoreSnapshot::num_users(self)
    }

    fn num_items(&self) -> usize {
        ScoreSnapshot::num_items(self)
    }

    fn score_user(&self, u: usize, out: &mut Vec<f64>) {
        self.score_into(u, out)
    }
}

/// A precomputed users × items score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseScores {
    pub scores: Vec<Vec<f64>>,
}

impl ItemScorer for DenseScores {
    fn num_users(&self) -> usize {
        self.scores.len()
    }

    fn num_items(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    fn score_user(&self, u: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.scores[u]);
    }
}

fn by_score_then_id(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Unmasked items by descending score, ties by ascending id.
pub fn rank_items(scores: &[f64], mask: &[usize]) -> Vec<usize> {
    let mut masked = vec![false; scores.len()];
    for &i in mask {
        masked[i] = true;
    }
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| !masked[i]).collect();
    order.sort_by(by_score_then_id(scores));
    order
}

/// The first `k` entries of [`rank_items`], without sorting the tail.
pub fn top_k(scores: &[f64], mask: &[usize], k: usize) -> Vec<usize> {
    let mut masked = vec![false; scores.len()];
    for &i in mask {
        masked[i] = true;
    }
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| !masked[i]).collect();
    let cmp = by_score_then_id(scores);
    if k < order.len() {
        order.select_nth_unstable_by(k, &cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    order
}

fn is_member(sorted_or_not: &[usize], i: usize) -> bool {
    sorted_or_not.contains(&i)
}

/// `|top-K ∩ P| / |P|`.
pub fn recall_at_k(ranked: &[usize], ground_truth: &[usize], k: usize) -> Result<f64> {
    if ground_truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let hits = ranked.iter().take(k).filter(|&&i| is_member(ground_truth, i)).count();
    Ok(hits as f64 / ground_truth.len() as f64)
}

/// DCG@K over the ranked list divided by the ideal DCG@K, whose length is
/// `min(K, |P|)`.
pub fn ndcg_at_k(ranked: &[usize], ground_truth: &[usize], k: usize) -> Result<f64> {
    if ground_truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &i)| is_member(ground_truth, i))
        .map(|(pos, _)| 1.0 / (pos as f64 + 2.0).log2())
        .sum();
    let idcg: f64 = (0..k.min(ground_truth.len()))
        .map(|pos| 1.0 / (pos as f64 + 2.0).log2())
        .sum();
    Ok(dcg / idcg)
}

/// Heaviside rank of item `i`: items scoring at least as high, itself included.
pub fn heaviside_rank(scores: &[f64], i: usize) -> usize {
    scores.iter().filter(|&&s| s - scores[i] >= 0.0).count()
}

/// Unbounded DCG over all positives with Heaviside ranks.
pub fn dcg_full(scores: &[f64], positives: &[usize]) -> f64 {
    positives
        .iter()
        .map(|&i| 1.0 / (1.0 + heaviside_rank(scores, i) as f64).log2())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMetrics {
    pub user: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub k: usize,
    pub per_user: Vec<UserMetrics>,
    pub mean_recall: f64,
    pub mean_ndcg: f64,
    pub users_evaluated: usize,
}

impl RankingReport {
    /// Aggregate as `key=value` pairs on one line.
    pub fn summary_line(&self) -> String {
        format!(
            "recall@{k}={r} ndcg@{k}={n} users={u}",
            k = self.k,
            r = self.mean_recall,
            n = self.mean_ndcg,
            u = self.users_evaluated
        )
    }

    /// CSV with header `user_id,recall,ndcg` and a final `ALL` row holding
    /// the means. User ids are raw keys when `users` is given.
    pub fn write_csv<W: Write>(&self, w: W, users: Option<&IdMap>) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["user_id", "recall", "ndcg"])?;
        for m in &self.per_user {
            let id = users
                .and_then(|map| map.key(m.user))
                .map_or_else(|| m.user.to_string(), str::to_owned);
            out.write_record([id, m.recall.to_string(), m.ndcg.to_string()])?;
        }
        out.write_record([
            "ALL".to_string(),
            self.mean_recall.to_string(),
            self.mean_ndcg.to_string(),
        ])?;
        out.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, users: Option<&IdMap>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), users)
    }
}

/// Recall@K and NDCG@K for every user with non-empty ground truth, ranking
/// all items except those in `mask`.
pub fn evaluate<S: ItemScorer + ?Sized>(
    scorer: &S,
    ground_truth: &UserItemSet,
    mask: &UserItemSet,
    k: usize,
) -> Result<RankingReport> {
    if scorer.num_items() != ground_truth.num_items() || mask.num_users() != ground_truth.num_users() {
        return Err(Error::DimensionMismatch {
            expected: ground_truth.num_items(),
            actual: scorer.num_items(),
        });
    }
    let mut per_user = Vec::new();
    let mut scores = Vec::with_capacity(scorer.num_items());
    for u in 0..ground_truth.num_users() {
        let gt = ground_truth.positives(u);
        if gt.is_empty() {
            continue;
        }
        scorer.score_user(u, &mut scores);
        let ranked = top_k(&scores, mask.positives(u), k);
        let hits = ranked.iter().filter(|&&i| ground_truth.contains(u, i)).count();
        per_user.push(UserMetrics {
            user: u,
            recall: recall_at_k(&ranked, gt, k)?,
            ndcg: ndcg_at_k(&ranked, gt, k)?,
            hits,
        });
    }
    let n = per_user.len();
    let mean = |f: fn(&UserMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_user.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Ok(RankingReport {
        k,
        mean_recall: mean(|m| m.recall),
        mean_ndcg: mean(|m| m.ndcg),
        users_evaluated: n,
        per_user,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_items(&[0.9, 0.1, 0.5], &[]), vec![0, 2, 1]);
        assert_eq!(rank_items(&[0.9, 0.1, 0.5], &[0]), vec![2, 1]);
        assert_eq!(rank_items(&[0.3; 4], &[]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn top_k_matches_full_rank_prefix() {
        let scores = [0.2, 0.7, 0.7, -0.1, 0.9, 0.2, 0.0];
        for k in 0..9 {
            let full = rank_items(&scores, &[5]);
            assert_eq!(top_k(&scores, &[5], k), full[..k.min(full.len())].to_vec());
        }
    }

    #[test]
    fn recall_examples() {
        let ranked = [4, 1, 7, 0];
        assert_eq!(recall_at_k(&ranked, &[4, 1], 20).unwrap(), 1.0);
        assert_eq!(recall_at_k(&ranked, &[9], 20).unwrap(), 0.0);
        assert_eq!(recall_at_k(&ranked, &[7, 9], 20).unwrap(), 0.5);
        assert!(matches!(recall_at_k(&ranked, &[], 20), Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn ndcg_examples() {
        let ranked = [4, 1, 7, 0];
        assert_eq!(ndcg_at_k(&ranked, &[4], 20).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&ranked, &[7], 20).unwrap(), 0.5);
        let v = ndcg_at_k(&ranked, &[4, 7], 20).unwrap();
        assert!((v - 1.5 / (1.0 + 1.0 / 3f64.log2())).abs() < 1e-15);
        assert!((v - 0.91972).abs() < 1e-5);
    }

    #[test]
    fn dcg_full_examples() {
        assert_eq!(dcg_full(&[0.1, 0.9, 0.3], &[1]), 1.0);
        let tied = dcg_full(&[0.5, 0.5, 0.1], &[0]);
        assert!((tied - 1.0 / 3f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn perfect_scorer_is_one() {
        let gt = UserItemSet::from_pairs(2, 5, [(0, 1), (0, 3), (1, 4)]);
        let mask = UserItemSet::from_pairs(2, 5, [(0, 0), (1, 2)]);
        let scores = DenseScores {
            scores: vec![vec![0.0, 1.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 9.0, 0.0, 1.0]],
        };
        let r = evaluate(&scores, &gt, &mask, 20).unwrap();
        assert_eq!((r.mean_recall, r.mean_ndcg, r.users_evaluated), (1.0, 1.0, 2));
    }

    #[test]
    fn empty_ground_truth_users_are_skipped() {
        let gt = UserItemSet::from_pairs(3, 3, [(1, 0)]);
        let mask = UserItemSet::from_pairs(3, 3, []);
        let scores = DenseScores {
            scores: vec![vec![0.0; 3]; 3],
        };
        let r = evaluate(&scores, &gt, &mask, 1).unwrap();
        assert_eq!(r.users_evaluated, 1);
        assert_eq!(r.per_user[0].user, 1);
    }

    #[test]
    fn csv_has_header_and_aggregate() {
        let gt = UserItemSet::from_pairs(1, 2, [(0, 0)]);
        let mask = UserItemSet::from_pairs(1, 2, []);
        let scores = DenseScores {
            scores: vec![vec![1.0, 0.0]],
        };
        let r = evaluate(&scores, &gt, &mask, 20).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf, None).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "user_id,recall,ndcg\n0,1,1\nALL,1,1\n");
        assert_eq!(r.summary_line(), "recall@20=1 ndcg@20=1 users=1");
    }
}
