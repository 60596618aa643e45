use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cwrec::data::{index_dataset, k_core_filter, load_interactions, split_dataset, Format, RawInteraction};
use cwrec::synthetic::{random_dataset, toy_interactions};

fn random_log(seed: u64) -> Vec<RawInteraction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.gen_range(3..25);
    let items = rng.gen_range(3..25);
    let lines = rng.gen_range(10..300);
    (0..lines)
        .map(|_| {
            RawInteraction::new(
                format!("u{}", rng.gen_range(0..users)),
                format!("i{}", rng.gen_range(0..items)),
            )
        })
        .collect()
}

/// Repeatedly drops every pair touching a node of degree < k.
fn brute_k_core(raw: &[RawInteraction], k: usize) -> BTreeSet<(String, String)> {
    let mut pairs: BTreeSet<(String, String)> = raw.iter().map(|r| (r.user_key.clone(), r.item_key.clone())).collect();
    loop {
        let mut du: HashMap<&str, usize> = HashMap::new();
        let mut di: HashMap<&str, usize> = HashMap::new();
        for (u, i) in &pairs {
            *du.entry(u).or_default() += 1;
            *di.entry(i).or_default() += 1;
        }
        let keep: BTreeSet<(String, String)> = pairs
            .iter()
            .filter(|(u, i)| du[u.as_str()] >= k && di[i.as_str()] >= k)
            .cloned()
            .collect();
        if keep.len() == pairs.len() {
            return keep;
        }
        pairs = keep;
    }
}

fn pair_set(raw: &[RawInteraction]) -> BTreeSet<(String, String)> {
    raw.iter().map(|r| (r.user_key.clone(), r.item_key.clone())).collect()
}

#[test]
fn k_core_matches_brute_force() {
    for seed in 0..200 {
        let raw = random_log(seed);
        for k in 1..6 {
            let want = brute_k_core(&raw, k);
            match k_core_filter(raw.clone(), k) {
                Ok(kept) => {
                    assert_eq!(pair_set(&kept), want, "seed {seed} k {k}");
                    // every line of a surviving pair is kept
                    let n_lines = raw
                        .iter()
                        .filter(|r| want.contains(&(r.user_key.clone(), r.item_key.clone())))
                        .count();
                    assert_eq!(kept.len(), n_lines);
                }
                Err(_) => assert!(want.is_empty(), "seed {seed} k {k}"),
            }
        }
    }
}

#[test]
fn k_core_is_a_fixpoint_and_monotone_in_k() {
    for seed in 0..100 {
        let raw = random_log(seed);
        let mut prev: Option<BTreeSet<(String, String)>> = None;
        for k in 1..6 {
            let Ok(kept) = k_core_filter(raw.clone(), k) else { break };
            assert_eq!(k_core_filter(kept.clone(), k).unwrap(), kept);
            let set = pair_set(&kept);
            if let Some(p) = &prev {
                assert!(set.is_subset(p));
            }
            prev = Some(set);
        }
    }
}

#[test]
fn split_partitions_every_user() {
    for seed in 0..100 {
        let ds = random_dataset(50, 30, 1, 12, seed);
        let s = split_dataset(&ds, 0.2, 0.1, seed);
        for u in 0..ds.num_users() {
            let all = ds.user_positives(u);
            let (tr, va, te) = (s.train.positives(u), s.validation.positives(u), s.test.positives(u));
            let mut union: Vec<usize> = tr.iter().chain(va).chain(te).copied().collect();
            union.sort_unstable();
            assert_eq!(union, all, "seed {seed} user {u}");
            assert!(!tr.is_empty());
            let n = all.len();
            let n_test = ((0.2 * n as f64) - 1e-9).ceil() as usize;
            assert_eq!(te.len(), n_test.min(n - 1));
        }
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), ds.len());
    }
}

#[test]
fn bundled_toy_file_matches_generator() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy.tsv");
    let loaded = load_interactions(&path, Format::Tsv).unwrap();
    assert_eq!(loaded, toy_interactions());
    let ds = index_dataset(&k_core_filter(loaded, 10).unwrap()).unwrap();
    assert_eq!(ds.len(), 200);
}
