mod common;

use common::{fd_max_rel_error, random_context, single_row_batch};
use cwrec::backbones::init_embeddings;
use cwrec::losses::{Activation, LossConfig, LossKind, SigmaForm};
use cwrec::sampling::PriorEstimate;

fn check(kind: LossKind, activation: Activation, sigma_form: SigmaForm, seeds: std::ops::Range<u64>) {
    let prior = PriorEstimate::constant(1, 0.1).unwrap();
    for seed in seeds {
        let (emb, batch) = random_context(seed);
        let cfg = LossConfig {
            kind,
            activation,
            sigma_form,
            tau: 0.2,
            tau2: 0.3,
            beta: 0.8,
            ..LossConfig::default()
        };
        let err = fd_max_rel_error(&emb, &batch, &cfg, &prior, 1e-5, 1e-7);
        assert!(err < 1e-4, "{kind} {activation} {sigma_form} seed {seed}: {err}");
    }
}

#[test]
fn softmax_family_matches_finite_differences() {
    for kind in [
        LossKind::Sl,
        LossKind::Bsl,
        LossKind::Psl,
        LossKind::Weighted,
        LossKind::Corrected,
        LossKind::Cw,
    ] {
        for act in Activation::ALL {
            check(kind, act, SigmaForm::ExpOfActivation, 0..10);
        }
    }
}

#[test]
fn raw_power_form_matches_finite_differences() {
    for kind in [LossKind::Psl, LossKind::Weighted, LossKind::Cw] {
        for act in [Activation::Exp, Activation::Tanh, Activation::Atan] {
            check(kind, act, SigmaForm::RawPower, 100..105);
        }
    }
}

#[test]
fn bpr_matches_finite_differences() {
    let prior = PriorEstimate::constant(1, 0.0).unwrap();
    for seed in 0..20 {
        let emb = init_embeddings(1, 2, 8, seed, 1.0);
        let cfg = LossConfig::of_kind(LossKind::Bpr);
        let err = fd_max_rel_error(&emb, &single_row_batch(1, 0), &cfg, &prior, 1e-5, 1e-7);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn multi_row_batches_with_repeated_items() {
    use cwrec::sampling::{TrainingBatch, TrainingRow};
    let prior = PriorEstimate::constant(2, 0.1).unwrap();
    let emb = init_embeddings(2, 5, 4, 9, 1.0);
    let batch = TrainingBatch {
        rows: vec![
            TrainingRow {
                user: 0,
                pos: 1,
                negs: vec![0, 2, 2, 4],
                extra_pos: vec![1, 3],
            },
            TrainingRow {
                user: 1,
                pos: 3,
                negs: vec![3, 1, 0, 4],
                extra_pos: vec![0, 0],
            },
        ],
        num_negatives: 4,
        num_extra: 2,
    };
    for kind in [
        LossKind::Sl,
        LossKind::Psl,
        LossKind::Weighted,
        LossKind::Corrected,
        LossKind::Cw,
    ] {
        let cfg = LossConfig {
            kind,
            tau: 0.3,
            ..LossConfig::default()
        };
        let err = fd_max_rel_error(&emb, &batch, &cfg, &prior, 1e-5, 1e-7);
        assert!(err < 1e-4, "{kind}: {err}");
    }
}
