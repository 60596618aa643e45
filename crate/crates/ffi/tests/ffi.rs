use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use cwrec::losses::{row_loss, LossConfig, LossKind, PairScoreContext};
use cwrec_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = cw_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn toy_path() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/toy.tsv")
        .display()
        .to_string()
}

unsafe fn set(cfg: *mut CwConfig, k: &str, v: &str) {
    assert_eq!(
        cw_config_set(cfg, c(k).as_ptr(), c(v).as_ptr()),
        CwStatus::Ok,
        "{k}={v}"
    );
}

unsafe fn toy_config() -> *mut CwConfig {
    let cfg = cw_config_new();
    set(cfg, "data.path", &toy_path());
    set(cfg, "sampler.N", "8");
    set(cfg, "backbone.dim", "8");
    set(cfg, "schedule.epochs", "5");
    set(cfg, "schedule.batch_size", "32");
    cfg
}

fn scores(model: *const CwModel, user: usize, items: usize) -> Vec<f64> {
    let mut buf = vec![0.0; items];
    assert_eq!(
        unsafe { cw_model_score_user(model, user, buf.as_mut_ptr(), items) },
        CwStatus::Ok
    );
    buf
}

#[test]
fn train_score_evaluate_and_round_trip() {
    unsafe {
        let cfg = toy_config();
        let mut ds = ptr::null_mut();
        assert_eq!(cw_dataset_prepare(cfg, &mut ds), CwStatus::Ok);
        assert_eq!((cw_dataset_num_users(ds), cw_dataset_num_items(ds)), (20, 20));
        let (mut tr, mut va, mut te) = (0, 0, 0);
        assert_eq!(cw_dataset_split_sizes(ds, &mut tr, &mut va, &mut te), CwStatus::Ok);
        assert_eq!(tr + va + te, 200);
        assert!(te > 0 && va > 0);

        let mut model = ptr::null_mut();
        assert_eq!(cw_model_train(cfg, ds, &mut model), CwStatus::Ok);
        let before = scores(model, 3, 20);
        assert!(before.iter().all(|s| s.is_finite() && s.abs() <= 0.5 + 1e-12));

        let mut m = CwMetrics::default();
        assert_eq!(cw_model_evaluate(model, ds, 20, &mut m), CwStatus::Ok);
        assert_eq!(m.users_evaluated, 20);
        assert!((0.0..=1.0).contains(&m.ndcg) && (0.0..=1.0).contains(&m.recall));

        let dir = tempfile::tempdir().unwrap();
        for binary in [0, 1] {
            let path = c(&dir.path().join(format!("m{binary}.ckpt")).display().to_string());
            assert_eq!(cw_model_save(model, path.as_ptr(), binary), CwStatus::Ok);
            let mut loaded = ptr::null_mut();
            assert_eq!(cw_model_load(path.as_ptr(), ds, &mut loaded), CwStatus::Ok);
            assert_eq!(scores(loaded, 3, 20), before);
            let mut m2 = CwMetrics::default();
            assert_eq!(cw_model_evaluate(loaded, ds, 20, &mut m2), CwStatus::Ok);
            assert_eq!(m, m2);
            cw_model_free(loaded);
        }

        cw_model_free(model);
        cw_dataset_free(ds);
        cw_config_free(cfg);
    }
}

#[test]
fn row_loss_matches_the_library() {
    unsafe {
        let cfg = cw_config_new();
        set(cfg, "loss.kind", "CW");
        set(cfg, "loss.activation", "tanh");
        let negs = [0.2, -0.1, 0.35];
        let extra = [0.1, 0.4];
        let (mut v, mut gn, mut ge) = (0.0, [0.0; 3], [0.0; 2]);
        let st = cw_row_loss(
            cfg,
            0.05,
            negs.as_ptr(),
            3,
            extra.as_ptr(),
            2,
            0.1,
            &mut v,
            gn.as_mut_ptr(),
            ge.as_mut_ptr(),
        );
        assert_eq!(st, CwStatus::Ok);
        let mut lc = LossConfig::of_kind(LossKind::Cw);
        lc.activation = cwrec::losses::Activation::Tanh;
        let want = row_loss(&PairScoreContext::new(0.05, negs.to_vec(), extra.to_vec()), &lc, 0.1).unwrap();
        assert_eq!(v, want.value);
        assert_eq!(gn.to_vec(), want.grad_negs);
        assert_eq!(ge.to_vec(), want.grad_extra);

        // gradients are optional
        let st = cw_row_loss(
            cfg,
            0.05,
            negs.as_ptr(),
            3,
            extra.as_ptr(),
            2,
            0.1,
            &mut v,
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(st, CwStatus::Ok);
        cw_config_free(cfg);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let cfg = cw_config_new();
        assert_eq!(
            cw_config_set(cfg, c("loss.kind").as_ptr(), c("XYZ").as_ptr()),
            CwStatus::ConfigInvalid
        );
        assert!(last_error().starts_with("CONFIG_INVALID"));
        assert_eq!(
            cw_config_set(cfg, c("no.such.key").as_ptr(), c("1").as_ptr()),
            CwStatus::ConfigInvalid
        );
        assert_eq!(
            cw_config_set(ptr::null_mut(), c("loss.kind").as_ptr(), c("SL").as_ptr()),
            CwStatus::NullPointer
        );
        assert_eq!(cw_config_set(cfg, ptr::null(), c("SL").as_ptr()), CwStatus::NullPointer);

        let mut ds = ptr::null_mut();
        assert_eq!(
            cw_dataset_prepare(cfg, &mut ds),
            CwStatus::ConfigInvalid,
            "data.path unset"
        );
        set(cfg, "data.path", "/nonexistent/file.tsv");
        assert_eq!(cw_dataset_prepare(cfg, &mut ds), CwStatus::IoError);
        assert!(ds.is_null());

        let mut out = ptr::null_mut();
        assert_eq!(
            cw_config_load(c("/nonexistent.cfg").as_ptr(), &mut out),
            CwStatus::IoError
        );

        // BPR takes exactly one negative
        set(cfg, "loss.kind", "BPR");
        let negs = [0.1, 0.2];
        let mut v = 0.0;
        let st = cw_row_loss(
            cfg,
            0.0,
            negs.as_ptr(),
            2,
            ptr::null(),
            0,
            0.0,
            &mut v,
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(st, CwStatus::ConfigInvalid);
        let st = cw_row_loss(
            cfg,
            0.0,
            negs.as_ptr(),
            1,
            ptr::null(),
            0,
            1.5,
            &mut v,
            ptr::null_mut(),
            ptr::null_mut(),
        );
        assert_eq!(st, CwStatus::InvalidArgument);
        cw_config_free(cfg);

        let cfg = toy_config();
        assert_eq!(cw_dataset_prepare(cfg, &mut ds), CwStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(cw_model_train(cfg, ds, &mut model), CwStatus::Ok);
        let mut buf = vec![0.0; 5];
        assert_eq!(
            cw_model_score_user(model, 0, buf.as_mut_ptr(), 5),
            CwStatus::InvalidArgument
        );
        assert_eq!(
            cw_model_score_user(model, 99, buf.as_mut_ptr(), 20),
            CwStatus::InvalidArgument
        );
        let mut m = CwMetrics::default();
        assert_eq!(cw_model_evaluate(model, ds, 0, &mut m), CwStatus::InvalidArgument);

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.ckpt");
        std::fs::write(&bad, "not a checkpoint\n").unwrap();
        let mut loaded = ptr::null_mut();
        let st = cw_model_load(c(&bad.display().to_string()).as_ptr(), ds, &mut loaded);
        assert_eq!(st, CwStatus::CheckpointInvalid);

        cw_model_free(model);
        cw_dataset_free(ds);
        cw_config_free(cfg);
        // freeing NULL is a no-op
        cw_model_free(ptr::null_mut());
        cw_dataset_free(ptr::null_mut());
        cw_config_free(ptr::null_mut());
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(cw_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cwrec.h")).unwrap();
    for name in [
        "cw_last_error_message",
        "cw_version",
        "cw_config_new",
        "cw_config_load",
        "cw_config_set",
        "cw_config_free",
        "cw_dataset_prepare",
        "cw_dataset_num_users",
        "cw_dataset_num_items",
        "cw_dataset_split_sizes",
        "cw_dataset_free",
        "cw_model_train",
        "cw_model_score_user",
        "cw_model_save",
        "cw_model_load",
        "cw_model_evaluate",
        "cw_model_free",
        "cw_row_loss",
        "CW_STATUS_CONFIG_INVALID",
        "typedef struct CwModel CwModel;",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_example_compiles_against_the_header() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let Ok(status) = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(dir.join("include"))
        .arg(dir.join("examples/train_toy.c"))
        .status()
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    assert!(status.success());
}
