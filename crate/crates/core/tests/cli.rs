use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cwrec::cli::ExperimentConfig;

fn toy() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/toy.tsv")
        .display()
        .to_string()
}

fn cwrec(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwrec"))
        .args(args)
        .env("CWREC_OUTPUT_DIR", out)
        .output()
        .unwrap()
}

fn quick<'a>(verb: &'a str, data: &'a str) -> Vec<&'a str> {
    vec![
        verb,
        "--data.path",
        data,
        "--sampler.N",
        "8",
        "--backbone.dim=16",
        "schedule.epochs=10",
        "--schedule.batch_size",
        "32",
    ]
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn run_writes_all_artifacts_reproducibly() {
    let data = toy();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = cwrec(&quick("run", &data), &a);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("recall@20="), "{stdout}");

    for f in ["config.resolved", "epochs.csv", "report.csv", "model.ckpt"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    let report = read(a.join("report.csv"));
    assert!(report.starts_with("user_id,recall,ndcg\n"));
    let all = report.lines().last().unwrap();
    let fields: Vec<&str> = all.split(',').collect();
    assert_eq!(fields[0], "ALL");
    for v in &fields[1..] {
        let x: f64 = v.parse().unwrap();
        assert!((0.0..=1.0).contains(&x));
    }
    let epochs = read(a.join("epochs.csv"));
    assert!(epochs.starts_with("epoch,train_loss,clamp_rate,val_recall@20,val_ndcg@20\n"));
    assert_eq!(epochs.lines().count(), 11);

    // the resolved config reproduces the run
    let resolved = ExperimentConfig::load(a.join("config.resolved")).unwrap();
    assert_eq!(resolved.data_path.as_deref(), Some(Path::new(&data)));

    let out = cwrec(&quick("run", &data), &b);
    assert!(out.status.success());
    assert_eq!(read(a.join("epochs.csv")), read(b.join("epochs.csv")));
    assert_eq!(read(a.join("report.csv")), read(b.join("report.csv")));

    // eval on the saved checkpoint reproduces the test report
    let ckpt = a.join("model.ckpt").display().to_string();
    let mut args = quick("eval", &data);
    args.extend(["--checkpoint", &ckpt]);
    let c = tmp.path().join("c");
    let out = cwrec(&args, &c);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), stdout);
    assert_eq!(read(c.join("report.csv")), read(a.join("report.csv")));
}

#[test]
fn invalid_config_exits_with_a_tag() {
    let tmp = tempfile::tempdir().unwrap();
    let data = toy();
    let mut args = quick("run", &data);
    args.extend(["--loss.kind", "NOPE"]);
    let out = cwrec(&args, tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("CONFIG_INVALID"));

    let out = cwrec(&["run", "--no.such.key", "1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("CONFIG_INVALID"));

    let out = cwrec(&["run", "--data.path", "/nonexistent.tsv"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("IO_ERROR"));
}

#[test]
fn flags_override_file_and_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# toy\ndata.path = {}\nsampler.N = 8\nschedule.epochs = 3\nloss.kind = SL\n",
            toy()
        ),
    )
    .unwrap();
    let flag_dir = tmp.path().join("flag");
    let env_dir = tmp.path().join("env");
    let cfg_s = cfg.display().to_string();
    let flag_s = flag_dir.display().to_string();
    let out = cwrec(
        &["run", "-c", &cfg_s, "--loss.kind", "CW", "--output.dir", &flag_s],
        &env_dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!env_dir.exists());
    let resolved = read(flag_dir.join("config.resolved"));
    assert!(resolved.contains("loss.kind = CW"));
    assert!(resolved.contains("schedule.epochs = 3"));

    let out = cwrec(&["run", "-c", &cfg_s], &env_dir);
    assert!(out.status.success());
    assert!(read(env_dir.join("config.resolved")).contains("loss.kind = SL"));
}

#[test]
fn grid_and_ablation_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = toy();
    let mut args = quick("grid", &data);
    args.extend(["--axis", "optim.lr=0.01,0.001", "--axis", "loss.kind=SL,CW"]);
    let out = cwrec(&args, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let board = read(tmp.path().join("leaderboard.csv"));
    assert!(board.starts_with("rank,cell,overrides,status,val_recall@20,val_ndcg@20\n"));
    assert_eq!(board.lines().count(), 5);
    assert!(tmp.path().join("best_report.csv").exists());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("best_cell="));

    let mut args = quick("ablate", &data);
    args.extend(["--axis", "loss_factor"]);
    let out = cwrec(&args, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = read(tmp.path().join("ablation_loss_factor.csv"));
    assert!(table.starts_with("setting,recall@20,ndcg@20\n"));
    assert_eq!(table.lines().count(), 6);
}
