//! Experiment runner behind the `cwrec` binary.
//!
//! Artifacts written by [`run_experiment`] into `output.dir`:
//!
//! | file              | contents                                                   |
//! |-------------------|------------------------------------------------------------|
//! | `config.resolved` | every config key with its resolved value                   |
//! | `epochs.csv`      | `epoch,train_loss,clamp_rate,val_recall@K,val_ndcg@K`      |
//! | `report.csv`      | `user_id,recall,ndcg` on test, then an `ALL` row of means  |
//! | `model.ckpt`      | checkpoint of the selected model                           |
//!
//! [`run_grid`] writes `leaderboard.csv`
//! (`rank,cell,overrides,status,val_recall@K,val_ndcg@K`) and
//! `best_report.csv`; [`run_ablation`] writes `ablation_<axis>.csv`
//! (`setting,recall@K,ndcg@K`).

mod config;

use std::path::{Path, PathBuf};

pub use config::{split_assignment, ExperimentConfig, KEYS};

use crate::backbones::{load_checkpoint, save_checkpoint, Checkpoint, Model};
use crate::data::{
    filter_ratings, index_dataset, k_core_filter, load_interactions, split_dataset, InteractionDataset, SplitDataset,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, RankingReport};
use crate::optim::{train, validate_model, write_epoch_log, TrainOutcome};
use crate::sampling::{estimate_prior, PriorEstimate, PriorMode};

/// Environment variable overriding `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "CWREC_OUTPUT_DIR";

/// Loads, filters and splits the configured data.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<(InteractionDataset, SplitDataset)> {
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| Error::Config("data.path is required".into()))?;
    let raw = load_interactions(path, cfg.data_format)?;
    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    let raw = filter_ratings(raw, cfg.min_rating);
    let raw = k_core_filter(raw, cfg.k_core)?;
    let ds = index_dataset(&raw)?;
    let split = split_dataset(&ds, cfg.test_frac, cfg.val_frac, cfg.split_seed);
    Ok((ds, split))
}

pub fn prior_for(cfg: &ExperimentConfig, split: &SplitDataset) -> Result<PriorEstimate> {
    let constant = (cfg.prior_mode == PriorMode::Constant).then_some(cfg.prior_constant);
    estimate_prior(&split.train, cfg.prior_mode, constant)
}

/// Test report with train and validation pairs masked.
pub fn test_report(model: &Model, split: &SplitDataset, k: usize) -> Result<RankingReport> {
    evaluate(&model.snapshot()?, &split.test, &split.train_and_validation(), k)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub validation: Option<RankingReport>,
    pub test: Option<RankingReport>,
    pub outcome: TrainOutcome,
}

impl RunSummary {
    pub fn val_ndcg(&self) -> Option<f64> {
        self.validation
            .as_ref()
            .filter(|r| r.users_evaluated > 0)
            .map(|r| r.mean_ndcg)
    }
}

/// Trains on prepared data and writes the artifacts; the test report is
/// only computed when `with_test` is set.
pub fn run_prepared(
    cfg: &ExperimentConfig,
    ds: &InteractionDataset,
    split: &SplitDataset,
    with_test: bool,
) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    write_file(&dir.join("config.resolved"), &cfg.to_resolved_string())?;

    let prior = prior_for(cfg, split)?;
    let outcome = train(split, &cfg.train_config(), &prior, cfg.train_seed)?;

    let log_path = dir.join("epochs.csv");
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    write_epoch_log(std::io::BufWriter::new(file), &outcome.log, cfg.eval_k)?;

    let validation = if split.validation.is_empty() {
        None
    } else {
        Some(validate_model(&outcome.model, split, cfg.eval_k)?)
    };
    let test = if with_test {
        let report = test_report(&outcome.model, split, cfg.eval_k)?;
        report.save_csv(dir.join("report.csv"), Some(&ds.users))?;
        Some(report)
    } else {
        None
    };
    save_checkpoint(
        dir.join("model.ckpt"),
        &Checkpoint::of_model(&outcome.model),
        cfg.checkpoint_format,
    )?;
    Ok(RunSummary {
        validation,
        test,
        outcome,
    })
}

/// Full pipeline: data, training, test evaluation, artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let (ds, split) = prepare_data(cfg)?;
    run_prepared(cfg, &ds, &split, true)
}

/// Evaluates a saved checkpoint on the configured test split.
pub fn run_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<RankingReport> {
    let (ds, split) = prepare_data(cfg)?;
    let model = load_checkpoint(checkpoint)?.into_model(&split.train)?;
    let report = test_report(&model, &split, cfg.eval_k)?;
    create_dir(&cfg.output_dir)?;
    report.save_csv(cfg.output_dir.join("report.csv"), Some(&ds.users))?;
    Ok(report)
}

/// One axis of a grid: a config key and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl GridAxis {
    /// Parses `key=v1,v2,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let (key, values) = split_assignment(s)?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(Error::Config(format!("empty value in grid axis `{s}`")));
        }
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        Ok(Self { key, values })
    }
}

/// Default grid over learning rate and weight decay.
pub fn default_grid() -> Vec<GridAxis> {
    vec![
        GridAxis {
            key: "optim.lr".into(),
            values: vec!["0.001".into(), "0.0005".into(), "0.0001".into()],
        },
        GridAxis {
            key: "optim.wd".into(),
            values: vec!["0".into(), "0.000001".into(), "0.0001".into()],
        },
    ]
}

/// Cartesian product of the axes, first axis slowest.
pub fn grid_cells(axes: &[GridAxis]) -> Vec<Vec<(String, String)>> {
    let mut cells = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                axis.values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((axis.key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub cell: usize,
    pub overrides: Vec<(String, String)>,
    /// `ok` or the error tag of a failed cell.
    pub status: String,
    pub val_recall: Option<f64>,
    pub val_ndcg: Option<f64>,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Sorted by validation NDCG, best first; failed cells last.
    pub leaderboard: Vec<GridRow>,
    /// Test report of the best cell.
    pub best_test: Option<RankingReport>,
}

fn format_overrides(o: &[(String, String)]) -> String {
    o.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// Runs every grid cell in its own subdirectory, ranks the cells by
/// validation NDCG@K and evaluates the best one on test.
pub fn run_grid(cfg: &ExperimentConfig, axes: &[GridAxis]) -> Result<GridResult> {
    if axes.is_empty() || axes.iter().any(|a| a.values.is_empty()) {
        return Err(Error::Config("grid must have at least one value per axis".into()));
    }
    let (ds, split) = prepare_data(cfg)?;
    create_dir(&cfg.output_dir)?;
    let mut rows = Vec::new();
    for (idx, overrides) in grid_cells(axes).into_iter().enumerate() {
        let dir = cfg.output_dir.join(format!("cell_{idx:03}"));
        let mut cell_cfg = cfg.clone();
        let res = cell_cfg.apply_all(&overrides).and_then(|_| {
            cell_cfg.output_dir = dir.clone();
            run_prepared(&cell_cfg, &ds, &split, false)
        });
        let row = match res {
            Ok(summary) => GridRow {
                cell: idx,
                overrides,
                status: "ok".into(),
                val_recall: summary.validation.as_ref().map(|r| r.mean_recall),
                val_ndcg: summary.validation.as_ref().map(|r| r.mean_ndcg),
                dir,
            },
            Err(e) => GridRow {
                cell: idx,
                overrides,
                status: e.tag().into(),
                val_recall: None,
                val_ndcg: None,
                dir,
            },
        };
        rows.push(row);
    }
    // stable: ties keep grid order
    rows.sort_by(|a, b| match (a.val_ndcg, b.val_ndcg) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });

    let path = cfg.output_dir.join("leaderboard.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let k = cfg.eval_k;
    w.write_record([
        "rank".to_string(),
        "cell".to_string(),
        "overrides".to_string(),
        "status".to_string(),
        format!("val_recall@{k}"),
        format!("val_ndcg@{k}"),
    ])?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for (rank, r) in rows.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            r.cell.to_string(),
            format_overrides(&r.overrides),
            r.status.clone(),
            opt(r.val_recall),
            opt(r.val_ndcg),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let best_test = match rows.first().filter(|r| r.status == "ok") {
        Some(best) => {
            let model = load_checkpoint(best.dir.join("model.ckpt"))?.into_model(&split.train)?;
            let report = test_report(&model, &split, cfg.eval_k)?;
            report.save_csv(cfg.output_dir.join("best_report.csv"), Some(&ds.users))?;
            Some(report)
        }
        None => None,
    };
    Ok(GridResult {
        leaderboard: rows,
        best_test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    TauPlus,
    PosCount,
    Beta,
    LossFactor,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau_plus" => Ok(AblationAxis::TauPlus),
            "pos_count" => Ok(AblationAxis::PosCount),
            "beta" => Ok(AblationAxis::Beta),
            "loss_factor" => Ok(AblationAxis::LossFactor),
            other => Err(Error::Config(format!("unknown ablation axis `{other}`"))),
        }
    }
}

impl std::fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationAxis::TauPlus => "tau_plus",
            AblationAxis::PosCount => "pos_count",
            AblationAxis::Beta => "beta",
            AblationAxis::LossFactor => "loss_factor",
        })
    }
}

/// Settings of an axis as (label, overrides).
pub fn ablation_settings(axis: AblationAxis) -> Vec<(String, Vec<(String, String)>)> {
    let one = |label: String, key: &str, value: String| (label, vec![(key.to_string(), value)]);
    match axis {
        AblationAxis::TauPlus => {
            let mut v: Vec<_> = (5..=12)
                .map(|c| {
                    let t = format!("0.{c:02}");
                    (
                        t.clone(),
                        vec![
                            ("prior.mode".to_string(), "constant".to_string()),
                            ("prior.constant".to_string(), t),
                        ],
                    )
                })
                .collect();
            v.push(one("pop.".into(), "prior.mode", "popularity".into()));
            v
        }
        AblationAxis::PosCount => (1..=8)
            .map(|m| one(m.to_string(), "sampler.M", m.to_string()))
            .collect(),
        AblationAxis::Beta => ["0.2", "0.4", "0.6", "0.8", "1.0", "1.2"]
            .iter()
            .map(|b| one(b.to_string(), "loss.beta", b.to_string()))
            .collect(),
        AblationAxis::LossFactor => ["SL", "PSL", "L_C", "L_W", "CW"]
            .iter()
            .map(|k| one(k.to_string(), "loss.kind", k.to_string()))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub setting: String,
    /// `None` for a failed setting.
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
}

/// Trains one model per axis setting and reports test metrics.
pub fn run_ablation(cfg: &ExperimentConfig, axis: AblationAxis) -> Result<Vec<AblationRow>> {
    let (ds, split) = prepare_data(cfg)?;
    create_dir(&cfg.output_dir)?;
    let mut rows = Vec::new();
    for (idx, (label, overrides)) in ablation_settings(axis).into_iter().enumerate() {
        let mut c = cfg.clone();
        let res = c.apply_all(&overrides).and_then(|_| {
            c.output_dir = cfg.output_dir.join(format!("{axis}_{idx:02}"));
            run_prepared(&c, &ds, &split, true)
        });
        let test = res.ok().and_then(|s| s.test);
        rows.push(AblationRow {
            setting: label,
            recall: test.as_ref().map(|r| r.mean_recall),
            ndcg: test.as_ref().map(|r| r.mean_ndcg),
        });
    }
    let path = cfg.output_dir.join(format!("ablation_{axis}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    let k = cfg.eval_k;
    w.write_record(["setting".to_string(), format!("recall@{k}"), format!("ndcg@{k}")])?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for r in &rows {
        w.write_record([r.setting.clone(), opt(r.recall), opt(r.ndcg)])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_product_order() {
        let axes = [
            GridAxis::parse("optim.lr=1,2").unwrap(),
            GridAxis::parse("loss.tau=a,b").unwrap(),
        ];
        let cells = grid_cells(&axes);
        assert_eq!(cells.len(), 4);
        assert_eq!(
            cells[1],
            vec![("optim.lr".into(), "1".into()), ("loss.tau".into(), "b".into())]
        );
    }

    #[test]
    fn grid_axis_rejects_unknown_key() {
        assert!(GridAxis::parse("optim.lrr=1").is_err());
        assert!(GridAxis::parse("optim.lr=1,,2").is_err());
    }

    #[test]
    fn ablation_axis_sizes() {
        assert_eq!(ablation_settings(AblationAxis::TauPlus).len(), 9);
        assert_eq!(ablation_settings(AblationAxis::TauPlus).last().unwrap().0, "pop.");
        assert_eq!(ablation_settings(AblationAxis::PosCount).len(), 8);
        assert_eq!(ablation_settings(AblationAxis::LossFactor).len(), 5);
    }
}
