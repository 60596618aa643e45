use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cwrec::cli::{
    default_grid, run_ablation, run_eval, run_experiment, run_grid, split_assignment, AblationAxis, ExperimentConfig,
    GridAxis, OUTPUT_DIR_ENV,
};
use cwrec::{Error, Result};

/// Train and evaluate implicit-feedback recommenders.
///
/// Any config key can be overridden as `--dotted.key value`,
/// `--dotted.key=value` or `dotted.key=value`. Verb options may appear
/// before or among the overrides.
#[derive(Parser)]
#[command(name = "cwrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and evaluate it on test.
    Run(Common),
    /// Grid search ranked by validation NDCG.
    Grid {
        /// Axis as `key=v1,v2,...`; repeatable. Defaults to an lr × wd grid.
        #[arg(long = "axis", value_name = "KEY=VALUES")]
        axes: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// One run per setting of an ablation axis.
    Ablate {
        /// tau_plus, pos_count, beta or loss_factor.
        #[arg(long)]
        axis: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a saved checkpoint on the configured test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Config overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

/// Options that belong to the verb rather than the config. clap stops
/// parsing them once the override list starts, so they are picked up here.
const VERB_OPTIONS: [&str; 3] = ["axis", "checkpoint", "config"];

struct Resolved {
    cfg: ExperimentConfig,
    /// Verb options found among the overrides, in order.
    verb: Vec<(String, String)>,
}

impl Resolved {
    fn all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> {
        self.verb
            .iter()
            .filter(move |(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    fn last<'a>(&'a self, name: &'a str) -> Option<&'a str> {
        self.all(name).last()
    }
}

fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if arg == "-c" {
            let value = it.next().ok_or_else(|| Error::Config("missing value for -c".into()))?;
            out.push(("config".to_string(), value.clone()));
            continue;
        }
        let body = arg.strip_prefix("--").unwrap_or(arg);
        if body.contains('=') {
            out.push(split_assignment(body)?);
        } else if arg.starts_with("--") {
            let value = it
                .next()
                .ok_or_else(|| Error::Config(format!("missing value for {arg}")))?;
            out.push((body.to_string(), value.clone()));
        } else {
            return Err(Error::Config(format!("unexpected argument `{arg}`")));
        }
    }
    Ok(out)
}

fn resolve(common: &Common) -> Result<Resolved> {
    let (verb, overrides): (Vec<_>, Vec<_>) = parse_overrides(&common.overrides)?
        .into_iter()
        .partition(|(k, _)| VERB_OPTIONS.contains(&k.as_str()));
    let file = verb
        .iter()
        .rev()
        .find(|(k, _)| k == "config")
        .map(|(_, v)| PathBuf::from(v))
        .or_else(|| common.config.clone());
    let mut cfg = match file {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.output_dir = PathBuf::from(dir);
        }
    }
    cfg.apply_all(&overrides)?;
    cfg.validate()?;
    Ok(Resolved { cfg, verb })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let r = resolve(&common)?;
            if let Some((k, _)) = r.verb.iter().find(|(k, _)| k != "config") {
                return Err(Error::Config(format!("`--{k}` is not an option of run")));
            }
            let cfg = r.cfg;
            let summary = run_experiment(&cfg)?;
            if let Some(report) = &summary.test {
                println!("{}", report.summary_line());
            }
        }
        Command::Grid { mut axes, common } => {
            let r = resolve(&common)?;
            axes.extend(r.all("axis").map(str::to_string));
            let cfg = r.cfg;
            let axes = if axes.is_empty() {
                default_grid()
            } else {
                axes.iter().map(|a| GridAxis::parse(a)).collect::<Result<_>>()?
            };
            let result = run_grid(&cfg, &axes)?;
            if let Some(best) = result.leaderboard.first() {
                let overrides: Vec<String> = best.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("best_cell={} {}", best.cell, overrides.join(" "));
            }
            if let Some(report) = &result.best_test {
                println!("{}", report.summary_line());
            }
        }
        Command::Ablate { axis, common } => {
            let r = resolve(&common)?;
            let axis: AblationAxis = r
                .last("axis")
                .map(str::to_string)
                .or(axis)
                .ok_or_else(|| Error::Config("ablate needs --axis".into()))?
                .parse()?;
            let cfg = r.cfg;
            for row in run_ablation(&cfg, axis)? {
                let fmt = |x: Option<f64>| x.map_or_else(|| "failed".to_string(), |v| v.to_string());
                println!(
                    "setting={} recall@{k}={} ndcg@{k}={}",
                    row.setting,
                    fmt(row.recall),
                    fmt(row.ndcg),
                    k = cfg.eval_k
                );
            }
        }
        Command::Eval { checkpoint, common } => {
            let r = resolve(&common)?;
            let checkpoint = r
                .last("checkpoint")
                .map(PathBuf::from)
                .or(checkpoint)
                .ok_or_else(|| Error::Config("eval needs --checkpoint".into()))?;
            println!("{}", run_eval(&r.cfg, &checkpoint)?.summary_line());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.tag());
            ExitCode::FAILURE
        }
    }
}
