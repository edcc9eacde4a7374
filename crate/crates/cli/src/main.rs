use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adamve::agent::{evaluate, QFunction};
use adamve::approx::read_checkpoint;
use adamve::dp::MAX_DP_HORIZON;
use adamve::error_fn::ErrorFunction;
use adamve::harness::{
    dp_check, export_horizon_heatmap, horizon_csv, horizon_pgm, parse_policy, run_experiment,
    transfer_experiment, ExperimentConfig, TdDpSettings,
};
use adamve::models::DynamicsModel;
use adamve::rng::{stream, Stream};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adamve", version, about = "Adaptive model-based value expansion on FourRoom gridworlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        load_config(self.config.as_deref(), &self.overrides)
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
        config.set(k.trim(), v.trim())?;
    }
    Ok(config)
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write learning curves.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Greedy evaluation of a saved Q function.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Seed directory holding `q.ckpt`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Weighted-average-horizon map from a saved error function.
    Heatmap {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Seed directory holding `error.ckpt` (and `q.ckpt` for the greedy kind).
        #[arg(long)]
        run: PathBuf,
        /// Softmax temperature; the config's `tau` when omitted.
        #[arg(long)]
        tau: Option<f64>,
        /// Output directory; the run directory when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretrain on a source grid, then compare transferred and from-scratch runs on the target.
    Transfer {
        /// Config for the source grid; `--config`/`--set` describe the target.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Override one source config key; repeatable.
        #[arg(long = "set-source", value_name = "KEY=VALUE")]
        source_overrides: Vec<String>,
        #[command(flatten)]
        target: ConfigArgs,
        /// Keep training the transferred error function instead of freezing it.
        #[arg(long)]
        finetune: bool,
    },
    /// Exact DP value-error bound report, optionally with a TD comparison.
    DpCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `uniform` or `always-<action>`.
        #[arg(long, default_value = "uniform")]
        policy: String,
        /// Rollout horizon H, at most 10.
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        /// Also train a tabular error function by TD on a uniform-random buffer.
        #[arg(long)]
        td: bool,
        #[arg(long, default_value_t = 200_000)]
        td_updates: usize,
        /// Directory for bound_report.csv, bound_summary.txt and td_vs_dp.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

fn train(cfg: &ConfigArgs) -> Result<()> {
    let config = cfg.load()?;
    let outcome = run_experiment(&config)?;
    for (seed, r) in &outcome.runs {
        match r {
            Ok(rec) => println!(
                "seed {seed}: final return {:.3}, {} evaluations",
                rec.final_return(5),
                rec.rows.len()
            ),
            Err(e) => println!("seed {seed}: failed: {e}"),
        }
    }
    let failed = outcome.failures().len();
    if failed > 0 {
        bail!(
            "{failed} of {} seeds failed; see {}",
            outcome.runs.len(),
            config.output_dir.join("failures.txt").display()
        );
    }
    println!("results in {}", config.output_dir.display());
    Ok(())
}

fn eval(cfg: &ConfigArgs, run: &Path, episodes: usize, seed: u64) -> Result<()> {
    if episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let config = cfg.load()?;
    let spec = config.spec()?;
    let q = QFunction::from_checkpoint(&read_checkpoint(&run.join("q.ckpt"))?, config.agent.lr_q)?;
    let mut rng = stream(seed, Stream::Evaluation);
    let result = evaluate(&q.online, &spec, episodes, &mut rng)?;
    let returns: Vec<String> = result.returns.iter().map(f64::to_string).collect();
    println!("mean return {} over {episodes} episodes", result.mean);
    println!("returns {}", returns.join(" "));
    Ok(())
}

fn heatmap(cfg: &ConfigArgs, run: &Path, tau: Option<f64>, out: Option<&Path>) -> Result<()> {
    let config = cfg.load()?;
    let spec = config.spec()?;
    let errfn = ErrorFunction::from_checkpoint(&read_checkpoint(&run.join("error.ckpt"))?)?;
    let q_path = run.join("q.ckpt");
    let q = if q_path.exists() {
        Some(QFunction::from_checkpoint(&read_checkpoint(&q_path)?, config.agent.lr_q)?)
    } else {
        None
    };
    let kind = config.agent.reference;
    let map = export_horizon_heatmap(
        &spec,
        &errfn,
        Some(kind),
        q.as_ref().map(|q| &q.target),
        tau.unwrap_or(config.agent.tau),
    )?;
    let dir = out.unwrap_or(run);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("horizon.csv"), horizon_csv(&spec, &map))?;
    std::fs::write(dir.join("horizon.pgm"), horizon_pgm(&spec, &map, errfn.h_max()))?;
    println!("horizon map written to {}", dir.display());
    Ok(())
}

fn transfer(source: Option<&Path>, source_overrides: &[String], target: &ConfigArgs, finetune: bool) -> Result<()> {
    let target_cfg = target.load()?;
    let source_cfg = load_config(source, source_overrides)?;
    let outcome = transfer_experiment(&source_cfg, &target_cfg, finetune)?;
    for (variant, records) in &outcome.variants {
        let finals: Vec<String> = records.iter().map(|r| format!("{:.3}", r.final_return(5))).collect();
        println!("{variant}: final returns {}", finals.join(" "));
    }
    println!("results in {}", target_cfg.output_dir.display());
    Ok(())
}

fn dp(cfg: &ConfigArgs, policy: &str, horizon: usize, td: bool, td_updates: usize, out: &Path) -> Result<()> {
    let config = cfg.load()?;
    if horizon > MAX_DP_HORIZON {
        bail!("horizon {horizon} exceeds {MAX_DP_HORIZON}");
    }
    let spec = config.spec()?;
    let model = DynamicsModel::hand_crafted(config.agent.model, &spec)?;
    let policy = parse_policy(&spec, policy)?;
    let settings = TdDpSettings {
        h_max: horizon,
        gamma: config.agent.gamma,
        updates: td_updates,
        batch_size: config.agent.batch_size,
        seed: config.seeds.first().copied().unwrap_or(0),
        ..TdDpSettings::default()
    };
    let outcome = dp_check(&model, &policy, horizon, config.agent.gamma, td.then_some(&settings), out)?;
    println!("{}", outcome.report.summary());
    if let Some(c) = &outcome.comparison {
        println!("td vs dp: max abs diff {} (max value {})", c.max_abs_diff, c.max_value);
    }
    let hard = outcome.report.zero_error_failures().len();
    if hard > 0 {
        bail!("{hard} states with zero model error have nonzero value error");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg } => train(&cfg),
        Command::Eval { cfg, run, episodes, seed } => eval(&cfg, &run, episodes, seed),
        Command::Heatmap { cfg, run, tau, out } => heatmap(&cfg, &run, tau, out.as_deref()),
        Command::Transfer {
            source,
            source_overrides,
            target,
            finetune,
        } => transfer(source.as_deref(), &source_overrides, &target, finetune),
        Command::DpCheck {
            cfg,
            policy,
            horizon,
            td,
            td_updates,
            out,
        } => dp(&cfg, &policy, horizon, td, td_updates, &out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let reason = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {reason}");
            ExitCode::FAILURE
        }
    }
}
