use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::heatmap::{horizon_csv, horizon_pgm};
use super::parallel_map;
use super::record::{aggregate_csv, EvalRow, RunRecord};
use crate::agent::Agent;
use crate::approx::{read_checkpoint, write_checkpoint};
use crate::env::GridSpec;
use crate::error::{Error, Result};
use crate::error_fn::ErrorFunction;

/// Builds the agent for one seed, loading a pretrained error function if the
/// config names one.
pub fn build_agent(config: &ExperimentConfig, spec: &GridSpec, seed: u64) -> Result<Agent> {
    let mut agent = Agent::new(config.agent.clone(), spec, seed)?;
    if let Some(path) = &config.pretrained_error {
        let errfn = ErrorFunction::from_checkpoint(&read_checkpoint(path)?)?;
        agent.set_error_fn(errfn)?;
    }
    Ok(agent)
}

fn eval_row(agent: &mut Agent, episodes: usize) -> Result<EvalRow> {
    let eval = agent.evaluate(episodes)?;
    let mean_errors = agent.mean_state_errors()?;
    let map = agent.horizon_map()?;
    let open: Vec<f64> = map.iter().flatten().copied().collect();
    let mean_h_bar = if agent.error_fn().is_some() && !open.is_empty() {
        open.iter().sum::<f64>() / open.len() as f64
    } else {
        f64::NAN
    };
    Ok(EvalRow {
        env_step: agent.steps(),
        mean_return: eval.mean,
        returns: eval.returns,
        mean_h_bar,
        mean_errors,
    })
}

/// Trains one seed in memory and returns the final agent with its curve.
pub fn train_seed(config: &ExperimentConfig, seed: u64) -> Result<(Agent, RunRecord)> {
    let spec = config.spec()?;
    let mut agent = build_agent(config, &spec, seed)?;
    let mut record = RunRecord::default();
    for step in 1..=config.total_steps {
        agent.train_step()?;
        if step % config.eval_every == 0 {
            record.push(eval_row(&mut agent, config.eval_episodes)?)?;
        }
    }
    Ok((agent, record))
}

pub fn seed_dir(output: &Path, seed: u64) -> PathBuf {
    output.join(format!("seed_{seed}"))
}

/// Writes a trained run's files into `dir`.
pub fn write_run(config: &ExperimentConfig, agent: &Agent, record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("learning_curve.csv"), record.to_csv())?;
    if config.save_checkpoints {
        write_checkpoint(&dir.join("q.ckpt"), &agent.q().to_checkpoint())?;
        if let Some(errfn) = agent.error_fn() {
            write_checkpoint(&dir.join("error.ckpt"), &errfn.to_checkpoint())?;
        }
    }
    if let Some(errfn) = agent.error_fn() {
        let map = agent.horizon_map()?;
        fs::write(dir.join("horizon.csv"), horizon_csv(agent.spec(), &map))?;
        fs::write(dir.join("horizon.pgm"), horizon_pgm(agent.spec(), &map, errfn.h_max()))?;
    }
    Ok(())
}

pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let (agent, record) = train_seed(config, seed)?;
    write_run(config, &agent, &record, &seed_dir(&config.output_dir, seed))?;
    Ok(record)
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<(u64, Result<RunRecord>)>,
}

impl ExperimentOutcome {
    pub fn records(&self) -> Vec<&RunRecord> {
        self.runs.iter().filter_map(|(_, r)| r.as_ref().ok()).collect()
    }

    pub fn failures(&self) -> Vec<(u64, String)> {
        self.runs
            .iter()
            .filter_map(|(s, r)| r.as_ref().err().map(|e| (*s, e.to_string())))
            .collect()
    }
}

/// Runs every seed (up to `workers` at once), then writes `config.txt`,
/// `aggregate.csv` and, if any seed failed, `failures.txt`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join("config.txt"), config.to_text())?;
    let results = parallel_map(&config.seeds, config.workers, |&seed| run_seed(config, seed));
    let outcome = ExperimentOutcome {
        runs: config.seeds.iter().copied().zip(results).collect(),
    };
    let failures = outcome.failures();
    if !failures.is_empty() {
        let text: String = failures
            .iter()
            .map(|(s, e)| format!("seed {s}: {e}\n"))
            .collect();
        fs::write(config.output_dir.join("failures.txt"), text)?;
    }
    let records: Vec<RunRecord> = outcome.records().into_iter().cloned().collect();
    if records.is_empty() {
        return Err(Error::Config(format!(
            "every seed failed; first: {}",
            failures.first().map_or("unknown", |f| f.1.as_str())
        )));
    }
    fs::write(config.output_dir.join("aggregate.csv"), aggregate_csv(&records)?)?;
    Ok(outcome)
}
