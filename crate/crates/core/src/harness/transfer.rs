//! Model-error transfer between grids that share dynamics but not goals.
//!
//! Layout under the target's `output_dir`:
//! `source/seed_N/` (pretraining runs, each with `error.ckpt`), then
//! `t-adamve/`, `adamve/` and `dqn/`, each holding per-seed directories and
//! an `aggregate.csv`.

use std::fs;

use super::config::ExperimentConfig;
use super::parallel_map;
use super::record::{aggregate_csv, RunRecord};
use super::run::{run_seed, seed_dir, train_seed, write_run};
use crate::agent::Algorithm;
use crate::error::{Error, Result};

pub const VARIANTS: [&str; 3] = ["t-adamve", "adamve", "dqn"];

#[derive(Debug)]
pub struct TransferOutcome {
    /// `(variant, per-seed records)` in [`VARIANTS`] order.
    pub variants: Vec<(String, Vec<RunRecord>)>,
}

impl TransferOutcome {
    pub fn records(&self, variant: &str) -> Option<&[RunRecord]> {
        self.variants
            .iter()
            .find(|(v, _)| v == variant)
            .map(|(_, r)| r.as_slice())
    }
}

fn check_pair(source: &ExperimentConfig, target: &ExperimentConfig) -> Result<()> {
    source.validate()?;
    target.validate()?;
    let (s, t) = (source.spec()?, target.spec()?);
    if !s.same_dynamics(&t) {
        return Err(Error::Transfer(format!(
            "{} and {} do not share dynamics",
            source.env, target.env
        )));
    }
    if s.goal() == t.goal() {
        return Err(Error::Transfer("source and target share the goal".into()));
    }
    if source.agent.algorithm != Algorithm::AdaMve || target.agent.algorithm != Algorithm::AdaMve {
        return Err(Error::Transfer("transfer runs need the adamve algorithm".into()));
    }
    let (a, b) = (&source.agent, &target.agent);
    if a.reference != b.reference || a.h_max != b.h_max || a.approximator != b.approximator {
        return Err(Error::Transfer(
            "source and target disagree on reference policy, h_max or approximator".into(),
        ));
    }
    if a.model != b.model {
        return Err(Error::Transfer("source and target use different models".into()));
    }
    if source.seeds.len() != target.seeds.len() {
        return Err(Error::Transfer("source and target need the same number of seeds".into()));
    }
    Ok(())
}

/// Pretrains on `source`, then runs `target` with the transferred error
/// function (fine-tuned when `finetune`, frozen otherwise) next to
/// from-scratch AdaMVE and DQN baselines.
pub fn transfer_experiment(
    source: &ExperimentConfig,
    target: &ExperimentConfig,
    finetune: bool,
) -> Result<TransferOutcome> {
    check_pair(source, target)?;
    let root = target.output_dir.clone();
    fs::create_dir_all(&root)?;
    let pairs: Vec<(u64, u64)> = source.seeds.iter().copied().zip(target.seeds.iter().copied()).collect();
    let per_seed = parallel_map(&pairs, target.workers, |&(src_seed, tgt_seed)| -> Result<Vec<RunRecord>> {
        let mut src_cfg = source.clone();
        src_cfg.output_dir = root.join("source");
        src_cfg.save_checkpoints = true;
        let (agent, record) = train_seed(&src_cfg, src_seed)?;
        let src_dir = seed_dir(&src_cfg.output_dir, src_seed);
        write_run(&src_cfg, &agent, &record, &src_dir)?;

        let mut out = Vec::with_capacity(VARIANTS.len());
        for variant in VARIANTS {
            let mut cfg = target.clone();
            cfg.output_dir = root.join(variant);
            match variant {
                "t-adamve" => {
                    cfg.pretrained_error = Some(src_dir.join("error.ckpt"));
                    cfg.agent.freeze_error = !finetune;
                }
                "adamve" => cfg.pretrained_error = None,
                _ => {
                    cfg.pretrained_error = None;
                    cfg.agent.algorithm = Algorithm::Dqn;
                }
            }
            out.push(run_seed(&cfg, tgt_seed)?);
        }
        Ok(out)
    });
    let mut variants: Vec<(String, Vec<RunRecord>)> =
        VARIANTS.iter().map(|v| (v.to_string(), Vec::new())).collect();
    for result in per_seed {
        for (slot, record) in variants.iter_mut().zip(result?) {
            slot.1.push(record);
        }
    }
    for (variant, records) in &variants {
        let dir = root.join(variant);
        fs::write(dir.join("aggregate.csv"), aggregate_csv(records)?)?;
    }
    fs::write(root.join("source").join("config.txt"), source.to_text())?;
    fs::write(root.join("config.txt"), target.to_text())?;
    Ok(TransferOutcome { variants })
}
