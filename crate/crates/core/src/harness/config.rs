//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors. The same
//! keys are accepted as command-line overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agent::{AgentConfig, Algorithm, Sml};
use crate::env::GridSpec;
use crate::error::{Error, Result};
use crate::models::ModelKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvName {
    FourRoom,
    FourRoom2,
}

impl EnvName {
    pub fn spec(self) -> GridSpec {
        match self {
            EnvName::FourRoom => GridSpec::four_room(),
            EnvName::FourRoom2 => GridSpec::four_room2(),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvName::FourRoom => "fourroom",
            EnvName::FourRoom2 => "fourroom2",
        })
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fourroom" => Ok(EnvName::FourRoom),
            "fourroom2" => Ok(EnvName::FourRoom2),
            other => Err(Error::Config(format!("unknown env `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvName,
    /// Replaces the named environment's geometry when set.
    pub layout: Option<PathBuf>,
    pub agent: AgentConfig,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub output_dir: PathBuf,
    pub pretrained_error: Option<PathBuf>,
    pub workers: usize,
    pub save_checkpoints: bool,
    /// Selective-model-learning settings, applied when `sml` is on.
    pub sml: Sml,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvName::FourRoom,
            layout: None,
            agent: AgentConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            total_steps: 200_000,
            eval_every: 2000,
            eval_episodes: 10,
            output_dir: PathBuf::from("runs"),
            pretrained_error: None,
            workers: 1,
            save_checkpoints: true,
            sml: Sml {
                h_sml: 1,
                percent: 50.0,
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn optional_path(value: &str) -> Option<PathBuf> {
    match value {
        "" | "none" => None,
        v => Some(PathBuf::from(v)),
    }
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "env",
        "layout",
        "model",
        "algorithm",
        "reference_policy",
        "approximator",
        "seeds",
        "total_steps",
        "eval_every",
        "eval_episodes",
        "output_dir",
        "pretrained_error",
        "freeze_error",
        "workers",
        "save_checkpoints",
        "epsilon_greedy",
        "discount",
        "tau",
        "batch_size",
        "optimizer",
        "lr_q",
        "lr_error",
        "lr_error_tabular",
        "lr_model",
        "replay_init",
        "replay_size",
        "target_update_interval",
        "target_mix",
        "q_hidden",
        "error_hidden",
        "model_hidden",
        "nonlinearity",
        "h_max",
        "sml",
        "sml_h",
        "sml_percent",
    ];

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let a = &mut self.agent;
        match key {
            "env" => self.env = value.parse()?,
            "layout" => self.layout = optional_path(value),
            "model" => a.model = value.parse()?,
            "algorithm" => a.algorithm = value.parse()?,
            "reference_policy" => a.reference = value.parse()?,
            "approximator" => a.approximator = value.parse()?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "pretrained_error" => self.pretrained_error = optional_path(value),
            "freeze_error" => a.freeze_error = parse_bool(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "save_checkpoints" => self.save_checkpoints = parse_bool(key, value)?,
            "epsilon_greedy" => a.epsilon = parse(key, value)?,
            "discount" => a.gamma = parse(key, value)?,
            "tau" => a.tau = parse(key, value)?,
            "batch_size" => a.batch_size = parse(key, value)?,
            "optimizer" => {
                if !value.eq_ignore_ascii_case("adam") {
                    return Err(Error::Config(format!("only the adam optimizer is supported, got `{value}`")));
                }
            }
            "lr_q" => a.lr_q = parse(key, value)?,
            "lr_error" => a.lr_error = parse(key, value)?,
            "lr_error_tabular" => a.lr_error_tabular = parse(key, value)?,
            "lr_model" => a.lr_model = parse(key, value)?,
            "replay_init" => a.warmup = parse(key, value)?,
            "replay_size" => a.capacity = parse(key, value)?,
            "target_update_interval" => a.target_interval = parse(key, value)?,
            "target_mix" => a.mix = parse(key, value)?,
            "q_hidden" => a.hidden = parse_list(key, value)?,
            "error_hidden" => a.error_hidden = parse_list(key, value)?,
            "model_hidden" => a.model_hidden = parse_list(key, value)?,
            "nonlinearity" => {
                if !value.eq_ignore_ascii_case("relu") {
                    return Err(Error::Config(format!("only relu is supported, got `{value}`")));
                }
            }
            "h_max" => a.h_max = parse(key, value)?,
            "sml" => a.sml = parse_bool(key, value)?.then_some(self.sml),
            "sml_h" | "sml_percent" => {
                if key == "sml_h" {
                    self.sml.h_sml = parse(key, value)?;
                } else {
                    self.sml.percent = parse(key, value)?;
                }
                if a.sml.is_some() {
                    a.sml = Some(self.sml);
                }
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in [`Self::KEYS`] order.
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let sml = a.sml.unwrap_or(self.sml);
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let mut out = String::new();
        for key in Self::KEYS {
            let value = match *key {
                "env" => self.env.to_string(),
                "layout" => path(&self.layout),
                "model" => a.model.to_string(),
                "algorithm" => a.algorithm.to_string(),
                "reference_policy" => a.reference.to_string(),
                "approximator" => a.approximator.to_string(),
                "seeds" => join(&self.seeds),
                "total_steps" => self.total_steps.to_string(),
                "eval_every" => self.eval_every.to_string(),
                "eval_episodes" => self.eval_episodes.to_string(),
                "output_dir" => self.output_dir.display().to_string(),
                "pretrained_error" => path(&self.pretrained_error),
                "freeze_error" => a.freeze_error.to_string(),
                "workers" => self.workers.to_string(),
                "save_checkpoints" => self.save_checkpoints.to_string(),
                "epsilon_greedy" => a.epsilon.to_string(),
                "discount" => a.gamma.to_string(),
                "tau" => a.tau.to_string(),
                "batch_size" => a.batch_size.to_string(),
                "optimizer" => "adam".into(),
                "lr_q" => a.lr_q.to_string(),
                "lr_error" => a.lr_error.to_string(),
                "lr_error_tabular" => a.lr_error_tabular.to_string(),
                "lr_model" => a.lr_model.to_string(),
                "replay_init" => a.warmup.to_string(),
                "replay_size" => a.capacity.to_string(),
                "target_update_interval" => a.target_interval.to_string(),
                "target_mix" => a.mix.to_string(),
                "q_hidden" => join(&a.hidden),
                "error_hidden" => join(&a.error_hidden),
                "model_hidden" => join(&a.model_hidden),
                "nonlinearity" => "relu".into(),
                "h_max" => a.h_max.to_string(),
                "sml" => a.sml.is_some().to_string(),
                "sml_h" => sml.h_sml.to_string(),
                "sml_percent" => sml.percent.to_string(),
                _ => unreachable!("every key is listed"),
            };
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// The grid this experiment runs on.
    pub fn spec(&self) -> Result<GridSpec> {
        match &self.layout {
            None => Ok(self.env.spec()),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("layout {}: {e}", path.display())))?;
                GridSpec::from_layout(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 || self.workers == 0 {
            return Err(Error::Config(
                "eval_every, eval_episodes and workers must be positive".into(),
            ));
        }
        if self.total_steps < self.eval_every {
            return Err(Error::Config(format!(
                "total_steps {} is shorter than one evaluation interval ({})",
                self.total_steps, self.eval_every
            )));
        }
        for p in self.layout.iter().chain(&self.pretrained_error) {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.pretrained_error.is_some() && !self.agent.needs_error_fn() {
            return Err(Error::Config(
                "pretrained_error needs an algorithm that uses model errors".into(),
            ));
        }
        if self.agent.model == ModelKind::Learned && self.agent.model_hidden.is_empty() {
            return Err(Error::Config("the learned model needs hidden layers".into()));
        }
        if matches!(self.agent.algorithm, Algorithm::Mve { .. }) && self.agent.h_max == 0 {
            return Err(Error::Config("h_max must be positive".into()));
        }
        Ok(())
    }
}
