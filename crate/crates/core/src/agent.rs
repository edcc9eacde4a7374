//! DQN, fixed-horizon MVE and AdaMVE training loop.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::approx::{
    polyak_update, Approximator, Checkpoint, HeadTarget, Optimizer, ReplayBuffer, Transition,
    DEFAULT_CAPACITY, DEFAULT_HIDDEN, DEFAULT_WARMUP,
};
use crate::env::{Action, GridEnv, GridSpec, GridState};
use crate::error::{Error, Result};
use crate::error_fn::{ErrorFunction, ReferencePolicy};
use crate::expansion::{horizon_weights_into, rollout_values_into, weighted_avg_horizon};
use crate::models::{select_with_error_fn, DynamicsModel, LearnedModel, ModelKind, Point};
use crate::rng::{Rng, RunRngs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Bootstrap with `max_a Qbar(s', a)`.
    Dqn,
    /// Bootstrap with the single `horizon`-step expanded value.
    Mve { horizon: usize },
    /// Bootstrap with the unweighted mean of all expanded values `0..=h_max`.
    UniformMve,
    /// Bootstrap with the error-weighted mixture of expanded values.
    AdaMve,
}

impl Algorithm {
    pub fn uses_model(self) -> bool {
        !matches!(self, Algorithm::Dqn)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Dqn => f.write_str("dqn"),
            Algorithm::Mve { horizon } => write!(f, "mve{horizon}"),
            Algorithm::UniformMve => f.write_str("uniform-mve"),
            Algorithm::AdaMve => f.write_str("adamve"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "dqn" => Ok(Algorithm::Dqn),
            "adamve" | "ada" => Ok(Algorithm::AdaMve),
            "uniform-mve" | "uniform" => Ok(Algorithm::UniformMve),
            _ => {
                let digits = lower
                    .strip_prefix("mve")
                    .map(|d| d.trim_start_matches(['(', '_', 'h']).trim_end_matches(')'));
                match digits.and_then(|d| d.parse::<usize>().ok()) {
                    Some(horizon) if horizon >= 1 => Ok(Algorithm::Mve { horizon }),
                    _ => Err(Error::InvalidArgument(format!("unknown algorithm `{s}`"))),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ApproxKind {
    Tabular,
    Mlp,
}

impl FromStr for ApproxKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tabular" => Ok(ApproxKind::Tabular),
            "mlp" => Ok(ApproxKind::Mlp),
            other => Err(Error::InvalidArgument(format!(
                "unknown approximator `{other}`"
            ))),
        }
    }
}

impl fmt::Display for ApproxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApproxKind::Tabular => "tabular",
            ApproxKind::Mlp => "mlp",
        })
    }
}

/// Selective model learning settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sml {
    pub h_sml: usize,
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub model: ModelKind,
    pub reference: ReferencePolicy,
    pub sml: Option<Sml>,
    pub approximator: ApproxKind,
    pub epsilon: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub lr_q: f64,
    /// Error-function learning rate for MLP bodies.
    pub lr_error: f64,
    /// Error-function learning rate for tabular bodies.
    pub lr_error_tabular: f64,
    pub lr_model: f64,
    pub warmup: usize,
    pub capacity: usize,
    pub mix: f64,
    pub h_max: usize,
    /// Environment steps between target mixing updates.
    pub target_interval: u64,
    pub hidden: Vec<usize>,
    pub error_hidden: Vec<usize>,
    pub model_hidden: Vec<usize>,
    /// Keep a pretrained error function fixed instead of fine-tuning it.
    pub freeze_error: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::AdaMve,
            model: ModelKind::Oracle,
            reference: ReferencePolicy::Replay,
            sml: None,
            approximator: ApproxKind::Tabular,
            epsilon: 0.2,
            gamma: 0.98,
            tau: 0.01,
            batch_size: 128,
            lr_q: 1e-3,
            lr_error: 1e-4,
            lr_error_tabular: 1e-3,
            lr_model: 1e-3,
            warmup: DEFAULT_WARMUP,
            capacity: DEFAULT_CAPACITY,
            mix: 1e-3,
            h_max: 5,
            target_interval: 1,
            hidden: DEFAULT_HIDDEN.to_vec(),
            error_hidden: DEFAULT_HIDDEN.to_vec(),
            model_hidden: vec![64, 64],
            freeze_error: false,
        }
    }
}

impl AgentConfig {
    pub fn error_learning_rate(&self) -> f64 {
        match self.approximator {
            ApproxKind::Tabular => self.lr_error_tabular,
            ApproxKind::Mlp => self.lr_error,
        }
    }

    /// Whether the run maintains a learned model-error function.
    pub fn needs_error_fn(&self) -> bool {
        self.algorithm == Algorithm::AdaMve || self.sml.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("lr_q", self.lr_q),
            ("lr_error", self.error_learning_rate()),
            ("lr_model", self.lr_model),
            ("mix", self.mix),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.gamma > 1.0 || self.mix > 1.0 {
            return bad("gamma and mix must not exceed 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.batch_size == 0 || self.capacity == 0 || self.target_interval == 0 {
            return bad("batch_size, capacity and target_interval must be positive".into());
        }
        if self.algorithm.uses_model() && self.h_max == 0 {
            return bad("model-based algorithms need h_max >= 1".into());
        }
        if let Algorithm::Mve { horizon } = self.algorithm {
            if horizon == 0 {
                return bad(format!("MVE horizon {horizon} must be >= 1"));
            }
        }
        if let Some(sml) = self.sml {
            if self.model != ModelKind::Learned {
                return bad("selective model learning needs the learned model".into());
            }
            if sml.h_sml == 0 || sml.h_sml > self.h_max {
                return bad(format!("h_sml {} outside [1, {}]", sml.h_sml, self.h_max));
            }
            if !(sml.percent > 0.0 && sml.percent <= 100.0) {
                return bad(format!("sml percent {} outside (0, 100]", sml.percent));
            }
        }
        Ok(())
    }

    /// Number of expanded values each rollout produces.
    fn rollout_len(&self) -> usize {
        match self.algorithm {
            Algorithm::Dqn => 1,
            Algorithm::Mve { horizon } => horizon + 1,
            Algorithm::UniformMve | Algorithm::AdaMve => self.h_max + 1,
        }
    }
}

/// Online and target action-value approximators with their optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct QFunction {
    pub online: Approximator,
    pub target: Approximator,
    optimizer: Optimizer,
}

impl QFunction {
    pub fn new(online: Approximator, lr: f64) -> Self {
        let optimizer = Optimizer::adam(online.params().len(), lr);
        Self {
            target: online.clone(),
            online,
            optimizer,
        }
    }

    pub fn grad_step(&mut self, batch: &[HeadTarget]) -> Result<f64> {
        self.online.grad_step(&mut self.optimizer, batch)
    }

    pub fn polyak(&mut self, mix: f64) -> Result<()> {
        polyak_update(&mut self.target, &self.online, mix)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.meta.insert("kind".into(), "q-function".into());
        ckpt.blocks.push(("online".into(), self.online.clone()));
        ckpt.blocks.push(("target".into(), self.target.clone()));
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, lr: f64) -> Result<Self> {
        let bad = |m: &str| Error::Transfer(m.to_string());
        if ckpt.meta.get("kind").map(String::as_str) != Some("q-function") {
            return Err(bad("checkpoint does not hold a Q function"));
        }
        let online = ckpt.block("online").ok_or_else(|| bad("missing online block"))?;
        let target = ckpt.block("target").ok_or_else(|| bad("missing target block"))?;
        if online.outputs() != Action::COUNT || !online.same_shape(target) {
            return Err(bad("Q blocks have the wrong shape"));
        }
        let mut q = Self::new(online.clone(), lr);
        q.target = target.clone();
        Ok(q)
    }
}

/// ε-greedy action; greedy ties go to the lowest action index.
pub fn act_eps_greedy(q: &Approximator, s: GridState, epsilon: f64, rng: &mut Rng) -> Action {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        Action::from_index(rng.gen_range(0..Action::COUNT)).unwrap()
    } else {
        q.argmax_action(Point::from(s))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub mean: f64,
    pub returns: Vec<f64>,
}

/// Greedy episodes from random resets.
pub fn evaluate(q: &Approximator, spec: &GridSpec, episodes: usize, rng: &mut Rng) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let mut env = GridEnv::new(spec.clone(), rng);
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        if i > 0 {
            env.reset(rng);
        }
        let mut total = 0.0;
        loop {
            let a = q.argmax_action(Point::from(env.state()));
            let out = env.step(a)?;
            total += out.reward;
            if out.done() {
                break;
            }
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    Ok(EvalResult { mean, returns })
}

/// How one Q target was formed.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBreakdown {
    /// Expanded values `v[0..]`; empty for true terminals.
    pub values: Vec<f64>,
    /// Horizon weights; present for AdaMVE only.
    pub weights: Vec<f64>,
    /// `T(s')`; zero for true terminals.
    pub bootstrap: f64,
    /// `r + gamma * T(s')`, or `r` for true terminals.
    pub target: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub env_step: u64,
    /// Set when the step ended an episode.
    pub episode_return: Option<f64>,
    pub q_loss: Option<f64>,
    pub error_loss: Option<f64>,
    pub model_loss: Option<f64>,
}

/// One seeded training run.
#[derive(Clone, Debug)]
pub struct Agent {
    config: AgentConfig,
    spec: GridSpec,
    env: GridEnv,
    q: QFunction,
    errfn: Option<ErrorFunction>,
    model: Option<DynamicsModel>,
    buffer: ReplayBuffer,
    rngs: RunRngs,
    steps: u64,
    episode_return: f64,
    record_targets: bool,
    last_targets: Vec<(Transition, TargetBreakdown)>,
    values_buf: Vec<f64>,
    errs_buf: Vec<f64>,
    weights_buf: Vec<f64>,
    raw_buf: Vec<f64>,
}

impl Agent {
    pub fn new(config: AgentConfig, spec: &GridSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rngs = RunRngs::new(seed);
        let q_online = match config.approximator {
            ApproxKind::Tabular => Approximator::tabular(spec, Action::COUNT),
            ApproxKind::Mlp => Approximator::mlp(spec, &config.hidden, Action::COUNT, &mut rngs.init)?,
        };
        let q = QFunction::new(q_online, config.lr_q);
        let errfn = if config.needs_error_fn() {
            let form = config.reference.form();
            Some(match config.approximator {
                ApproxKind::Tabular => ErrorFunction::tabular(
                    spec,
                    form,
                    config.h_max,
                    config.gamma,
                    config.error_learning_rate(),
                )?,
                ApproxKind::Mlp => ErrorFunction::mlp(
                    spec,
                    form,
                    config.h_max,
                    config.gamma,
                    config.error_learning_rate(),
                    &config.error_hidden,
                    &mut rngs.init,
                )?,
            })
        } else {
            None
        };
        let model = if config.algorithm.uses_model() || errfn.is_some() {
            Some(match config.model {
                ModelKind::Learned => DynamicsModel::learned(
                    spec,
                    LearnedModel::new(spec, &config.model_hidden, config.lr_model, &mut rngs.init)?,
                ),
                kind => DynamicsModel::hand_crafted(kind, spec)?,
            })
        } else {
            None
        };
        let env = GridEnv::new(spec.clone(), &mut rngs.env);
        let buffer = ReplayBuffer::new(config.capacity, config.warmup)?;
        let n = config.rollout_len();
        Ok(Self {
            spec: spec.clone(),
            env,
            q,
            errfn,
            model,
            buffer,
            rngs,
            steps: 0,
            episode_return: 0.0,
            record_targets: false,
            last_targets: Vec::new(),
            values_buf: vec![0.0; n],
            errs_buf: vec![0.0; config.h_max + 1],
            weights_buf: vec![0.0; config.h_max + 1],
            raw_buf: Vec::new(),
            config,
        })
    }

    /// Replaces the error function, e.g. with a pretrained one loaded from a
    /// checkpoint.
    pub fn set_error_fn(&mut self, errfn: ErrorFunction) -> Result<()> {
        if errfn.form() != self.config.reference.form() {
            return Err(Error::FormMismatch {
                kind: self.config.reference.name(),
                expected: self.config.reference.form().name(),
            });
        }
        if errfn.h_max() != self.config.h_max {
            return Err(Error::Transfer(format!(
                "error function covers h_max {}, run uses {}",
                errfn.h_max(),
                self.config.h_max
            )));
        }
        if !errfn.fits_spec(&self.spec) {
            return Err(Error::Transfer("error function was built for another grid".into()));
        }
        let mut errfn = errfn;
        errfn.optimizer_mut().set_learning_rate(self.config.error_learning_rate());
        self.errfn = Some(errfn);
        Ok(())
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn q(&self) -> &QFunction {
        &self.q
    }

    pub fn q_mut(&mut self) -> &mut QFunction {
        &mut self.q
    }

    pub fn error_fn(&self) -> Option<&ErrorFunction> {
        self.errfn.as_ref()
    }

    pub fn model(&self) -> Option<&DynamicsModel> {
        self.model.as_ref()
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Keeps the per-sample Q targets of the most recent step.
    pub fn set_record_targets(&mut self, on: bool) {
        self.record_targets = on;
        self.last_targets.clear();
    }

    pub fn last_targets(&self) -> &[(Transition, TargetBreakdown)] {
        &self.last_targets
    }

    /// Environment step, buffer push, and then (after warm-up) model fit,
    /// error TD step, Q step and target mixing.
    pub fn train_step(&mut self) -> Result<StepDiagnostics> {
        let mut diag = StepDiagnostics::default();
        let s = self.env.state();
        let a = act_eps_greedy(&self.q.online, s, self.config.epsilon, &mut self.rngs.explore);
        let out = self.env.step(a)?;
        self.buffer.push(Transition {
            state: s,
            action: a,
            reward: out.reward,
            next: out.next,
            terminal: out.terminal,
            truncated: out.truncated,
        });
        self.episode_return += out.reward;
        if out.done() {
            diag.episode_return = Some(self.episode_return);
            self.episode_return = 0.0;
            self.env.reset(&mut self.rngs.env);
        }
        self.steps += 1;
        diag.env_step = self.steps;
        if !self.buffer.is_ready() {
            return Ok(diag);
        }
        let n = self.config.batch_size;

        if let Some(model) = self.model.as_mut().filter(|m| m.kind() == ModelKind::Learned) {
            let batch = self.buffer.sample(n, &mut self.rngs.model_batch)?;
            let batch = match (self.config.sml, self.errfn.as_ref()) {
                (Some(sml), Some(errfn)) => select_with_error_fn(
                    &batch,
                    errfn,
                    self.config.reference,
                    Some(&self.q.target),
                    sml.h_sml,
                    sml.percent,
                )?,
                _ => batch,
            };
            diag.model_loss = Some(model.fit_step(&batch, self.config.lr_model)?);
        }

        if let (Some(errfn), Some(model)) = (self.errfn.as_mut(), self.model.as_ref()) {
            if !self.config.freeze_error {
                let batch = self.buffer.sample(n, &mut self.rngs.error_batch)?;
                diag.error_loss = Some(errfn.td_update(
                    self.config.reference,
                    &batch,
                    model,
                    Some(&self.q.target),
                )?);
            }
        }

        let batch = self.buffer.sample(n, &mut self.rngs.q_batch)?;
        if self.record_targets {
            self.last_targets.clear();
        }
        let mut targets = Vec::with_capacity(n);
        for t in &batch {
            let target = if self.record_targets {
                let b = self.target_breakdown_with(t)?;
                let y = b.target;
                self.last_targets.push((*t, b));
                y
            } else {
                self.fast_target(t)?
            };
            targets.push(HeadTarget {
                input: Point::from(t.state),
                head: t.action.index(),
                target,
            });
        }
        diag.q_loss = Some(self.q.grad_step(&targets)?);

        if self.steps % self.config.target_interval == 0 {
            self.q.polyak(self.config.mix)?;
            if let Some(errfn) = self.errfn.as_mut() {
                if !self.config.freeze_error {
                    errfn.polyak(self.config.mix)?;
                }
            }
        }
        Ok(diag)
    }

    /// Rollout values for `s'` into `values_buf`.
    fn expand(&mut self, next: GridState) {
        let model = self.model.as_ref().expect("model-based algorithms own a model");
        rollout_values_into(
            model,
            &self.q.online,
            &self.q.target,
            Point::from(next),
            self.config.gamma,
            &mut self.rngs.model_sample,
            &mut self.values_buf,
        );
    }

    fn ada_weights(&mut self, next: GridState) -> Result<()> {
        let errfn = self.errfn.as_ref().expect("AdaMVE owns an error function");
        errfn.state_errors_into(
            self.config.reference,
            Point::from(next),
            Some(&self.q.target),
            &mut self.raw_buf,
            &mut self.errs_buf,
        )?;
        horizon_weights_into(&self.errs_buf, self.config.tau, &mut self.weights_buf)
    }

    fn fast_target(&mut self, t: &Transition) -> Result<f64> {
        if t.terminal {
            return Ok(t.reward);
        }
        let p = Point::from(t.next);
        let bootstrap = match self.config.algorithm {
            Algorithm::Dqn => self.q.target.max_action_value(p),
            Algorithm::Mve { horizon } => {
                self.expand(t.next);
                self.values_buf[horizon]
            }
            Algorithm::UniformMve => {
                self.expand(t.next);
                self.values_buf.iter().sum::<f64>() / self.values_buf.len() as f64
            }
            Algorithm::AdaMve => {
                self.expand(t.next);
                self.ada_weights(t.next)?;
                self.values_buf
                    .iter()
                    .zip(&self.weights_buf)
                    .map(|(v, w)| v * w)
                    .sum()
            }
        };
        Ok(t.reward + self.config.gamma * bootstrap)
    }

    fn target_breakdown_with(&mut self, t: &Transition) -> Result<TargetBreakdown> {
        if t.terminal {
            return Ok(TargetBreakdown {
                values: Vec::new(),
                weights: Vec::new(),
                bootstrap: 0.0,
                target: t.reward,
            });
        }
        let mut weights = Vec::new();
        let values = match self.config.algorithm {
            Algorithm::Dqn => vec![self.q.target.max_action_value(Point::from(t.next))],
            _ => {
                self.expand(t.next);
                self.values_buf.clone()
            }
        };
        let bootstrap = match self.config.algorithm {
            Algorithm::Dqn => values[0],
            Algorithm::Mve { horizon } => values[horizon],
            Algorithm::UniformMve => values.iter().sum::<f64>() / values.len() as f64,
            Algorithm::AdaMve => {
                self.ada_weights(t.next)?;
                weights = self.weights_buf.clone();
                values.iter().zip(&weights).map(|(v, w)| v * w).sum()
            }
        };
        Ok(TargetBreakdown {
            values,
            weights,
            bootstrap,
            target: t.reward + self.config.gamma * bootstrap,
        })
    }

    /// The Q target this agent would form for `t` right now. Consumes model
    /// samples from the run's rollout stream.
    pub fn target_breakdown(&mut self, t: &Transition) -> Result<TargetBreakdown> {
        self.target_breakdown_with(t)
    }

    pub fn evaluate(&mut self, episodes: usize) -> Result<EvalResult> {
        evaluate(&self.q.online, &self.spec, episodes, &mut self.rngs.eval)
    }

    /// Mean `E(s, h)` over the open cells for every `h`; empty without an
    /// error function.
    pub fn mean_state_errors(&self) -> Result<Vec<f64>> {
        let Some(errfn) = self.errfn.as_ref() else {
            return Ok(Vec::new());
        };
        let mut sums = vec![0.0; errfn.h_max() + 1];
        let mut count = 0.0;
        for s in self.spec.open_cells() {
            let e = errfn.state_errors(self.config.reference, s.into(), Some(&self.q.target))?;
            for (a, b) in sums.iter_mut().zip(e) {
                *a += b;
            }
            count += 1.0;
        }
        Ok(sums.into_iter().map(|v| v / count).collect())
    }

    /// Weighted average horizon at every cell; `None` for walls or without an
    /// error function.
    pub fn horizon_map(&self) -> Result<Vec<Option<f64>>> {
        let Some(errfn) = self.errfn.as_ref() else {
            return Ok(vec![None; self.spec.cell_count()]);
        };
        horizon_map(errfn, self.config.reference, Some(&self.q.target), &self.spec, self.config.tau)
    }
}

/// `H̄(s)` for every cell in row-major order; walls map to `None`.
pub fn horizon_map(
    errfn: &ErrorFunction,
    kind: ReferencePolicy,
    qbar: Option<&Approximator>,
    spec: &GridSpec,
    tau: f64,
) -> Result<Vec<Option<f64>>> {
    spec.all_cells()
        .map(|s| {
            if spec.is_wall(s) {
                return Ok(None);
            }
            let e = errfn.state_errors(kind, s.into(), qbar)?;
            let w = crate::expansion::horizon_weights(&e, tau)?;
            Ok(Some(weighted_avg_horizon(&w)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_fn::ErrorForm;
    use crate::rng::{stream, Stream};

    fn spec() -> GridSpec {
        GridSpec::four_room()
    }

    #[test]
    fn algorithm_names_parse() {
        for a in [
            Algorithm::Dqn,
            Algorithm::Mve { horizon: 3 },
            Algorithm::UniformMve,
            Algorithm::AdaMve,
        ] {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("MVE(5)".parse::<Algorithm>().unwrap(), Algorithm::Mve { horizon: 5 });
        assert_eq!("mve_h1".parse::<Algorithm>().unwrap(), Algorithm::Mve { horizon: 1 });
        assert!("mve0".parse::<Algorithm>().is_err());
    }

    #[test]
    fn greedy_action_selection() {
        let spec = spec();
        let s = GridState::new(2, 2);
        let mut q = Approximator::tabular(&spec, Action::COUNT);
        let mut rng = stream(0, Stream::Exploration);
        assert_eq!(act_eps_greedy(&q, s, 0.0, &mut rng), Action::Left);
        for (i, v) in [0.0, 2.0, 1.0, 0.0, 0.0].into_iter().enumerate() {
            q.set_value(s, i, v).unwrap();
        }
        assert_eq!(act_eps_greedy(&q, s, 0.0, &mut rng), Action::Right);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let spec = spec();
        let q = Approximator::tabular(&spec, Action::COUNT);
        let mut rng = stream(1, Stream::Exploration);
        let n = 100_000;
        let mut counts = [0usize; Action::COUNT];
        for _ in 0..n {
            counts[act_eps_greedy(&q, GridState::new(1, 1), 1.0, &mut rng).index()] += 1;
        }
        let expected = n as f64 / 5.0;
        let sigma = (expected * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn zero_q_evaluation_rarely_succeeds() {
        let spec = spec();
        let q = Approximator::tabular(&spec, Action::COUNT);
        let r = evaluate(&q, &spec, 200, &mut stream(2, Stream::Evaluation)).unwrap();
        assert!(r.mean < 0.1);
        let again = evaluate(&q, &spec, 200, &mut stream(2, Stream::Evaluation)).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn warmup_steps_do_not_learn() {
        let config = AgentConfig {
            algorithm: Algorithm::Dqn,
            warmup: 10,
            ..AgentConfig::default()
        };
        let mut agent = Agent::new(config, &spec(), 3).unwrap();
        for i in 1..10 {
            let d = agent.train_step().unwrap();
            assert_eq!(d.env_step, i);
            assert!(d.q_loss.is_none());
        }
        assert!(agent.train_step().unwrap().q_loss.is_some());
    }

    #[test]
    fn mismatched_pretrained_error_fn_is_rejected() {
        let spec = spec();
        let config = AgentConfig {
            reference: ReferencePolicy::Conservative,
            ..AgentConfig::default()
        };
        let mut agent = Agent::new(config, &spec, 0).unwrap();
        let replay = ErrorFunction::tabular(&spec, ErrorForm::State, 5, 0.98, 1e-3).unwrap();
        assert!(agent.set_error_fn(replay).is_err());
        let short = ErrorFunction::tabular(&spec, ErrorForm::StateAction, 3, 0.98, 1e-3).unwrap();
        assert!(agent.set_error_fn(short).is_err());
        let ok = ErrorFunction::tabular(&spec, ErrorForm::StateAction, 5, 0.98, 1e-3).unwrap();
        agent.set_error_fn(ok).unwrap();
    }

    #[test]
    fn config_validation() {
        let mut c = AgentConfig::default();
        c.epsilon = 1.5;
        assert!(c.validate().is_err());
        let mut c = AgentConfig::default();
        c.sml = Some(Sml {
            h_sml: 1,
            percent: 50.0,
        });
        assert!(c.validate().is_err());
        c.model = ModelKind::Learned;
        c.validate().unwrap();
        c.sml = Some(Sml {
            h_sml: 9,
            percent: 50.0,
        });
        assert!(c.validate().is_err());
    }
}
