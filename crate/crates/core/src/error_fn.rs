//! TD-learned cumulative model error `E(s, a, h)` / `E(s, h)`.
//!
//! Heads are laid out as `a * (h_max + 1) + h` for the state-action form and
//! `h` for the state form. Every `h = 0` head is pinned to zero. Reads are
//! clamped at zero.

use std::fmt;
use std::str::FromStr;

use crate::approx::{
    argmax, polyak_update, Approximator, Checkpoint, HeadTarget, Optimizer, Transition,
};
use crate::env::{Action, GridSpec};
use crate::error::{Error, Result};
use crate::models::{DynamicsModel, Point};
use crate::rng::Rng;

/// Reference policy under which the model error is accumulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReferencePolicy {
    /// Successor action maximizes the target error.
    Conservative,
    /// Successor action is greedy with respect to the target Q.
    Greedy,
    /// On-policy with respect to the replay buffer; state form only.
    Replay,
}

impl ReferencePolicy {
    pub const ALL: [ReferencePolicy; 3] = [
        ReferencePolicy::Conservative,
        ReferencePolicy::Greedy,
        ReferencePolicy::Replay,
    ];

    pub fn form(self) -> ErrorForm {
        match self {
            ReferencePolicy::Replay => ErrorForm::State,
            _ => ErrorForm::StateAction,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReferencePolicy::Conservative => "conservative",
            ReferencePolicy::Greedy => "greedy",
            ReferencePolicy::Replay => "replay",
        }
    }
}

impl fmt::Display for ReferencePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReferencePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conservative" | "csrv" => Ok(ReferencePolicy::Conservative),
            "greedy" => Ok(ReferencePolicy::Greedy),
            "replay" => Ok(ReferencePolicy::Replay),
            other => Err(Error::InvalidArgument(format!(
                "unknown reference policy `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErrorForm {
    StateAction,
    State,
}

impl ErrorForm {
    pub fn name(self) -> &'static str {
        match self {
            ErrorForm::StateAction => "state-action",
            ErrorForm::State => "state",
        }
    }
}

impl FromStr for ErrorForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state-action" => Ok(ErrorForm::StateAction),
            "state" => Ok(ErrorForm::State),
            other => Err(Error::InvalidArgument(format!("unknown error form `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorFunction {
    form: ErrorForm,
    h_max: usize,
    gamma: f64,
    online: Approximator,
    target: Approximator,
    optimizer: Optimizer,
}

impl ErrorFunction {
    pub fn output_count(form: ErrorForm, h_max: usize) -> usize {
        match form {
            ErrorForm::StateAction => Action::COUNT * (h_max + 1),
            ErrorForm::State => h_max + 1,
        }
    }

    fn zero_heads(form: ErrorForm, h_max: usize) -> Vec<usize> {
        match form {
            ErrorForm::StateAction => (0..Action::COUNT).map(|a| a * (h_max + 1)).collect(),
            ErrorForm::State => vec![0],
        }
    }

    fn from_online(form: ErrorForm, h_max: usize, gamma: f64, online: Approximator, lr: f64) -> Result<Self> {
        let online = online.with_pinned(Self::zero_heads(form, h_max))?;
        let optimizer = Optimizer::adam(online.params().len(), lr);
        Ok(Self {
            form,
            h_max,
            gamma,
            target: online.clone(),
            online,
            optimizer,
        })
    }

    pub fn tabular(spec: &GridSpec, form: ErrorForm, h_max: usize, gamma: f64, lr: f64) -> Result<Self> {
        let online = Approximator::tabular(spec, Self::output_count(form, h_max));
        Self::from_online(form, h_max, gamma, online, lr)
    }

    pub fn mlp(
        spec: &GridSpec,
        form: ErrorForm,
        h_max: usize,
        gamma: f64,
        lr: f64,
        hidden: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        let online = Approximator::mlp(spec, hidden, Self::output_count(form, h_max), rng)?;
        Self::from_online(form, h_max, gamma, online, lr)
    }

    pub fn form(&self) -> ErrorForm {
        self.form
    }

    pub fn h_max(&self) -> usize {
        self.h_max
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn online(&self) -> &Approximator {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Approximator {
        &mut self.online
    }

    pub fn target(&self) -> &Approximator {
        &self.target
    }

    pub fn optimizer_mut(&mut self) -> &mut Optimizer {
        &mut self.optimizer
    }

    /// Output index of `(a, h)`; `a` is ignored by the state form.
    pub fn head(&self, a: Action, h: usize) -> usize {
        match self.form {
            ErrorForm::StateAction => a.index() * (self.h_max + 1) + h,
            ErrorForm::State => h,
        }
    }

    fn check_kind(&self, kind: ReferencePolicy) -> Result<()> {
        if kind.form() != self.form {
            return Err(Error::FormMismatch {
                kind: kind.name(),
                expected: kind.form().name(),
            });
        }
        Ok(())
    }

    fn check_h(&self, h: usize) -> Result<()> {
        if h > self.h_max {
            return Err(Error::HorizonOutOfRange { h, max: self.h_max });
        }
        Ok(())
    }

    /// Aggregates one horizon of a raw output vector into a state error.
    fn aggregate(
        &self,
        kind: ReferencePolicy,
        raw: &[f64],
        h: usize,
        greedy: Option<Action>,
    ) -> f64 {
        let v = match kind {
            ReferencePolicy::Replay => raw[h],
            ReferencePolicy::Conservative => Action::ALL
                .iter()
                .map(|&a| raw[self.head(a, h)])
                .fold(f64::NEG_INFINITY, f64::max),
            ReferencePolicy::Greedy => raw[self.head(greedy.expect("checked by caller"), h)],
        };
        v.max(0.0)
    }

    fn greedy_action(kind: ReferencePolicy, p: Point, qbar: Option<&Approximator>) -> Result<Option<Action>> {
        match kind {
            ReferencePolicy::Greedy => Ok(Some(qbar.ok_or(Error::MissingQ)?.argmax_action(p))),
            _ => Ok(None),
        }
    }

    /// `E(s, h)` under the reference policy, read from the online approximator.
    pub fn eval_state_error(
        &self,
        kind: ReferencePolicy,
        p: Point,
        h: usize,
        qbar: Option<&Approximator>,
    ) -> Result<f64> {
        self.check_kind(kind)?;
        self.check_h(h)?;
        let greedy = Self::greedy_action(kind, p, qbar)?;
        if let (ErrorForm::State, true) = (self.form, self.online.is_tabular()) {
            return Ok(self.online.value(p, h).max(0.0));
        }
        let raw = self.online.eval_point(p);
        Ok(self.aggregate(kind, &raw, h, greedy))
    }

    /// `E(s, h)` for every `h` in `0..=h_max`, written into `out`.
    pub fn state_errors_into(
        &self,
        kind: ReferencePolicy,
        p: Point,
        qbar: Option<&Approximator>,
        raw: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<()> {
        self.check_kind(kind)?;
        if out.len() != self.h_max + 1 {
            return Err(Error::LengthMismatch {
                left: out.len(),
                right: self.h_max + 1,
            });
        }
        let greedy = Self::greedy_action(kind, p, qbar)?;
        raw.resize(self.online.outputs(), 0.0);
        self.online.eval_into(p, raw);
        for (h, o) in out.iter_mut().enumerate() {
            *o = self.aggregate(kind, raw, h, greedy);
        }
        Ok(())
    }

    pub fn state_errors(
        &self,
        kind: ReferencePolicy,
        p: Point,
        qbar: Option<&Approximator>,
    ) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.h_max + 1];
        self.state_errors_into(kind, p, qbar, &mut Vec::new(), &mut out)?;
        Ok(out)
    }

    /// Builds the regression targets `W(s, a) + gamma * E_bar(s', a', h - 1)`
    /// for every sample and every `h >= 1`. Goal successors bootstrap with zero.
    pub fn td_targets(
        &self,
        kind: ReferencePolicy,
        batch: &[Transition],
        model: &DynamicsModel,
        qbar: Option<&Approximator>,
    ) -> Result<Vec<HeadTarget>> {
        self.check_kind(kind)?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if kind == ReferencePolicy::Greedy && qbar.is_none() {
            return Err(Error::MissingQ);
        }
        let mut targets = Vec::with_capacity(batch.len() * self.h_max);
        let mut next_raw = vec![0.0; self.target.outputs()];
        for t in batch {
            let w = model.w_reward(t.state, t.action, t.next);
            let next = Point::from(t.next);
            if !t.terminal {
                self.target.eval_into(next, &mut next_raw);
            }
            let greedy = Self::greedy_action(kind, next, qbar)?;
            for h in 1..=self.h_max {
                let bootstrap = if t.terminal {
                    0.0
                } else {
                    self.aggregate(kind, &next_raw, h - 1, greedy)
                };
                targets.push(HeadTarget {
                    input: Point::from(t.state),
                    head: self.head(t.action, h),
                    target: w + self.gamma * bootstrap,
                });
            }
        }
        Ok(targets)
    }

    /// One TD step on every `h >= 1` head; returns the pre-step loss.
    pub fn td_update(
        &mut self,
        kind: ReferencePolicy,
        batch: &[Transition],
        model: &DynamicsModel,
        qbar: Option<&Approximator>,
    ) -> Result<f64> {
        let targets = self.td_targets(kind, batch, model, qbar)?;
        self.online.grad_step(&mut self.optimizer, &targets)
    }

    pub fn polyak(&mut self, mix: f64) -> Result<()> {
        polyak_update(&mut self.target, &self.online, mix)
    }

    /// Copies the online approximator into the target.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.meta.insert("kind".into(), "model-error".into());
        ckpt.meta.insert("form".into(), self.form.name().into());
        ckpt.meta.insert("h_max".into(), self.h_max.to_string());
        ckpt.meta.insert("gamma".into(), format!("{:e}", self.gamma));
        ckpt.meta
            .insert("learning_rate".into(), format!("{:e}", self.optimizer.learning_rate()));
        ckpt.blocks.push(("online".into(), self.online.clone()));
        ckpt.blocks.push(("target".into(), self.target.clone()));
        ckpt
    }

    /// Restores an error function; optimizer moments start fresh.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let bad = |reason: &str| Error::Transfer(reason.to_string());
        if ckpt.meta.get("kind").map(String::as_str) != Some("model-error") {
            return Err(bad("checkpoint does not hold a model-error function"));
        }
        let meta = |k: &str| ckpt.meta.get(k).ok_or_else(|| bad(&format!("missing meta `{k}`")));
        let form: ErrorForm = meta("form")?.parse()?;
        let h_max: usize = meta("h_max")?
            .parse()
            .map_err(|_| bad("h_max is not an integer"))?;
        let gamma: f64 = meta("gamma")?.parse().map_err(|_| bad("gamma is not a number"))?;
        let lr: f64 = meta("learning_rate")?
            .parse()
            .map_err(|_| bad("learning_rate is not a number"))?;
        let online = ckpt.block("online").ok_or_else(|| bad("missing online block"))?;
        let target = ckpt.block("target").ok_or_else(|| bad("missing target block"))?;
        if online.outputs() != Self::output_count(form, h_max) || !online.same_shape(target) {
            return Err(bad("block shapes do not match the declared form"));
        }
        let mut f = Self::from_online(form, h_max, gamma, online.clone(), lr)?;
        if !f.online.same_shape(target) {
            return Err(bad("zero heads are not pinned"));
        }
        f.target = target.clone();
        Ok(f)
    }

    /// True when the approximator's state grid matches `spec` (tabular) or
    /// the network input scaling matches (MLP).
    pub fn fits_spec(&self, spec: &GridSpec) -> bool {
        let probe = Approximator::tabular(spec, 1);
        match (self.online.body(), probe.body()) {
            (
                crate::approx::Body::Tabular { width, height, .. },
                crate::approx::Body::Tabular {
                    width: w2,
                    height: h2,
                    ..
                },
            ) => width == w2 && height == h2,
            (crate::approx::Body::Mlp { input_scale, .. }, _) => {
                *input_scale == crate::approx::coordinate_scale(spec)
            }
            _ => false,
        }
    }
}

/// Index of the largest error head among actions at horizon `h`.
pub fn conservative_action(f: &ErrorFunction, raw: &[f64], h: usize) -> Action {
    let vals: Vec<f64> = Action::ALL.iter().map(|&a| raw[f.head(a, h)]).collect();
    Action::from_index(argmax(&vals)).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GridState;

    fn spec() -> GridSpec {
        GridSpec::four_room()
    }

    fn sample(spec: &GridSpec, s: GridState, a: Action) -> Transition {
        let (next, reward, goal) = spec.step(s, a).unwrap();
        Transition {
            state: s,
            action: a,
            reward,
            next,
            terminal: goal,
            truncated: false,
        }
    }

    #[test]
    fn form_kind_pairing() {
        let sa = ErrorFunction::tabular(&spec(), ErrorForm::StateAction, 5, 0.98, 1e-3).unwrap();
        let st = ErrorFunction::tabular(&spec(), ErrorForm::State, 5, 0.98, 1e-3).unwrap();
        let p = Point::new(1.0, 1.0);
        assert!(sa.eval_state_error(ReferencePolicy::Replay, p, 1, None).is_err());
        assert!(st
            .eval_state_error(ReferencePolicy::Conservative, p, 1, None)
            .is_err());
        assert!(matches!(
            sa.eval_state_error(ReferencePolicy::Greedy, p, 1, None),
            Err(Error::MissingQ)
        ));
        assert!(matches!(
            st.eval_state_error(ReferencePolicy::Replay, p, 6, None),
            Err(Error::HorizonOutOfRange { h: 6, max: 5 })
        ));
    }

    #[test]
    fn zero_horizon_reads_zero() {
        let mut f = ErrorFunction::tabular(&spec(), ErrorForm::State, 5, 0.98, 1e-3).unwrap();
        assert!(f.online_mut().set_value(GridState::new(2, 2), 0, 5.0).is_err());
        let p = Point::new(2.0, 2.0);
        assert_eq!(f.eval_state_error(ReferencePolicy::Replay, p, 0, None).unwrap(), 0.0);
    }

    #[test]
    fn conservative_and_greedy_aggregation() {
        let spec = spec();
        let s = GridState::new(3, 3);
        let mut f = ErrorFunction::tabular(&spec, ErrorForm::StateAction, 5, 0.98, 1e-3).unwrap();
        for (a, v) in Action::ALL.iter().zip([0.0, 1.0, 2.0, 0.0, 0.3]) {
            let head = f.head(*a, 1);
            f.online_mut().set_value(s, head, v).unwrap();
        }
        let p = Point::from(s);
        assert_eq!(
            f.eval_state_error(ReferencePolicy::Conservative, p, 1, None).unwrap(),
            2.0
        );
        let mut q = Approximator::tabular(&spec, Action::COUNT);
        q.set_value(s, Action::Stay.index(), 1.0).unwrap();
        assert_eq!(
            f.eval_state_error(ReferencePolicy::Greedy, p, 1, Some(&q)).unwrap(),
            0.3
        );
    }

    #[test]
    fn negative_estimates_are_clamped() {
        let mut f = ErrorFunction::tabular(&spec(), ErrorForm::State, 2, 0.98, 1e-3).unwrap();
        f.online_mut().set_value(GridState::new(5, 5), 2, -0.5).unwrap();
        let e = f.state_errors(ReferencePolicy::Replay, Point::new(5.0, 5.0), None).unwrap();
        assert_eq!(e, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn oracle_targets_are_zero() {
        let spec = spec();
        let f = ErrorFunction::tabular(&spec, ErrorForm::State, 5, 0.98, 1e-3).unwrap();
        let model = DynamicsModel::oracle(&spec);
        let batch: Vec<Transition> = spec
            .start_cells()
            .into_iter().take(50)
            .map(|s| sample(&spec, s, Action::Up))
            .collect();
        let targets = f.td_targets(ReferencePolicy::Replay, &batch, &model, None).unwrap();
        assert_eq!(targets.len(), 50 * 5);
        assert!(targets.iter().all(|t| t.target == 0.0 && t.head != 0));
    }

    #[test]
    fn nowall_conservative_two_step_value() {
        let spec = spec();
        let mut f =
            ErrorFunction::tabular(&spec, ErrorForm::StateAction, 2, 0.98, 1e-2).unwrap();
        let model = DynamicsModel::no_wall(&spec);
        let s = GridState::new(8, 0);
        let batch: Vec<Transition> = Action::ALL.iter().map(|&a| sample(&spec, s, a)).collect();
        for _ in 0..20_000 {
            f.td_update(ReferencePolicy::Conservative, &batch, &model, None).unwrap();
            f.polyak(0.01).unwrap();
        }
        let raw = f.online().eval_state(s);
        assert!((raw[f.head(Action::Right, 1)] - 1.0).abs() < 1e-3);
        assert!((raw[f.head(Action::Right, 2)] - 1.98).abs() < 1e-3);
        assert_eq!(conservative_action(&f, &raw, 1), Action::Right);
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = spec();
        let mut f = ErrorFunction::tabular(&spec, ErrorForm::StateAction, 3, 0.98, 1e-3).unwrap();
        let head = f.head(Action::Down, 2);
        f.online_mut().set_value(GridState::new(1, 2), head, 0.75).unwrap();
        let back = ErrorFunction::from_checkpoint(&f.to_checkpoint()).unwrap();
        assert_eq!(back.online(), f.online());
        assert_eq!(back.target(), f.target());
        assert_eq!(back.form(), ErrorForm::StateAction);
        assert_eq!(back.h_max(), 3);
        assert!(back.fits_spec(&GridSpec::four_room2()));
    }
}
