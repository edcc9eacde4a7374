//! Approximate dynamics models and the W-reward.
//!
//! - **Oracle** reproduces the true transition.
//! - **ThreeRoom** is exact except in the bottom-left room, where every action
//!   jumps uniformly to any open cell.
//! - **NoWall** moves through internal walls (possibly landing on a wall cell)
//!   but stops at the outer boundary.
//! - **Learned** is an MLP regressing absolute next-state coordinates.
//!
//! Because the true gridworld is deterministic, the Wasserstein distance between
//! the true and predicted next-state distributions reduces to the expected
//! Euclidean distance from the true next state.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::approx::{coordinate_scale, ReplayBuffer, Transition};
use crate::approx::{Mlp, MlpCache, Optimizer};
use crate::env::{Action, GridSpec, GridState};
use crate::error::{Error, Result};
use crate::error_fn::ErrorFunction;
use crate::rng::Rng;

/// A real-valued position in cell units; model predictions need not be cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    /// Nearest grid cell, clamped into the grid. May be a wall cell.
    pub fn snap(&self, spec: &GridSpec) -> GridState {
        let x = (self.x.round() as i64).clamp(0, i64::from(spec.width() - 1));
        let y = (self.y.round() as i64).clamp(0, i64::from(spec.height() - 1));
        GridState::new(x as i32, y as i32)
    }
}

impl From<GridState> for Point {
    fn from(s: GridState) -> Self {
        Point::new(f64::from(s.x), f64::from(s.y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Oracle,
    ThreeRoom,
    NoWall,
    Learned,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Oracle => "oracle",
            ModelKind::ThreeRoom => "threeroom",
            ModelKind::NoWall => "nowall",
            ModelKind::Learned => "learned",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(ModelKind::Oracle),
            "threeroom" | "3room" | "three-room" => Ok(ModelKind::ThreeRoom),
            "nowall" | "no-wall" => Ok(ModelKind::NoWall),
            "learned" | "online" => Ok(ModelKind::Learned),
            other => Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
        }
    }
}

/// Online-learned dynamics: `[x, y] (scaled) ++ one-hot(action) -> [x', y'] (scaled)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedModel {
    net: Mlp,
    optimizer: Optimizer,
    scale: f64,
}

impl LearnedModel {
    pub const INPUT_WIDTH: usize = 2 + Action::COUNT;

    pub fn new(spec: &GridSpec, hidden: &[usize], lr: f64, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![Self::INPUT_WIDTH];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        let net = Mlp::new(&sizes, true, rng)?;
        Ok(Self::from_net(net, lr, coordinate_scale(spec)))
    }

    pub fn from_net(net: Mlp, lr: f64, scale: f64) -> Self {
        let optimizer = Optimizer::adam(net.params().len(), lr);
        Self {
            net,
            optimizer,
            scale,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn optimizer_mut(&mut self) -> &mut Optimizer {
        &mut self.optimizer
    }

    fn features(&self, p: Point, a: Action) -> [f64; Self::INPUT_WIDTH] {
        let mut f = [0.0; Self::INPUT_WIDTH];
        f[0] = p.x * self.scale;
        f[1] = p.y * self.scale;
        f[2 + a.index()] = 1.0;
        f
    }

    pub fn predict(&self, p: Point, a: Action) -> Point {
        let out = self
            .net
            .forward(&self.features(p, a))
            .expect("fixed input width");
        Point::new(out[0] / self.scale, out[1] / self.scale)
    }

    /// Half mean squared error on scaled coordinates and its parameter gradient.
    pub fn loss_and_grad(&self, batch: &[Transition]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.net.params().len()];
        let mut cache = MlpCache::default();
        let mut loss = 0.0;
        for t in batch {
            self.net
                .forward_cached(&self.features(Point::from(t.state), t.action), &mut cache)?;
            let out = cache.output();
            let target = [
                f64::from(t.next.x) * self.scale,
                f64::from(t.next.y) * self.scale,
            ];
            let err = [out[0] - target[0], out[1] - target[1]];
            loss += 0.5 * (err[0] * err[0] + err[1] * err[1]);
            self.net
                .backward(&cache, &[err[0] / n, err[1] / n], &mut grads);
        }
        Ok((loss / n, grads))
    }

    pub fn fit_step(&mut self, batch: &[Transition], lr: f64) -> Result<f64> {
        let (loss, grads) = self.loss_and_grad(batch)?;
        self.optimizer.set_learning_rate(lr);
        self.optimizer.step(self.net.params_mut(), &grads)?;
        Ok(loss)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Inner {
    Oracle,
    ThreeRoom {
        support: Vec<GridState>,
        /// Mean distance from every cell (indexed row-major) to the support.
        mean_distance: Vec<f64>,
    },
    NoWall,
    Learned(LearnedModel),
}

/// A dynamics model bound to one grid geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsModel {
    spec: GridSpec,
    inner: Inner,
}

impl DynamicsModel {
    pub fn oracle(spec: &GridSpec) -> Self {
        Self {
            spec: spec.clone(),
            inner: Inner::Oracle,
        }
    }

    pub fn no_wall(spec: &GridSpec) -> Self {
        Self {
            spec: spec.clone(),
            inner: Inner::NoWall,
        }
    }

    pub fn three_room(spec: &GridSpec) -> Self {
        let support: Vec<GridState> = spec.open_cells().collect();
        let mean_distance = spec
            .all_cells()
            .map(|c| support.iter().map(|z| z.distance(c)).sum::<f64>() / support.len() as f64)
            .collect();
        Self {
            spec: spec.clone(),
            inner: Inner::ThreeRoom {
                support,
                mean_distance,
            },
        }
    }

    pub fn learned(spec: &GridSpec, model: LearnedModel) -> Self {
        Self {
            spec: spec.clone(),
            inner: Inner::Learned(model),
        }
    }

    /// Builds a hand-crafted model; `Learned` needs [`DynamicsModel::learned`].
    pub fn hand_crafted(kind: ModelKind, spec: &GridSpec) -> Result<Self> {
        match kind {
            ModelKind::Oracle => Ok(Self::oracle(spec)),
            ModelKind::ThreeRoom => Ok(Self::three_room(spec)),
            ModelKind::NoWall => Ok(Self::no_wall(spec)),
            ModelKind::Learned => Err(Error::InvalidArgument(
                "the learned model is not hand-crafted".into(),
            )),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.inner {
            Inner::Oracle => ModelKind::Oracle,
            Inner::ThreeRoom { .. } => ModelKind::ThreeRoom,
            Inner::NoWall => ModelKind::NoWall,
            Inner::Learned(_) => ModelKind::Learned,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn learned_mut(&mut self) -> Option<&mut LearnedModel> {
        match &mut self.inner {
            Inner::Learned(m) => Some(m),
            _ => None,
        }
    }

    pub fn learned_ref(&self) -> Option<&LearnedModel> {
        match &self.inner {
            Inner::Learned(m) => Some(m),
            _ => None,
        }
    }

    /// The bottom-left room, where ThreeRoom is wrong.
    pub fn in_faulty_room(spec: &GridSpec, s: GridState) -> bool {
        s.x < spec.width() / 2 && s.y < spec.height() / 2
    }

    pub fn is_enumerable(&self) -> bool {
        !matches!(self.inner, Inner::Learned(_))
    }

    /// Draws a next state from the model, starting at a cell.
    pub fn predict_sample(&self, s: GridState, a: Action, rng: &mut Rng) -> Point {
        self.predict_from(Point::from(s), a, rng)
    }

    /// Draws a next state from a possibly fictional point. Hand-crafted models
    /// snap the point to its nearest cell first; the learned model does not.
    pub fn predict_from(&self, p: Point, a: Action, rng: &mut Rng) -> Point {
        match &self.inner {
            Inner::Learned(m) => m.predict(p, a),
            Inner::Oracle => Point::from(self.spec.transition(p.snap(&self.spec), a)),
            Inner::NoWall => Point::from(self.spec.free_move(p.snap(&self.spec), a)),
            Inner::ThreeRoom { support, .. } => {
                let s = p.snap(&self.spec);
                if Self::in_faulty_room(&self.spec, s) {
                    Point::from(support[rng.gen_range(0..support.len())])
                } else {
                    Point::from(self.spec.transition(s, a))
                }
            }
        }
    }

    /// Exact next-state distribution for enumerable models.
    pub fn predict_distribution(&self, s: GridState, a: Action) -> Result<Vec<(GridState, f64)>> {
        match &self.inner {
            Inner::Learned(_) => Err(Error::NotEnumerable(self.kind().to_string())),
            Inner::Oracle => Ok(vec![(self.spec.transition(s, a), 1.0)]),
            Inner::NoWall => Ok(vec![(self.spec.free_move(s, a), 1.0)]),
            Inner::ThreeRoom { support, .. } => {
                if Self::in_faulty_room(&self.spec, s) {
                    let p = 1.0 / support.len() as f64;
                    Ok(support.iter().map(|&z| (z, p)).collect())
                } else {
                    Ok(vec![(self.spec.transition(s, a), 1.0)])
                }
            }
        }
    }

    /// Wasserstein distance between the true point-mass transition at
    /// `true_next` and the model's prediction for `(s, a)`.
    pub fn w_reward(&self, s: GridState, a: Action, true_next: GridState) -> f64 {
        match &self.inner {
            Inner::Oracle => Point::from(self.spec.transition(s, a)).distance(true_next.into()),
            Inner::NoWall => Point::from(self.spec.free_move(s, a)).distance(true_next.into()),
            Inner::Learned(m) => m.predict(s.into(), a).distance(true_next.into()),
            Inner::ThreeRoom { mean_distance, .. } => {
                if Self::in_faulty_room(&self.spec, s) {
                    mean_distance[self.spec.index(true_next)]
                } else {
                    Point::from(self.spec.transition(s, a)).distance(true_next.into())
                }
            }
        }
    }

    /// One gradient step of the learned model; returns the pre-step loss.
    pub fn fit_step(&mut self, batch: &[Transition], lr: f64) -> Result<f64> {
        let kind = self.kind();
        match &mut self.inner {
            Inner::Learned(m) => m.fit_step(batch, lr),
            _ => Err(Error::NotLearned(kind.to_string())),
        }
    }
}

/// Selective model learning: keeps the `ceil(percent / 100 * n)` transitions
/// with the smallest learned error `E(s, h_sml)`, ties broken by batch order.
pub fn select_for_sml(
    batch: &[Transition],
    errors: &dyn Fn(GridState) -> f64,
    percent: f64,
) -> Result<Vec<Transition>> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "SML percentage {percent} outside (0, 100]"
        )));
    }
    let keep = ((percent / 100.0) * batch.len() as f64).ceil() as usize;
    let mut ranked: Vec<(f64, usize)> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| (errors(t.state), i))
        .collect();
    // stable sort keeps batch order among equal errors
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut chosen: Vec<usize> = ranked.into_iter().take(keep).map(|(_, i)| i).collect();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| batch[i]).collect())
}

/// [`select_for_sml`] driven by a model-error function's state errors.
pub fn select_with_error_fn(
    batch: &[Transition],
    errfn: &ErrorFunction,
    kind: crate::error_fn::ReferencePolicy,
    qbar: Option<&crate::approx::Approximator>,
    h_sml: usize,
    percent: f64,
) -> Result<Vec<Transition>> {
    if h_sml == 0 || h_sml > errfn.h_max() {
        return Err(Error::HorizonOutOfRange {
            h: h_sml,
            max: errfn.h_max(),
        });
    }
    // validate the form/kind pairing once, up front
    errfn.eval_state_error(kind, Point::new(0.0, 0.0), h_sml, qbar)?;
    let f = |s: GridState| {
        errfn
            .eval_state_error(kind, Point::from(s), h_sml, qbar)
            .unwrap_or(f64::INFINITY)
    };
    select_for_sml(batch, &f, percent)
}

/// Fits a learned model on a buffer for a fixed number of steps (used by
/// pretraining utilities and tests).
pub fn fit_on_buffer(
    model: &mut DynamicsModel,
    buffer: &ReplayBuffer,
    steps: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batch = buffer.sample(batch_size, rng)?;
        losses.push(model.fit_step(&batch, lr)?);
    }
    Ok(losses)
}
