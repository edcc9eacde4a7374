//! Parameterized function approximators over gridworld states.
//!
//! An [`Approximator`] maps a state point `(x, y)` in cell units to a vector of
//! outputs (one per action for Q, one per `(action, horizon)` for model-error
//! heads). Two bodies exist: an exact zero-initialized table over every grid
//! cell, and an MLP fed with coordinates scaled to `[0, 1]`. Outputs can be
//! pinned to zero; a pinned head never trains and always reads `0.0`.

mod checkpoint;
mod mlp;
mod optim;
mod replay;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use mlp::{Mlp, MlpCache};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use replay::{ReplayBuffer, Transition, DEFAULT_CAPACITY, DEFAULT_WARMUP};

use crate::env::{Action, GridSpec, GridState};
use crate::error::{Error, Result};
use crate::models::Point;
use crate::rng::Rng;

pub const DEFAULT_HIDDEN: [usize; 3] = [200, 200, 200];

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Tabular {
        width: i32,
        height: i32,
        values: Vec<f64>,
    },
    Mlp {
        net: Mlp,
        /// Multiplies raw cell coordinates before they enter the network.
        input_scale: f64,
    },
}

/// One regression example for [`Approximator::grad_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadTarget {
    pub input: Point,
    pub head: usize,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Approximator {
    body: Body,
    outputs: usize,
    pinned: Vec<bool>,
}

impl Approximator {
    pub fn tabular(spec: &GridSpec, outputs: usize) -> Self {
        Self::tabular_with_size(spec.width(), spec.height(), outputs)
    }

    pub fn tabular_with_size(width: i32, height: i32, outputs: usize) -> Self {
        Self {
            body: Body::Tabular {
                width,
                height,
                values: vec![0.0; (width * height) as usize * outputs],
            },
            outputs,
            pinned: vec![false; outputs],
        }
    }

    /// A `2 -> hidden.. -> outputs` network over scaled coordinates.
    pub fn mlp(spec: &GridSpec, hidden: &[usize], outputs: usize, rng: &mut Rng) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(2);
        sizes.extend_from_slice(hidden);
        sizes.push(outputs);
        let net = Mlp::new(&sizes, true, rng)?;
        Ok(Self::from_mlp(net, coordinate_scale(spec)))
    }

    pub fn from_mlp(net: Mlp, input_scale: f64) -> Self {
        let outputs = net.output_width();
        Self {
            body: Body::Mlp { net, input_scale },
            outputs,
            pinned: vec![false; outputs],
        }
    }

    /// Pins the listed heads to zero.
    pub fn with_pinned(mut self, heads: impl IntoIterator<Item = usize>) -> Result<Self> {
        for h in heads {
            if h >= self.outputs {
                return Err(Error::InvalidHead {
                    head: h,
                    outputs: self.outputs,
                });
            }
            self.pinned[h] = true;
        }
        Ok(self)
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn input_width(&self) -> usize {
        2
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self.body, Body::Tabular { .. })
    }

    pub fn params(&self) -> &[f64] {
        match &self.body {
            Body::Tabular { values, .. } => values,
            Body::Mlp { net, .. } => net.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.body {
            Body::Tabular { values, .. } => values,
            Body::Mlp { net, .. } => net.params_mut(),
        }
    }

    pub fn same_shape(&self, other: &Approximator) -> bool {
        self.outputs == other.outputs
            && self.pinned == other.pinned
            && match (&self.body, &other.body) {
                (
                    Body::Tabular { width, height, .. },
                    Body::Tabular {
                        width: w2,
                        height: h2,
                        ..
                    },
                ) => width == w2 && height == h2,
                (Body::Mlp { net, input_scale }, Body::Mlp { net: n2, input_scale: s2 }) => {
                    net.sizes() == n2.sizes()
                        && net.has_bias() == n2.has_bias()
                        && input_scale == s2
                }
                _ => false,
            }
    }

    fn cell(width: i32, height: i32, p: Point) -> usize {
        let x = (p.x.round() as i64).clamp(0, i64::from(width - 1)) as i32;
        let y = (p.y.round() as i64).clamp(0, i64::from(height - 1)) as i32;
        (y * width + x) as usize
    }

    /// Forward pass on a raw feature vector `[x, y]` (cell units).
    pub fn eval(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: features.len(),
            });
        }
        let mut out = vec![0.0; self.outputs];
        self.eval_into(Point::new(features[0], features[1]), &mut out);
        Ok(out)
    }

    /// Forward pass into a caller-provided buffer of length `outputs()`.
    /// Tabular bodies snap `p` to the nearest grid cell.
    pub fn eval_into(&self, p: Point, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.outputs);
        match &self.body {
            Body::Tabular {
                width,
                height,
                values,
            } => {
                let c = Self::cell(*width, *height, p);
                out.copy_from_slice(&values[c * self.outputs..(c + 1) * self.outputs]);
            }
            Body::Mlp { net, input_scale } => {
                let y = net
                    .forward(&[p.x * input_scale, p.y * input_scale])
                    .expect("state networks take two inputs");
                out.copy_from_slice(&y);
            }
        }
        for (o, &pin) in out.iter_mut().zip(&self.pinned) {
            if pin {
                *o = 0.0;
            }
        }
    }

    pub fn eval_point(&self, p: Point) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs];
        self.eval_into(p, &mut out);
        out
    }

    pub fn eval_state(&self, s: GridState) -> Vec<f64> {
        self.eval_point(Point::from(s))
    }

    /// Single output; cheap for tabular bodies.
    pub fn value(&self, p: Point, head: usize) -> f64 {
        if self.pinned[head] {
            return 0.0;
        }
        match &self.body {
            Body::Tabular {
                width,
                height,
                values,
            } => values[Self::cell(*width, *height, p) * self.outputs + head],
            Body::Mlp { .. } => self.eval_point(p)[head],
        }
    }

    /// Overwrites one tabular entry. Only tabular bodies support this.
    pub fn set_value(&mut self, s: GridState, head: usize, value: f64) -> Result<()> {
        if head >= self.outputs || self.pinned[head] {
            return Err(Error::InvalidHead {
                head,
                outputs: self.outputs,
            });
        }
        let outputs = self.outputs;
        match &mut self.body {
            Body::Tabular {
                width,
                height,
                values,
            } => {
                if s.x < 0 || s.y < 0 || s.x >= *width || s.y >= *height {
                    return Err(Error::OutOfGrid {
                        x: s.x,
                        y: s.y,
                        width: *width,
                        height: *height,
                    });
                }
                values[(s.y * *width + s.x) as usize * outputs + head] = value;
                Ok(())
            }
            Body::Mlp { .. } => Err(Error::InvalidArgument(
                "set_value needs a tabular approximator".into(),
            )),
        }
    }

    /// Half mean squared error of the batch and its gradient w.r.t. the parameters.
    pub fn loss_and_grad(&self, batch: &[HeadTarget]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for (index, t) in batch.iter().enumerate() {
            if t.head >= self.outputs || self.pinned[t.head] {
                return Err(Error::InvalidHead {
                    head: t.head,
                    outputs: self.outputs,
                });
            }
            if !t.target.is_finite() {
                return Err(Error::NonFiniteTarget {
                    index,
                    value: t.target,
                });
            }
        }
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.params().len()];
        let mut loss = 0.0;
        match &self.body {
            Body::Tabular {
                width,
                height,
                values,
            } => {
                for t in batch {
                    let i = Self::cell(*width, *height, t.input) * self.outputs + t.head;
                    let err = values[i] - t.target;
                    loss += 0.5 * err * err;
                    grads[i] += err / n;
                }
            }
            Body::Mlp { net, input_scale } => {
                let mut cache = MlpCache::default();
                let mut out_grad = vec![0.0; self.outputs];
                for t in batch {
                    net.forward_cached(
                        &[t.input.x * input_scale, t.input.y * input_scale],
                        &mut cache,
                    )?;
                    let err = cache.output()[t.head] - t.target;
                    loss += 0.5 * err * err;
                    out_grad.fill(0.0);
                    out_grad[t.head] = err / n;
                    net.backward(&cache, &out_grad, &mut grads);
                }
            }
        }
        Ok((loss / n, grads))
    }

    /// One optimizer step on the half mean squared error; returns the pre-step loss.
    pub fn grad_step(&mut self, opt: &mut Optimizer, batch: &[HeadTarget]) -> Result<f64> {
        let (loss, grads) = self.loss_and_grad(batch)?;
        opt.step(self.params_mut(), &grads)?;
        Ok(loss)
    }

    /// Greedy head over the first `Action::COUNT` outputs, ties to the lowest index.
    pub fn argmax_action(&self, p: Point) -> Action {
        let mut out = [0.0; Action::COUNT];
        self.eval_actions(p, &mut out);
        Action::from_index(argmax(&out)).unwrap()
    }

    pub fn max_action_value(&self, p: Point) -> f64 {
        let mut out = [0.0; Action::COUNT];
        self.eval_actions(p, &mut out);
        out.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Action values for a Q approximator (exactly `Action::COUNT` outputs).
    pub fn eval_actions(&self, p: Point, out: &mut [f64; Action::COUNT]) {
        debug_assert_eq!(self.outputs, Action::COUNT);
        self.eval_into(p, out);
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Scale that maps cell coordinates onto `[0, 1]`.
pub fn coordinate_scale(spec: &GridSpec) -> f64 {
    1.0 / f64::from((spec.width().max(spec.height()) - 1).max(1))
}

/// `target <- (1 - mix) * target + mix * online`.
pub fn polyak_update(target: &mut Approximator, online: &Approximator, mix: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::ShapeMismatch(
            "target and online approximators differ in shape".into(),
        ));
    }
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::InvalidArgument(format!(
            "mixing coefficient {mix} outside [0, 1]"
        )));
    }
    if mix == 1.0 {
        target.params_mut().copy_from_slice(online.params());
        return Ok(());
    }
    let keep = 1.0 - mix;
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = keep * *t + mix * o;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn spec() -> GridSpec {
        GridSpec::four_room()
    }

    #[test]
    fn zero_tabular_reads_zero() {
        let q = Approximator::tabular(&spec(), 5);
        for s in spec().all_cells() {
            assert_eq!(q.eval_state(s), vec![0.0; 5]);
        }
    }

    #[test]
    fn pinned_heads_read_zero() {
        let mut rng = stream(1, Stream::NetworkInit);
        let net = Approximator::mlp(&spec(), &[8, 8], 12, &mut rng)
            .unwrap()
            .with_pinned([0, 6])
            .unwrap();
        for s in [GridState::new(0, 0), GridState::new(13, 4), GridState::new(18, 18)] {
            let out = net.eval_state(s);
            assert_eq!(out[0], 0.0);
            assert_eq!(out[6], 0.0);
            assert_eq!(net.value(Point::from(s), 6), 0.0);
        }
        let t = HeadTarget {
            input: Point::new(1.0, 1.0),
            head: 6,
            target: 1.0,
        };
        assert!(matches!(
            net.loss_and_grad(&[t]),
            Err(Error::InvalidHead { head: 6, .. })
        ));
    }

    #[test]
    fn eval_checks_width() {
        let q = Approximator::tabular(&spec(), 5);
        assert!(matches!(
            q.eval(&[1.0]),
            Err(Error::WidthMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert_eq!(q.eval(&[3.0, 4.0]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn hand_set_mlp_output() {
        // 2 -> 1 linear layer on scaled inputs: out = 18 * (x/18) - 2 * (y/18) + 0.5
        let net = Mlp::from_params(&[2, 1], true, vec![18.0, -2.0, 0.5]).unwrap();
        let f = Approximator::from_mlp(net, 1.0 / 18.0);
        let out = f.eval(&[9.0, 9.0]).unwrap();
        assert!((out[0] - (9.0 - 1.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn tabular_snaps_fictional_points() {
        let mut q = Approximator::tabular(&spec(), 5);
        q.set_value(GridState::new(3, 4), 2, 7.0).unwrap();
        assert_eq!(q.value(Point::new(3.2, 3.7), 2), 7.0);
        let mut edge = Approximator::tabular(&spec(), 5);
        edge.set_value(GridState::new(0, 18), 1, 2.0).unwrap();
        assert_eq!(edge.value(Point::new(-3.0, 40.0), 1), 2.0);
    }

    #[test]
    fn plain_gradient_single_cell() {
        let mut q = Approximator::tabular(&spec(), 5);
        let mut opt = Optimizer::plain(q.params().len(), 0.5);
        let t = HeadTarget {
            input: Point::new(2.0, 3.0),
            head: 1,
            target: 1.0,
        };
        let loss = q.grad_step(&mut opt, &[t]).unwrap();
        assert_eq!(loss, 0.5);
        assert_eq!(q.value(Point::new(2.0, 3.0), 1), 0.5);
    }

    #[test]
    fn matching_target_is_a_fixed_point() {
        let mut q = Approximator::tabular(&spec(), 5);
        q.set_value(GridState::new(5, 5), 0, 0.25).unwrap();
        let before = q.clone();
        let mut opt = Optimizer::adam(q.params().len(), 0.001);
        let t = HeadTarget {
            input: Point::new(5.0, 5.0),
            head: 0,
            target: 0.25,
        };
        assert_eq!(q.grad_step(&mut opt, &[t]).unwrap(), 0.0);
        assert_eq!(q, before);
    }

    #[test]
    fn non_finite_targets_are_rejected() {
        let mut q = Approximator::tabular(&spec(), 5);
        let mut opt = Optimizer::adam(q.params().len(), 0.001);
        let t = HeadTarget {
            input: Point::new(5.0, 5.0),
            head: 0,
            target: f64::NAN,
        };
        assert!(matches!(
            q.grad_step(&mut opt, &[t]),
            Err(Error::NonFiniteTarget { index: 0, .. })
        ));
        assert!(matches!(q.grad_step(&mut opt, &[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn polyak_extremes_and_geometric_decay() {
        let mut rng = stream(2, Stream::NetworkInit);
        let online = Approximator::mlp(&spec(), &[4], 5, &mut rng).unwrap();
        let mut target = Approximator::mlp(&spec(), &[4], 5, &mut rng).unwrap();
        let before = target.clone();
        polyak_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target, before);
        polyak_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.params(), online.params());

        let mut online = Approximator::tabular_with_size(1, 1, 1);
        online.params_mut()[0] = 1.0;
        let mut target = Approximator::tabular_with_size(1, 1, 1);
        for _ in 0..1000 {
            polyak_update(&mut target, &online, 0.001).unwrap();
        }
        let expected = 1.0 - 0.999f64.powi(1000);
        assert!((target.params()[0] - expected).abs() < 1e-12);
        assert!((expected - 0.6323).abs() < 1e-4);
    }

    #[test]
    fn polyak_shape_mismatch() {
        let mut a = Approximator::tabular(&spec(), 5);
        let b = Approximator::tabular(&spec(), 6);
        assert!(polyak_update(&mut a, &b, 0.5).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.0, 2.0, 1.0, 0.0, 0.0]), 1);
        assert_eq!(argmax(&[0.0; 5]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
