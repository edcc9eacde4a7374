//! Model rollouts, per-horizon expanded values, softmax horizon weights and the
//! mixed target.

use crate::approx::Approximator;
use crate::env::{Action, GridSpec};
use crate::error::{Error, Result};
use crate::models::{DynamicsModel, Point};
use crate::rng::Rng;

/// Fills `out[h]` (`h = 0..out.len()`) with the `h`-step expanded value of a
/// single greedy rollout from `start`.
///
/// Actions are greedy in `q`; the tail is `max_a qbar`. Rewards come from the
/// true reward function at the snapped rollout state. A rollout that reaches
/// the goal stops there and later horizons repeat its return.
pub fn rollout_values_into(
    model: &DynamicsModel,
    q: &Approximator,
    qbar: &Approximator,
    start: Point,
    gamma: f64,
    rng: &mut Rng,
    out: &mut [f64],
) {
    let spec: &GridSpec = model.spec();
    let mut p = start;
    let mut ret = 0.0;
    let mut discount = 1.0;
    let mut qvals = [0.0; Action::COUNT];
    for h in 0..out.len() {
        let cell = p.snap(spec);
        if spec.is_goal(cell) {
            out[h..].fill(ret);
            return;
        }
        qbar.eval_actions(p, &mut qvals);
        let tail = qvals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out[h] = ret + discount * tail;
        if h + 1 == out.len() {
            break;
        }
        let a = q.argmax_action(p);
        ret += discount * spec.reward(cell, a);
        discount *= gamma;
        p = model.predict_from(p, a, rng);
    }
}

pub fn rollout_values(
    model: &DynamicsModel,
    q: &Approximator,
    qbar: &Approximator,
    start: Point,
    h_max: usize,
    gamma: f64,
    rng: &mut Rng,
) -> Vec<f64> {
    let mut out = vec![0.0; h_max + 1];
    rollout_values_into(model, q, qbar, start, gamma, rng, &mut out);
    out
}

/// Softmax of `-errs / tau`, shifted by the minimum error for stability.
pub fn horizon_weights_into(errs: &[f64], tau: f64, out: &mut [f64]) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Temperature(tau));
    }
    if errs.len() != out.len() {
        return Err(Error::LengthMismatch {
            left: errs.len(),
            right: out.len(),
        });
    }
    if errs.is_empty() {
        return Err(Error::InvalidArgument("no horizons to weight".into()));
    }
    if let Some(bad) = errs.iter().find(|e| !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite model error {bad}")));
    }
    let lowest = errs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (o, e) in out.iter_mut().zip(errs) {
        *o = (-(e - lowest) / tau).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

pub fn horizon_weights(errs: &[f64], tau: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; errs.len()];
    horizon_weights_into(errs, tau, &mut out)?;
    Ok(out)
}

pub fn mixed_target(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: weights.len(),
        });
    }
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum())
}

pub fn weighted_avg_horizon(weights: &[f64]) -> f64 {
    weights.iter().enumerate().map(|(h, w)| h as f64 * w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GridState;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn softmax_closed(errs: &[f64], tau: f64) -> Vec<f64> {
        let z: Vec<f64> = errs.iter().map(|e| (-e / tau).exp()).collect();
        let s: f64 = z.iter().sum();
        z.iter().map(|v| v / s).collect()
    }

    #[test]
    fn weight_examples() {
        let w = horizon_weights(&[0.0; 6], 0.01).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));
        assert!((weighted_avg_horizon(&w) - 2.5).abs() < 1e-12);

        let w = horizon_weights(&[0.0, 1e6, 1e6, 1e6, 1e6, 1e6], 0.01).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!(w[1..].iter().all(|&x| x == 0.0));
        assert_eq!(weighted_avg_horizon(&w), 0.0);

        let w = horizon_weights(&[0.0, 0.01, 0.02], 0.01).unwrap();
        let expected = softmax_closed(&[0.0, 1.0, 2.0], 1.0);
        for (a, b) in w.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(horizon_weights(&[0.0], 0.0), Err(Error::Temperature(_))));
        assert!(horizon_weights(&[0.0, f64::NAN], 0.01).is_err());
    }

    #[test]
    fn mixing_examples() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(mixed_target(&v, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        let uniform = [1.0 / 6.0; 6];
        assert!((mixed_target(&v, &uniform).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(weighted_avg_horizon(&[0.5, 0.0, 0.0, 0.0, 0.0, 0.5]), 2.5);
        assert!(mixed_target(&v, &[1.0]).is_err());
    }

    #[test]
    fn zero_horizon_is_model_free() {
        let spec = GridSpec::four_room();
        let model = DynamicsModel::oracle(&spec);
        let q = Approximator::tabular(&spec, Action::COUNT);
        let mut qbar = Approximator::tabular(&spec, Action::COUNT);
        qbar.set_value(GridState::new(3, 3), 2, 0.7).unwrap();
        let mut rng = stream(0, Stream::ModelSample);
        let v = rollout_values(&model, &q, &qbar, Point::new(3.0, 3.0), 0, 0.98, &mut rng);
        assert_eq!(v, vec![0.7]);
    }

    #[test]
    fn oracle_rollout_next_to_goal() {
        // (14,15) with all-zero Q moves Left under the tie rule, so point the
        // greedy choice toward the goal explicitly.
        let spec = GridSpec::four_room();
        let model = DynamicsModel::oracle(&spec);
        let mut q = Approximator::tabular(&spec, Action::COUNT);
        q.set_value(GridState::new(14, 15), Action::Right.index(), 1e-9).unwrap();
        let qbar = Approximator::tabular(&spec, Action::COUNT);
        let mut rng = stream(0, Stream::ModelSample);
        let v = rollout_values(&model, &q, &qbar, Point::new(14.0, 15.0), 5, 0.98, &mut rng);
        assert_eq!(v, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn oracle_rollout_matches_environment_stepping() {
        let spec = GridSpec::four_room();
        let model = DynamicsModel::oracle(&spec);
        let mut init = stream(3, Stream::NetworkInit);
        let mut rng = stream(3, Stream::ModelSample);
        let open: Vec<GridState> = spec.open_cells().collect();
        let gamma = 0.98;
        for _ in 0..100 {
            let mut q = Approximator::tabular(&spec, Action::COUNT);
            let mut qbar = Approximator::tabular(&spec, Action::COUNT);
            for v in q.params_mut().iter_mut().chain(qbar.params_mut().iter_mut()) {
                *v = rand::Rng::gen_range(&mut init, -1.0..1.0);
            }
            let start = open[rand::Rng::gen_range(&mut init, 0..open.len())];
            let v = rollout_values(&model, &q, &qbar, start.into(), 5, gamma, &mut rng);
            // independent replay through the true environment
            let mut s = start;
            let mut ret = 0.0;
            let mut done = spec.is_goal(s);
            for (h, &vh) in v.iter().enumerate() {
                let expected = if done {
                    ret
                } else {
                    ret + gamma.powi(h as i32) * qbar.max_action_value(s.into())
                };
                assert!((vh - expected).abs() < 1e-12);
                if !done {
                    let a = q.argmax_action(s.into());
                    let (next, r, goal) = spec.step(s, a).unwrap();
                    ret += gamma.powi(h as i32) * r;
                    s = next;
                    done = goal;
                }
            }
        }
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_shift_invariant(
            errs in prop::collection::vec(0.0f64..1e6, 1..8),
            shift in -1e6f64..1e6,
            tau in prop::sample::select(vec![0.001, 0.01, 0.1, 1.0]),
        ) {
            let w = horizon_weights(&errs, tau).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            // exact dyadic shift so shifted inputs carry no rounding
            let shift = (shift * 1024.0).round() / 1024.0;
            let errs_q: Vec<f64> = errs.iter().map(|e| (e * 1024.0).round() / 1024.0).collect();
            let shifted: Vec<f64> = errs_q.iter().map(|e| e + shift).collect();
            let a = horizon_weights(&errs_q, tau).unwrap();
            let b = horizon_weights(&shifted, tau).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn weights_are_monotone(steps in prop::collection::vec(0u32..100, 2..8)) {
            let errs: Vec<f64> = steps.iter().map(|&k| f64::from(k) / 100.0).collect();
            let w = horizon_weights(&errs, 0.5).unwrap();
            for i in 0..errs.len() {
                for j in 0..errs.len() {
                    if errs[i] < errs[j] {
                        prop_assert!(w[i] > w[j]);
                    }
                }
            }
        }

        #[test]
        fn mixed_target_is_convex(
            pairs in prop::collection::vec((-10.0f64..10.0, 0.0f64..5.0), 1..8),
        ) {
            let (v, errs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let w = horizon_weights(&errs, 1.0).unwrap();
            let m = mixed_target(&v, &w).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
            let c = mixed_target(&vec![3.25; w.len()], &w).unwrap();
            prop_assert!((c - 3.25).abs() < 1e-12);
        }
    }
}
