//! Exact finite-horizon dynamic programming over the enumerated grid.
//!
//! Tables cover every cell (walls included) because wall-blind models can
//! place rollouts on wall cells. Conventions shared with the sampled
//! rollouts: the goal is absorbing with value zero for `h >= 1`, and a
//! successor at the goal bootstraps with zero.

use std::fmt::Write as _;

use crate::approx::Approximator;
use crate::env::{Action, GridSpec, GridState};
use crate::error::{Error, Result};
use crate::models::{DynamicsModel, Point};

pub const MAX_DP_HORIZON: usize = 10;

/// Where successor states come from.
#[derive(Clone, Copy, Debug)]
pub enum TransitionSource<'a> {
    Environment(&'a GridSpec),
    Model(&'a DynamicsModel),
}

impl<'a> TransitionSource<'a> {
    pub fn spec(&self) -> &'a GridSpec {
        match self {
            TransitionSource::Environment(spec) => spec,
            TransitionSource::Model(m) => m.spec(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            TransitionSource::Environment(_) => "environment".into(),
            TransitionSource::Model(m) => m.kind().to_string(),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            TransitionSource::Model(m) if !m.is_enumerable() => {
                Err(Error::NotEnumerable(m.kind().to_string()))
            }
            _ => Ok(()),
        }
    }

    pub fn distribution(&self, s: GridState, a: Action) -> Result<Vec<(GridState, f64)>> {
        match self {
            TransitionSource::Environment(spec) => Ok(vec![(spec.transition(s, a), 1.0)]),
            TransitionSource::Model(m) => m.predict_distribution(s, a),
        }
    }
}

/// Action probabilities for every cell, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    name: String,
    probs: Vec<[f64; Action::COUNT]>,
}

impl TabularPolicy {
    pub fn uniform(spec: &GridSpec) -> Self {
        Self {
            name: "uniform".into(),
            probs: vec![[1.0 / Action::COUNT as f64; Action::COUNT]; spec.cell_count()],
        }
    }

    pub fn always(spec: &GridSpec, a: Action) -> Self {
        let mut p = [0.0; Action::COUNT];
        p[a.index()] = 1.0;
        Self {
            name: format!("always-{a}"),
            probs: vec![p; spec.cell_count()],
        }
    }

    /// Deterministic argmax of `q`, ties to the lowest action index.
    pub fn greedy(spec: &GridSpec, q: &Approximator) -> Self {
        let probs = spec
            .all_cells()
            .map(|s| {
                let mut p = [0.0; Action::COUNT];
                p[q.argmax_action(Point::from(s)).index()] = 1.0;
                p
            })
            .collect();
        Self {
            name: "greedy".into(),
            probs,
        }
    }

    pub fn from_probs(name: &str, probs: Vec<[f64; Action::COUNT]>) -> Result<Self> {
        for (i, p) in probs.iter().enumerate() {
            let total: f64 = p.iter().sum();
            if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "row {i} is not a probability vector: {p:?}"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            probs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn probs(&self, index: usize) -> &[f64; Action::COUNT] {
        &self.probs[index]
    }

    fn check(&self, spec: &GridSpec) -> Result<()> {
        if self.probs.len() != spec.cell_count() {
            return Err(Error::LengthMismatch {
                left: self.probs.len(),
                right: spec.cell_count(),
            });
        }
        Ok(())
    }
}

/// `values[h][cell]` for `h = 0..=horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub source: String,
    pub policy: String,
    pub gamma: f64,
    width: i32,
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn slice(&self, h: usize) -> &[f64] {
        &self.values[h]
    }

    pub fn get(&self, s: GridState, h: usize) -> f64 {
        self.values[h][(s.y * self.width + s.x) as usize]
    }

    /// `x,y,h,value` rows for the open cells of `spec`.
    pub fn to_csv(&self, spec: &GridSpec) -> String {
        let mut out = String::from("x,y,h,value\n");
        for s in spec.open_cells() {
            for h in 0..=self.horizon() {
                writeln!(out, "{},{},{},{}", s.x, s.y, h, self.get(s, h)).unwrap();
            }
        }
        out
    }
}

fn check_horizon(h: usize) -> Result<()> {
    if h > MAX_DP_HORIZON {
        return Err(Error::HorizonOutOfRange {
            h,
            max: MAX_DP_HORIZON,
        });
    }
    Ok(())
}

/// Expected successor values per `(cell, action)` are recomputed for each
/// horizon from a cached distribution table.
fn distribution_table(
    source: &TransitionSource<'_>,
    spec: &GridSpec,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let mut table = Vec::with_capacity(spec.cell_count() * Action::COUNT);
    for s in spec.all_cells() {
        for a in Action::ALL {
            let d = source.distribution(s, a)?;
            table.push(d.into_iter().map(|(z, p)| (spec.index(z), p)).collect());
        }
    }
    Ok(table)
}

/// Backward induction of the `h`-step value of `policy` under `source`,
/// starting from `vbar` (one value per cell).
pub fn exact_h_values(
    source: TransitionSource<'_>,
    policy: &TabularPolicy,
    vbar: &[f64],
    horizon: usize,
    gamma: f64,
) -> Result<ValueTable> {
    source.check()?;
    check_horizon(horizon)?;
    let spec = source.spec();
    policy.check(spec)?;
    if vbar.len() != spec.cell_count() {
        return Err(Error::LengthMismatch {
            left: vbar.len(),
            right: spec.cell_count(),
        });
    }
    let dist = distribution_table(&source, spec)?;
    let goal = spec.index(spec.goal());
    let mut values = vec![vbar.to_vec()];
    for _ in 1..=horizon {
        let prev = values.last().unwrap();
        let mut next = vec![0.0; spec.cell_count()];
        for (i, s) in spec.all_cells().enumerate() {
            if i == goal {
                continue;
            }
            let mut v = 0.0;
            for a in Action::ALL {
                let p = policy.probs(i)[a.index()];
                if p == 0.0 {
                    continue;
                }
                let tail: f64 = dist[i * Action::COUNT + a.index()]
                    .iter()
                    .filter(|(z, _)| *z != goal)
                    .map(|&(z, q)| q * prev[z])
                    .sum();
                v += p * (spec.reward(s, a) + gamma * tail);
            }
            next[i] = v;
        }
        values.push(next);
    }
    Ok(ValueTable {
        source: source.name(),
        policy: policy.name().into(),
        gamma,
        width: spec.width(),
        values,
    })
}

/// Exact `E(s, h)` of `policy`: W-rewards accumulated along true transitions.
pub fn exact_model_error(
    model: &DynamicsModel,
    policy: &TabularPolicy,
    horizon: usize,
    gamma: f64,
) -> Result<ValueTable> {
    TransitionSource::Model(model).check()?;
    check_horizon(horizon)?;
    let spec = model.spec();
    policy.check(spec)?;
    let goal = spec.goal();
    let mut w = vec![[0.0; Action::COUNT]; spec.cell_count()];
    for (i, s) in spec.all_cells().enumerate() {
        for a in Action::ALL {
            w[i][a.index()] = model.w_reward(s, a, spec.transition(s, a));
        }
    }
    let mut values = vec![vec![0.0; spec.cell_count()]];
    for _ in 1..=horizon {
        let prev = values.last().unwrap();
        let mut next = vec![0.0; spec.cell_count()];
        for (i, s) in spec.all_cells().enumerate() {
            if s == goal {
                continue;
            }
            next[i] = Action::ALL
                .iter()
                .map(|&a| {
                    let p = policy.probs(i)[a.index()];
                    let z = spec.transition(s, a);
                    let tail = if z == goal { 0.0 } else { prev[spec.index(z)] };
                    p * (w[i][a.index()] + gamma * tail)
                })
                .sum();
        }
        values.push(next);
    }
    Ok(ValueTable {
        source: model.kind().to_string(),
        policy: policy.name().into(),
        gamma,
        width: spec.width(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateBound {
    pub state: GridState,
    /// `E_exact(s, H)`.
    pub error: f64,
    /// `|V_model,H(s) - V_true,H(s)|`.
    pub lhs: f64,
    /// `K_adjacent * gamma * E_exact(s, H)`.
    pub rhs: f64,
    /// Same bound with the all-pairs constant.
    pub rhs_all_pairs: f64,
}

impl StateBound {
    pub fn violates(&self) -> bool {
        self.lhs > self.rhs + 1e-12
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub model: String,
    pub policy: String,
    pub horizon: usize,
    pub gamma: f64,
    /// Largest slope between adjacent open cells over the model's `h <= H` values.
    pub k_adjacent: f64,
    /// Largest slope over every pair of cells.
    pub k_all_pairs: f64,
    /// One entry per open cell, row-major.
    pub states: Vec<StateBound>,
}

impl BoundReport {
    pub fn violations(&self) -> Vec<&StateBound> {
        self.states.iter().filter(|b| b.violates()).collect()
    }

    pub fn all_pairs_violations(&self) -> Vec<&StateBound> {
        self.states
            .iter()
            .filter(|b| b.lhs > b.rhs_all_pairs + 1e-12)
            .collect()
    }

    /// States with zero exact error but a nonzero value error.
    pub fn zero_error_failures(&self) -> Vec<&StateBound> {
        self.states
            .iter()
            .filter(|b| b.error == 0.0 && b.lhs > 1e-12)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,error,lhs,rhs,rhs_all_pairs,violation\n");
        for b in &self.states {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                b.state.x,
                b.state.y,
                b.error,
                b.lhs,
                b.rhs,
                b.rhs_all_pairs,
                u8::from(b.violates())
            )
            .unwrap();
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "model={} policy={} H={} gamma={} k_adjacent={} k_all_pairs={} states={} \
             violations={} all_pairs_violations={} zero_error_failures={}",
            self.model,
            self.policy,
            self.horizon,
            self.gamma,
            self.k_adjacent,
            self.k_all_pairs,
            self.states.len(),
            self.violations().len(),
            self.all_pairs_violations().len(),
            self.zero_error_failures().len()
        )
    }
}

/// Goal cells read as zero, matching how successors bootstrap.
fn bootstrap_view(spec: &GridSpec, slice: &[f64]) -> Vec<f64> {
    let mut v = slice.to_vec();
    v[spec.index(spec.goal())] = 0.0;
    v
}

fn lipschitz_adjacent(spec: &GridSpec, table: &ValueTable) -> f64 {
    let mut k: f64 = 0.0;
    for h in 0..=table.horizon() {
        let v = bootstrap_view(spec, table.slice(h));
        for s in spec.open_cells() {
            for n in [s.offset((1, 0)), s.offset((0, 1))] {
                if spec.contains(n) && spec.is_open(n) {
                    k = k.max((v[spec.index(s)] - v[spec.index(n)]).abs());
                }
            }
        }
    }
    k
}

fn lipschitz_all_pairs(spec: &GridSpec, table: &ValueTable) -> f64 {
    let cells: Vec<GridState> = spec.all_cells().collect();
    let mut k: f64 = 0.0;
    for h in 0..=table.horizon() {
        let v = bootstrap_view(spec, table.slice(h));
        for (i, a) in cells.iter().enumerate() {
            for (j, b) in cells.iter().enumerate().skip(i + 1) {
                k = k.max((v[i] - v[j]).abs() / a.distance(*b));
            }
        }
    }
    k
}

/// Exact value-expansion error against the cumulative-error bound.
pub fn bound_check(
    model: &DynamicsModel,
    policy: &TabularPolicy,
    vbar: &[f64],
    horizon: usize,
    gamma: f64,
) -> Result<BoundReport> {
    let spec = model.spec();
    let with_model = exact_h_values(TransitionSource::Model(model), policy, vbar, horizon, gamma)?;
    let with_env = exact_h_values(TransitionSource::Environment(spec), policy, vbar, horizon, gamma)?;
    let errors = exact_model_error(model, policy, horizon, gamma)?;
    let k_adjacent = lipschitz_adjacent(spec, &with_model);
    let k_all_pairs = lipschitz_all_pairs(spec, &with_model);
    let states = spec
        .open_cells()
        .map(|s| {
            let error = errors.get(s, horizon);
            StateBound {
                state: s,
                error,
                lhs: (with_model.get(s, horizon) - with_env.get(s, horizon)).abs(),
                rhs: k_adjacent * gamma * error,
                rhs_all_pairs: k_all_pairs * gamma * error,
            }
        })
        .collect();
    Ok(BoundReport {
        model: model.kind().to_string(),
        policy: policy.name().into(),
        horizon,
        gamma,
        k_adjacent,
        k_all_pairs,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn spec() -> GridSpec {
        GridSpec::four_room()
    }

    #[test]
    fn zero_horizon_returns_vbar() {
        let spec = spec();
        let vbar: Vec<f64> = (0..spec.cell_count()).map(|i| i as f64 * 0.01).collect();
        let t = exact_h_values(
            TransitionSource::Environment(&spec),
            &TabularPolicy::uniform(&spec),
            &vbar,
            0,
            0.98,
        )
        .unwrap();
        assert_eq!(t.slice(0), vbar.as_slice());
    }

    #[test]
    fn undiscounted_one_step_is_reward() {
        let spec = spec();
        let policy = TabularPolicy::uniform(&spec);
        let vbar = vec![3.0; spec.cell_count()];
        let t = exact_h_values(TransitionSource::Environment(&spec), &policy, &vbar, 1, 0.0).unwrap();
        for s in spec.open_cells().filter(|&s| s != spec.goal()) {
            let r: f64 = Action::ALL.iter().map(|&a| spec.reward(s, a) / 5.0).sum();
            assert_eq!(t.get(s, 1), r);
        }
        assert_eq!(t.get(GridState::new(14, 15), 1), 0.2);
    }

    #[test]
    fn oracle_matches_environment() {
        let spec = spec();
        let policy = TabularPolicy::uniform(&spec);
        let vbar = vec![0.5; spec.cell_count()];
        let oracle = DynamicsModel::oracle(&spec);
        let a = exact_h_values(TransitionSource::Model(&oracle), &policy, &vbar, 5, 0.98).unwrap();
        let b = exact_h_values(TransitionSource::Environment(&spec), &policy, &vbar, 5, 0.98).unwrap();
        for h in 0..=5 {
            for (x, y) in a.slice(h).iter().zip(b.slice(h)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let e = exact_model_error(&oracle, &policy, 5, 0.98).unwrap();
        assert!((0..=5).all(|h| e.slice(h).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn nowall_always_right_at_the_wall() {
        let spec = spec();
        let m = DynamicsModel::no_wall(&spec);
        let e = exact_model_error(&m, &TabularPolicy::always(&spec, Action::Right), 2, 0.98).unwrap();
        let s = GridState::new(8, 0);
        assert!((e.get(s, 1) - 1.0).abs() < 1e-12);
        assert!((e.get(s, 2) - 1.98).abs() < 1e-12);
    }

    #[test]
    fn three_room_error_vanishes_where_rollouts_stay_outside() {
        let spec = spec();
        let m = DynamicsModel::three_room(&spec);
        let policy = TabularPolicy::always(&spec, Action::Up);
        let e = exact_model_error(&m, &policy, 5, 0.98).unwrap();
        for s in spec.open_cells() {
            // moving up never enters the bottom-left room from outside it
            if !DynamicsModel::in_faulty_room(&spec, s) {
                assert_eq!(e.get(s, 5), 0.0, "{s}");
            } else {
                assert!(e.get(s, 5) > 0.0);
            }
        }
    }

    #[test]
    fn errors_are_nondecreasing_in_h() {
        let spec = spec();
        for kind in [ModelKind::ThreeRoom, ModelKind::NoWall] {
            let m = DynamicsModel::hand_crafted(kind, &spec).unwrap();
            for policy in [TabularPolicy::uniform(&spec), TabularPolicy::always(&spec, Action::Right)] {
                let e = exact_model_error(&m, &policy, 5, 0.98).unwrap();
                for h in 0..5 {
                    for (a, b) in e.slice(h).iter().zip(e.slice(h + 1)) {
                        assert!(b >= a);
                    }
                }
            }
        }
    }

    #[test]
    fn learned_model_is_rejected() {
        let spec = spec();
        let lm = crate::models::LearnedModel::new(
            &spec,
            &[4],
            1e-3,
            &mut crate::rng::stream(0, crate::rng::Stream::NetworkInit),
        )
        .unwrap();
        let m = DynamicsModel::learned(&spec, lm);
        let policy = TabularPolicy::uniform(&spec);
        assert!(matches!(
            exact_model_error(&m, &policy, 2, 0.98),
            Err(Error::NotEnumerable(_))
        ));
        assert!(exact_h_values(TransitionSource::Environment(&spec), &policy, &[0.0], 2, 0.98).is_err());
        assert!(exact_h_values(
            TransitionSource::Environment(&spec),
            &policy,
            &vec![0.0; 361],
            11,
            0.98
        )
        .is_err());
    }

    #[test]
    fn oracle_bound_is_trivially_tight() {
        let spec = spec();
        let m = DynamicsModel::oracle(&spec);
        let r = bound_check(&m, &TabularPolicy::uniform(&spec), &vec![0.0; 361], 3, 0.98).unwrap();
        assert_eq!(r.states.len(), 328);
        assert!(r.states.iter().all(|b| b.lhs == 0.0 && b.rhs == 0.0));
    }
}
