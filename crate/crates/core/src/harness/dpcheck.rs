//! DP ground truth checks: the value-error bound report and a comparison of
//! TD-learned state-form errors against exact DP.
//!
//! Files: `bound_report.csv` (`x,y,error,lhs,rhs,rhs_all_pairs,violation`, one
//! row per open cell), `bound_summary.txt`, and `td_vs_dp.csv`
//! (`x,y,h,td,dp,abs_diff`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::approx::{ReplayBuffer, Transition};
use crate::dp::{exact_model_error, bound_check, BoundReport, TabularPolicy, ValueTable};
use crate::env::{Action, GridEnv, GridSpec};
use crate::error::{Error, Result};
use crate::error_fn::{ErrorForm, ErrorFunction, ReferencePolicy};
use crate::models::{DynamicsModel, Point};
use crate::rng::{stream, Stream};

/// The learning rate decays linearly from `lr` to `lr_final`: large errors
/// need the early pace, and the late small steps quiet Adam's jitter.
/// The buffer is several times the replay capacity because per-cell action
/// frequencies in a smaller one are visibly non-uniform, and the fit tracks
/// those frequencies rather than the uniform policy.
#[derive(Clone, Debug)]
pub struct TdDpSettings {
    pub h_max: usize,
    pub gamma: f64,
    pub updates: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub mix: f64,
    pub buffer_size: usize,
    pub seed: u64,
}

impl Default for TdDpSettings {
    fn default() -> Self {
        Self {
            h_max: 5,
            gamma: 0.98,
            updates: 200_000,
            batch_size: 128,
            lr: 2e-3,
            lr_final: 1e-5,
            mix: 1e-3,
            buffer_size: 4_000_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TdDpComparison {
    pub td: ErrorFunction,
    pub dp: ValueTable,
    pub max_abs_diff: f64,
    pub max_value: f64,
}

impl TdDpComparison {
    pub fn to_csv(&self, spec: &GridSpec) -> String {
        let mut out = String::from("x,y,h,td,dp,abs_diff\n");
        for s in spec.open_cells().filter(|&s| s != spec.goal()) {
            for h in 0..=self.dp.horizon() {
                let td = self.td.online().value(Point::from(s), h).max(0.0);
                let dp = self.dp.get(s, h);
                writeln!(out, "{},{},{},{},{},{}", s.x, s.y, h, td, dp, (td - dp).abs()).unwrap();
            }
        }
        out
    }
}

/// Fills a buffer with uniformly random actions over ordinary episodes.
pub fn uniform_buffer(spec: &GridSpec, size: usize, seed: u64) -> Result<ReplayBuffer> {
    let mut env_rng = stream(seed, Stream::EnvReset);
    let mut act_rng = stream(seed, Stream::Exploration);
    let mut env = GridEnv::new(spec.clone(), &mut env_rng);
    let mut buffer = ReplayBuffer::new(size, 1)?;
    for _ in 0..size {
        let s = env.state();
        let a = Action::from_index(rand::Rng::gen_range(&mut act_rng, 0..Action::COUNT)).unwrap();
        let out = env.step(a)?;
        buffer.push(Transition {
            state: s,
            action: a,
            reward: out.reward,
            next: out.next,
            terminal: out.terminal,
            truncated: out.truncated,
        });
        if out.done() {
            env.reset(&mut env_rng);
        }
    }
    Ok(buffer)
}

/// Trains a tabular state-form error function on a uniform-random buffer and
/// compares it with the exact uniform-policy errors (goal excluded).
pub fn td_vs_dp(model: &DynamicsModel, settings: &TdDpSettings) -> Result<TdDpComparison> {
    let spec = model.spec();
    let buffer = uniform_buffer(spec, settings.buffer_size, settings.seed)?;
    let mut f = ErrorFunction::tabular(spec, ErrorForm::State, settings.h_max, settings.gamma, settings.lr)?;
    let mut rng = stream(settings.seed, Stream::ErrorBatch);
    let mut batch = Vec::with_capacity(settings.batch_size);
    let span = settings.updates.max(1) as f64;
    for i in 0..settings.updates {
        let frac = i as f64 / span;
        f.optimizer_mut()
            .set_learning_rate(settings.lr + (settings.lr_final - settings.lr) * frac);
        buffer.sample_into(settings.batch_size, &mut rng, &mut batch)?;
        f.td_update(ReferencePolicy::Replay, &batch, model, None)?;
        f.polyak(settings.mix)?;
    }
    let dp = exact_model_error(model, &TabularPolicy::uniform(spec), settings.h_max, settings.gamma)?;
    let mut max_abs_diff: f64 = 0.0;
    let mut max_value: f64 = 0.0;
    for s in spec.open_cells().filter(|&s| s != spec.goal()) {
        for h in 0..=settings.h_max {
            let td = f.online().value(Point::from(s), h).max(0.0);
            max_abs_diff = max_abs_diff.max((td - dp.get(s, h)).abs());
            max_value = max_value.max(dp.get(s, h));
        }
    }
    Ok(TdDpComparison {
        td: f,
        dp,
        max_abs_diff,
        max_value,
    })
}

#[derive(Clone, Debug)]
pub struct DpCheckOutcome {
    pub report: BoundReport,
    pub comparison: Option<TdDpComparison>,
}

/// Writes the bound report (and optionally the TD comparison) for one model
/// and policy into `out_dir`.
pub fn dp_check(
    model: &DynamicsModel,
    policy: &TabularPolicy,
    horizon: usize,
    gamma: f64,
    td: Option<&TdDpSettings>,
    out_dir: &Path,
) -> Result<DpCheckOutcome> {
    if !model.is_enumerable() {
        return Err(Error::NotEnumerable(model.kind().to_string()));
    }
    let spec = model.spec();
    let report = bound_check(model, policy, &vec![0.0; spec.cell_count()], horizon, gamma)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("bound_report.csv"), report.to_csv())?;
    let mut summary = report.summary();
    summary.push('\n');
    for b in report.violations() {
        writeln!(
            summary,
            "violation at {}: lhs={} rhs={} error={} rhs_all_pairs={}",
            b.state, b.lhs, b.rhs, b.error, b.rhs_all_pairs
        )
        .unwrap();
    }
    for b in report.zero_error_failures() {
        writeln!(summary, "zero-error failure at {}: lhs={}", b.state, b.lhs).unwrap();
    }
    let comparison = match td {
        Some(settings) => {
            let c = td_vs_dp(model, settings)?;
            fs::write(out_dir.join("td_vs_dp.csv"), c.to_csv(spec))?;
            writeln!(
                summary,
                "td_vs_dp max_abs_diff={} max_value={} ratio={}",
                c.max_abs_diff,
                c.max_value,
                if c.max_value > 0.0 { c.max_abs_diff / c.max_value } else { 0.0 }
            )
            .unwrap();
            Some(c)
        }
        None => None,
    };
    fs::write(out_dir.join("bound_summary.txt"), summary)?;
    Ok(DpCheckOutcome { report, comparison })
}

/// Parses `uniform` or `always-<action>` (for example `always-right`).
pub fn parse_policy(spec: &GridSpec, name: &str) -> Result<TabularPolicy> {
    let lower = name.to_ascii_lowercase();
    if lower == "uniform" {
        return Ok(TabularPolicy::uniform(spec));
    }
    if let Some(a) = lower.strip_prefix("always-") {
        return Ok(TabularPolicy::always(spec, a.parse()?));
    }
    Err(Error::InvalidArgument(format!("unknown policy `{name}`")))
}

