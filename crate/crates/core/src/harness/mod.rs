//! Experiment orchestration: configuration, seeded runs, result files,
//! horizon heatmaps, the transfer experiment and the DP report.

mod config;
mod dpcheck;
mod heatmap;
mod record;
mod run;
mod transfer;

pub use config::{EnvName, ExperimentConfig};
pub use dpcheck::{dp_check, parse_policy, td_vs_dp, uniform_buffer, DpCheckOutcome, TdDpComparison, TdDpSettings};
pub use heatmap::{export_horizon_heatmap, horizon_csv, horizon_pgm, region_mean};
pub use record::{aggregate_csv, mean_stderr, EvalRow, RunRecord};
pub use run::{build_agent, run_experiment, run_seed, seed_dir, train_seed, write_run, ExperimentOutcome};
pub use transfer::{transfer_experiment, TransferOutcome, VARIANTS};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Maps `f` over `items` on up to `workers` threads; results keep input order.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot is filled"))
        .collect()
}
