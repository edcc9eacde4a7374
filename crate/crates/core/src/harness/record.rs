//! Learning-curve rows and their CSV form.
//!
//! `learning_curve.csv` columns: `env_step,mean_return,returns,mean_h_bar`
//! followed by `mean_error_h0..mean_error_hH` when the run learns model
//! errors. `returns` holds the per-episode returns joined with `;`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub env_step: u64,
    pub mean_return: f64,
    pub returns: Vec<f64>,
    /// Mean weighted average horizon over open cells; NaN without model errors.
    pub mean_h_bar: f64,
    /// Mean `E(s, h)` over open cells per horizon.
    pub mean_errors: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<EvalRow>,
}

impl RunRecord {
    pub fn push(&mut self, row: EvalRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.env_step <= last.env_step {
                return Err(Error::InvalidArgument(format!(
                    "evaluation at step {} does not follow step {}",
                    row.env_step, last.env_step
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Mean return over the last `k` evaluations.
    pub fn final_return(&self, k: usize) -> f64 {
        let k = k.clamp(1, self.rows.len().max(1));
        let tail = &self.rows[self.rows.len().saturating_sub(k)..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().map(|r| r.mean_return).sum::<f64>() / tail.len() as f64
    }

    /// First evaluation step whose mean return reaches `threshold`.
    pub fn steps_to(&self, threshold: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.mean_return >= threshold)
            .map(|r| r.env_step)
    }

    pub fn to_csv(&self) -> String {
        let horizons = self.rows.first().map_or(0, |r| r.mean_errors.len());
        let mut out = String::from("env_step,mean_return,returns,mean_h_bar");
        for h in 0..horizons {
            write!(out, ",mean_error_h{h}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            let returns: Vec<String> = r.returns.iter().map(f64::to_string).collect();
            write!(out, "{},{},{},{}", r.env_step, r.mean_return, returns.join(";"), r.mean_h_bar)
                .unwrap();
            for e in &r.mean_errors {
                write!(out, ",{e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::InvalidArgument(format!("line {line}: {what}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 4 || columns[..4] != ["env_step", "mean_return", "returns", "mean_h_bar"] {
            return Err(bad(1, "unexpected header"));
        }
        let mut record = RunRecord::default();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() {
                return Err(bad(n, "wrong column count"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
            let returns = if fields[2].is_empty() {
                Vec::new()
            } else {
                fields[2].split(';').map(num).collect::<Result<_>>()?
            };
            record.push(EvalRow {
                env_step: fields[0].parse().map_err(|_| bad(n, "bad step"))?,
                mean_return: num(fields[1])?,
                returns,
                mean_h_bar: num(fields[3])?,
                mean_errors: fields[4..].iter().map(|s| num(s)).collect::<Result<_>>()?,
            })?;
        }
        Ok(record)
    }
}

/// Per-step mean and standard error of the mean return across seeds.
/// Every record must share the same evaluation steps.
pub fn aggregate_csv(records: &[RunRecord]) -> Result<String> {
    let Some(first) = records.first() else {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    };
    for r in records {
        let same = r.rows.len() == first.rows.len()
            && r.rows.iter().zip(&first.rows).all(|(a, b)| a.env_step == b.env_step);
        if !same {
            return Err(Error::InvalidArgument(
                "seeds disagree on evaluation steps".into(),
            ));
        }
    }
    let n = records.len() as f64;
    let mut out = String::from("env_step,mean_return,stderr_return,n_seeds\n");
    for (i, row) in first.rows.iter().enumerate() {
        let (mean, se) = mean_stderr(records.iter().map(|r| r.rows[i].mean_return));
        writeln!(out, "{},{},{},{}", row.env_step, mean, se, n).unwrap();
    }
    Ok(out)
}

/// Sample mean and standard error (`s / sqrt(n)` with the `n - 1` variance).
pub fn mean_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, mean: f64) -> EvalRow {
        EvalRow {
            env_step: step,
            mean_return: mean,
            returns: vec![mean, mean],
            mean_h_bar: 2.5,
            mean_errors: vec![0.0, 0.125],
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut r = RunRecord::default();
        r.push(row(2000, 0.1)).unwrap();
        r.push(row(4000, 0.3)).unwrap();
        let back = RunRecord::from_csv(&r.to_csv()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().starts_with("env_step,mean_return,returns,mean_h_bar,mean_error_h0"));
    }

    #[test]
    fn rows_must_increase() {
        let mut r = RunRecord::default();
        r.push(row(2000, 0.1)).unwrap();
        assert!(r.push(row(2000, 0.2)).is_err());
    }

    #[test]
    fn metrics() {
        let mut r = RunRecord::default();
        for (i, m) in [0.0, 0.5, 0.9, 1.0, 0.8].into_iter().enumerate() {
            r.push(row((i as u64 + 1) * 2000, m)).unwrap();
        }
        assert_eq!(r.steps_to(0.85), Some(6000));
        assert_eq!(r.steps_to(1.1), None);
        assert!((r.final_return(2) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn standard_error() {
        let (m, se) = mean_stderr([1.0, 2.0, 3.0, 4.0].into_iter());
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr([2.0].into_iter()), (2.0, 0.0));
    }
}
