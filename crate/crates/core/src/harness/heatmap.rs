//! Weighted-average-horizon maps.
//!
//! CSV columns are `x,y,value`; wall cells leave `value` empty. The PGM
//! variant is a plain (P2) graymap with the top grid row first, scaling
//! `0..=h_max` to `0..=255`; walls are black.

use std::fmt::Write as _;

use crate::agent::horizon_map;
use crate::approx::Approximator;
use crate::env::GridSpec;
use crate::error::{Error, Result};
use crate::error_fn::{ErrorFunction, ReferencePolicy};

pub fn horizon_csv(spec: &GridSpec, map: &[Option<f64>]) -> String {
    let mut out = String::from("x,y,value\n");
    for (s, v) in spec.all_cells().zip(map) {
        match v {
            Some(v) => writeln!(out, "{},{},{}", s.x, s.y, v).unwrap(),
            None => writeln!(out, "{},{},", s.x, s.y).unwrap(),
        }
    }
    out
}

pub fn horizon_pgm(spec: &GridSpec, map: &[Option<f64>], h_max: usize) -> String {
    let mut out = format!("P2\n{} {}\n255\n", spec.width(), spec.height());
    let scale = 255.0 / (h_max.max(1) as f64);
    for y in (0..spec.height()).rev() {
        let row: Vec<String> = (0..spec.width())
            .map(|x| {
                let i = (y * spec.width() + x) as usize;
                map[i].map_or(0, |v| (v * scale).round().clamp(0.0, 255.0) as u8).to_string()
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Horizon map from a stored error function. `qbar` is needed only for the
/// greedy reference policy; `kind` defaults to the one the form implies.
pub fn export_horizon_heatmap(
    spec: &GridSpec,
    errfn: &ErrorFunction,
    kind: Option<ReferencePolicy>,
    qbar: Option<&Approximator>,
    tau: f64,
) -> Result<Vec<Option<f64>>> {
    let kind = match kind {
        Some(k) => k,
        None if errfn.form() == crate::error_fn::ErrorForm::State => ReferencePolicy::Replay,
        None => ReferencePolicy::Conservative,
    };
    if !errfn.fits_spec(spec) {
        return Err(Error::Transfer("error function does not match the grid".into()));
    }
    let map = horizon_map(errfn, kind, qbar, spec, tau)?;
    let bound = errfn.h_max() as f64;
    if let Some(v) = map.iter().flatten().find(|&&v| !(0.0..=bound + 1e-12).contains(&v)) {
        return Err(Error::InvalidArgument(format!(
            "weighted horizon {v} outside [0, {bound}]"
        )));
    }
    Ok(map)
}

/// Mean of the open-cell values selected by `keep`.
pub fn region_mean(
    spec: &GridSpec,
    map: &[Option<f64>],
    keep: impl Fn(crate::env::GridState) -> bool,
) -> f64 {
    let vals: Vec<f64> = spec
        .all_cells()
        .zip(map)
        .filter_map(|(s, v)| v.filter(|_| keep(s)))
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GridState;
    use crate::error_fn::ErrorForm;

    #[test]
    fn zero_errors_give_half_the_horizon() {
        let spec = GridSpec::four_room();
        let f = ErrorFunction::tabular(&spec, ErrorForm::State, 5, 0.98, 1e-3).unwrap();
        let map = export_horizon_heatmap(&spec, &f, None, None, 0.01).unwrap();
        assert_eq!(map.iter().flatten().count(), 328);
        assert!(map.iter().flatten().all(|v| (v - 2.5).abs() < 1e-12));
        assert_eq!(map[spec.index(GridState::new(9, 0))], None);
    }

    #[test]
    fn huge_errors_give_zero_horizon() {
        let spec = GridSpec::four_room();
        let mut f = ErrorFunction::tabular(&spec, ErrorForm::State, 5, 0.98, 1e-3).unwrap();
        for s in spec.open_cells() {
            for h in 1..=5 {
                f.online_mut().set_value(s, h, 1e3).unwrap();
            }
        }
        let map = export_horizon_heatmap(&spec, &f, None, None, 0.01).unwrap();
        assert!(map.iter().flatten().all(|&v| v < 1e-12));
    }

    #[test]
    fn file_formats() {
        let spec = GridSpec::four_room();
        let f = ErrorFunction::tabular(&spec, ErrorForm::State, 5, 0.98, 1e-3).unwrap();
        let map = export_horizon_heatmap(&spec, &f, None, None, 0.01).unwrap();
        let csv = horizon_csv(&spec, &map);
        assert_eq!(csv.lines().count(), 362);
        assert!(csv.contains("\n9,0,\n"));
        let pgm = horizon_pgm(&spec, &map, 5);
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("19 19"));
        assert_eq!(lines.next(), Some("255"));
        // top row, x = 0 is open (2.5 of 5 -> 128), x = 9 is the wall
        let top: Vec<&str> = lines.next().unwrap().split(' ').collect();
        assert_eq!(top[0], "128");
        assert_eq!(top[9], "0");
    }
}
