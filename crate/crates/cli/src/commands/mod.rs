//! Subcommand implementations and the helpers they share.

pub mod diagnose;
pub mod fit_factors;
pub mod fit_mixture;
pub mod fit_vi;
pub mod simulate;

use std::collections::BTreeMap;

use bnp_core::stats::NormalNormalModel;
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{fmt_f64, CsvOut};
use crate::error::{CliError, Result};

/// Base measure from the config, with empirical defaults: prior mean and
/// variance are the pooled mean and variance of all entries, and the
/// observation variance is a tenth of the pooled variance.
pub fn base_model(cfg: &RunConfig, points: &[Vec<f64>]) -> Result<NormalNormalModel> {
    let values: Vec<f64> = points.iter().flatten().copied().collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let spread = if var > 0.0 { var } else { 1.0 };
    let model = NormalNormalModel::new(
        cfg.f64_or("prior_mean", mean)?,
        cfg.positive_f64_or("prior_var", spread)?,
        cfg.positive_f64_or("obs_var", 0.1 * spread)?,
    )?;
    Ok(model)
}

#[derive(Clone, Debug, Serialize)]
pub struct BaseEcho {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub obs_var: f64,
}

impl From<&NormalNormalModel> for BaseEcho {
    fn from(m: &NormalNormalModel) -> Self {
        Self {
            prior_mean: m.prior_mean(),
            prior_var: m.prior_var(),
            obs_var: m.obs_var(),
        }
    }
}

/// Evaluation grids, one per dimension. By default each spans the data range
/// widened by five prior-predictive standard deviations on either side.
pub fn density_grids(
    cfg: &RunConfig,
    points: &[Vec<f64>],
    base: &NormalNormalModel,
) -> Result<Vec<Vec<f64>>> {
    let count = cfg.usize_or("grid_points", 1001)?;
    if count < 2 {
        return Err(CliError::Config(
            "key `grid_points` must be at least 2".into(),
        ));
    }
    let pad = 5.0 * (base.prior_var() + base.obs_var()).sqrt();
    let dim = points[0].len();
    (0..dim)
        .map(|d| {
            let col = points.iter().map(|p| p[d]);
            let lo = col.clone().fold(f64::INFINITY, f64::min) - pad;
            let hi = col.fold(f64::NEG_INFINITY, f64::max) + pad;
            let lo = cfg.f64_or("grid_lo", lo)?;
            let hi = cfg.f64_or("grid_hi", hi)?;
            if hi <= lo {
                return Err(CliError::Config(format!(
                    "grid range must satisfy grid_lo < grid_hi, got [{lo}, {hi}]"
                )));
            }
            let step = (hi - lo) / (count - 1) as f64;
            Ok((0..count).map(|i| lo + step * i as f64).collect())
        })
        .collect()
}

/// Write density curves: `x,density` for one dimension, `dim,x,density`
/// otherwise (dimensions are 1-based).
pub fn write_density(
    path: std::path::PathBuf,
    grids: &[Vec<f64>],
    densities: &[Vec<f64>],
) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    let multi = grids.len() > 1;
    if multi {
        out.row(&["dim", "x", "density"])?;
    } else {
        out.row(&["x", "density"])?;
    }
    for (d, (grid, dens)) in grids.iter().zip(densities).enumerate() {
        for (&x, &p) in grid.iter().zip(dens) {
            if multi {
                out.row(&[(d + 1).to_string(), fmt_f64(x), fmt_f64(p)])?;
            } else {
                out.row(&[fmt_f64(x), fmt_f64(p)])?;
            }
        }
    }
    out.finish()
}

/// JSON-friendly float: non-finite values become `null`.
pub fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Most frequent count in a histogram; the smallest wins ties.
pub fn modal_count(histogram: &BTreeMap<usize, f64>) -> usize {
    histogram
        .iter()
        .fold(None, |best: Option<(usize, f64)>, (&k, &p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((k, p)),
        })
        .map_or(0, |(k, _)| k)
}
