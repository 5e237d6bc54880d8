//! `fit-factors`: IBP latent factor model on an M x N matrix
//! (rows are measures, columns are observations).

use std::collections::BTreeMap;

use bnp_core::ibp::{
    correlation, dominant_factor, map_factor_estimate, principal_loading, run_factor_chain,
    FactorChainConfig, FactorPriors, FactorSample, FactorTrace,
};
use bnp_core::stats::{frequencies, RandomStream};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{finite_or_null, modal_count};
use crate::config::RunConfig;
use crate::data::{
    fmt_f64, matrix_rows, read_table, write_binary, write_json, write_matrix, CsvOut,
};
use crate::error::{CliError, Result};

#[derive(Serialize)]
struct MapEcho {
    chain: usize,
    sweep: usize,
    k: usize,
    log_joint: f64,
    noise_var: f64,
    /// Root mean squared difference between the data and the MAP reconstruction.
    rmse: f64,
}

#[derive(Serialize)]
struct FactorSummary {
    measures: usize,
    observations: usize,
    chains: usize,
    sweeps: usize,
    burnin: usize,
    thin: usize,
    priors: FactorPriors,
    k_histogram: BTreeMap<usize, f64>,
    modal_k: usize,
    map: MapEcho,
    /// Correlation between the dominant factor's loadings and the leading
    /// principal component (`null` when undefined, e.g. no factors).
    first_loading_correlation: Option<f64>,
}

fn priors(cfg: &RunConfig) -> Result<FactorPriors> {
    let alpha = cfg.positive_f64_or("alpha", 1.0)?;
    let p = FactorPriors {
        alpha,
        weight_var: cfg.positive_f64_or("weight_var", 1.0)?,
        activation_var: cfg.positive_f64_or("activation_var", 1.0)?,
        noise_shape: cfg.positive_f64_or("noise_shape", 1.0)?,
        noise_scale: cfg.positive_f64_or("noise_scale", 1.0)?,
    };
    p.validate()?;
    Ok(p)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let table = read_table(&cfg.required_path("input")?)?;
    let (m, n) = (table.num_rows(), table.num_cols());
    let y = DMatrix::from_fn(m, n, |i, j| table.rows[i][j]);
    let priors = priors(cfg)?;
    let chains = cfg.chains()?;
    let (sweeps, burn_in, thin) = cfg.schedule(1000, 500)?;
    let chain_cfg = FactorChainConfig {
        sweeps,
        burn_in,
        thin,
        ..FactorChainConfig::new(priors)
    };
    let out = cfg.out_dir()?;

    let traces: Vec<FactorTrace> = (0..chains)
        .into_par_iter()
        .map(|c| run_factor_chain(&y, &chain_cfg, &mut RandomStream::new(seed, c as u64)))
        .collect::<std::result::Result<_, _>>()?;

    let mut trace_csv = CsvOut::create(out.join("trace.csv"))?;
    trace_csv.row(&["chain", "sweep", "k", "log_joint", "noise_var"])?;
    for (c, t) in traces.iter().enumerate() {
        for s in &t.samples {
            trace_csv.row(&[
                (c + 1).to_string(),
                s.sweep.to_string(),
                s.num_features.to_string(),
                fmt_f64(s.log_joint),
                fmt_f64(s.state.noise_var),
            ])?;
        }
    }
    trace_csv.finish()?;

    let k_histogram = frequencies(
        traces
            .iter()
            .flat_map(|t| &t.samples)
            .map(|s| s.num_features),
    );
    let mut counts = CsvOut::create(out.join("factor_counts.csv"))?;
    counts.row(&["k", "frequency"])?;
    for (k, f) in &k_histogram {
        counts.row(&[k.to_string(), fmt_f64(*f)])?;
    }
    counts.finish()?;
    let modal_k = modal_count(&k_histogram);

    // MAP over all chains; ties go to the earlier chain
    let mut best: Option<(usize, &FactorSample)> = None;
    for (c, t) in traces.iter().enumerate() {
        let s = map_factor_estimate(t)?;
        if best.is_none_or(|(_, b)| s.log_joint > b.log_joint) {
            best = Some((c, s));
        }
    }
    let (map_chain, map) = best.ok_or_else(|| CliError::Other("no recorded states".into()))?;
    let state = &map.state;
    write_binary(out.join("map_z.csv"), &state.z.to_rows())?;
    write_matrix(out.join("map_w.csv"), &matrix_rows(state.loadings()))?;
    write_matrix(out.join("map_x.csv"), &matrix_rows(&state.activations))?;
    let residual = &y - state.reconstruction();
    let rmse = (residual.norm_squared() / (m * n) as f64).sqrt();

    let classical: Vec<f64> = principal_loading(&y).iter().copied().collect();
    let factor: Vec<f64> = match dominant_factor(state) {
        Some(k) => state.loadings().column(k).iter().copied().collect(),
        None => vec![0.0; m],
    };
    let r = correlation(&factor, &classical);
    // eigenvectors have arbitrary sign; align the classical one with the factor
    let sign = if r < 0.0 { -1.0 } else { 1.0 };
    let mut loading_csv = CsvOut::create(out.join("first_loading.csv"))?;
    loading_csv.row(&["measure", "factor_loading", "classical_loading"])?;
    for i in 0..m {
        loading_csv.row(&[
            (i + 1).to_string(),
            fmt_f64(factor[i]),
            fmt_f64(sign * classical[i]),
        ])?;
    }
    loading_csv.finish()?;

    let summary = FactorSummary {
        measures: m,
        observations: n,
        chains,
        sweeps,
        burnin: burn_in,
        thin,
        priors,
        k_histogram,
        modal_k,
        map: MapEcho {
            chain: map_chain + 1,
            sweep: map.sweep,
            k: map.num_features,
            log_joint: map.log_joint,
            noise_var: state.noise_var,
            rmse,
        },
        first_loading_correlation: finite_or_null(r.abs()),
    };
    write_json(out.join("summary.json"), &summary)
}
