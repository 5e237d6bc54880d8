//! `diagnose`: convergence summaries of recorded traces and optional
//! getting-it-right checks of the samplers.

use std::collections::BTreeMap;
use std::path::PathBuf;

use bnp_core::crp::Concentration;
use bnp_core::dp_gibbs::{
    batch_means_se, geweke_prior_check, mean_var, GewekeConfig, GewekeReport, SweepKernel,
};
use bnp_core::ibp::{factor_geweke_check, FactorGewekeConfig, FactorPriors, FactorSweepOptions};
use bnp_core::stats::{frequencies, NormalNormalModel, RandomStream};
use serde::Serialize;

use super::finite_or_null;
use crate::config::RunConfig;
use crate::data::{read_table, write_json};
use crate::error::{CliError, Result};

/// Between-chain discrepancies beyond this many standard errors are flagged.
pub const DISCREPANCY_THRESHOLD: f64 = 4.0;

#[derive(Serialize)]
struct ChainReport {
    file: String,
    chain: usize,
    samples: usize,
    mean_k: f64,
    var_k: f64,
    /// Batch-means standard error of `mean_k`.
    std_error: f64,
    k_histogram: BTreeMap<usize, f64>,
}

#[derive(Serialize)]
struct Discrepancy {
    /// Largest absolute difference between two chains' mean K.
    max_mean_difference: f64,
    /// Largest pairwise difference in units of the combined standard error
    /// (`null` when two constant series disagree).
    z_score: Option<f64>,
    threshold: f64,
    flagged: bool,
}

#[derive(Serialize)]
struct GewekeEcho {
    model: &'static str,
    kernel: &'static str,
    sweeps: usize,
    report: GewekeReport,
}

#[derive(Serialize)]
struct DiagnoseReport {
    chains: Vec<ChainReport>,
    between_chain: Option<Discrepancy>,
    geweke: Option<GewekeEcho>,
}

/// Split every trace file into per-chain K series (files in the given
/// order, chains in order of first appearance).
fn load_chains(list: &str) -> Result<Vec<(String, usize, Vec<f64>)>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let path = PathBuf::from(name);
        if !path.exists() {
            return Err(CliError::io(&path, "trace file not found"));
        }
        let table = read_table(&path)?;
        let header = table
            .header
            .as_ref()
            .ok_or_else(|| CliError::Parse(format!("{name}: trace files need a header row")))?;
        let col = |key: &str| {
            header
                .iter()
                .position(|h| h == key)
                .ok_or_else(|| CliError::Parse(format!("{name}: no `{key}` column")))
        };
        let (kc, cc) = (col("k")?, header.iter().position(|h| h == "chain"));
        let mut chains: Vec<(usize, Vec<f64>)> = Vec::new();
        for row in &table.rows {
            let chain = cc.map_or(1, |c| row[c] as usize);
            match chains.iter_mut().find(|(c, _)| *c == chain) {
                Some((_, ks)) => ks.push(row[kc]),
                None => chains.push((chain, vec![row[kc]])),
            }
        }
        out.extend(chains.into_iter().map(|(c, ks)| (name.to_string(), c, ks)));
    }
    if out.is_empty() {
        return Err(CliError::Config("key `trace` lists no files".into()));
    }
    Ok(out)
}

fn chain_report(file: String, chain: usize, ks: &[f64]) -> ChainReport {
    let (mean_k, var_k) = mean_var(ks);
    let k_histogram = frequencies(ks.iter().map(|&k| k as usize));
    ChainReport {
        file,
        chain,
        samples: ks.len(),
        mean_k,
        var_k,
        std_error: batch_means_se(ks),
        k_histogram,
    }
}

fn discrepancy(chains: &[ChainReport]) -> Option<Discrepancy> {
    if chains.len() < 2 {
        return None;
    }
    let (mut max_diff, mut max_z) = (0.0f64, 0.0f64);
    for (i, a) in chains.iter().enumerate() {
        for b in &chains[i + 1..] {
            let diff = (a.mean_k - b.mean_k).abs();
            let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            // infinite when the series are constant but disagree
            let z = if diff == 0.0 { 0.0 } else { diff / se };
            max_diff = max_diff.max(diff);
            max_z = max_z.max(z);
        }
    }
    Some(Discrepancy {
        max_mean_difference: max_diff,
        z_score: finite_or_null(max_z),
        threshold: DISCREPANCY_THRESHOLD,
        flagged: max_z > DISCREPANCY_THRESHOLD,
    })
}

fn run_geweke(cfg: &RunConfig, seed: u64) -> Result<GewekeEcho> {
    let model = cfg.choice("model", &["crp-mixture", "ibp-factors"], "crp-mixture")?;
    let sweeps = cfg.usize_or("sweeps", 20_000)?;
    let mut rng = RandomStream::new(seed, 0);
    if model == "crp-mixture" {
        let kernel = cfg.choice("kernel", &["standard", "no-new-table"], "standard")?;
        let check = GewekeConfig {
            base: NormalNormalModel::new(
                cfg.f64_or("prior_mean", 0.0)?,
                cfg.positive_f64_or("prior_var", 10.0)?,
                cfg.positive_f64_or("obs_var", 1.0)?,
            )?,
            alpha: Concentration::new(cfg.positive_f64_or("alpha", 1.0)?)?,
            n: cfg.usize_or("n", 20)?,
            sweeps,
            kernel: if kernel == "no-new-table" {
                SweepKernel::NoNewTable
            } else {
                SweepKernel::Standard
            },
        };
        let report = geweke_prior_check(&check, &mut rng)?;
        Ok(GewekeEcho {
            model,
            kernel,
            sweeps,
            report,
        })
    } else {
        let kernel = cfg.choice("kernel", &["standard", "no-births"], "standard")?;
        let check = FactorGewekeConfig {
            priors: FactorPriors {
                alpha: cfg.positive_f64_or("alpha", 1.0)?,
                weight_var: cfg.positive_f64_or("weight_var", 1.0)?,
                activation_var: cfg.positive_f64_or("activation_var", 1.0)?,
                noise_shape: cfg.positive_f64_or("noise_shape", 1.0)?,
                noise_scale: cfg.positive_f64_or("noise_scale", 1.0)?,
            },
            rows: cfg.usize_or("m", 6)?,
            observations: cfg.usize_or("observations", 5)?,
            sweeps,
            options: FactorSweepOptions {
                no_births: kernel == "no-births",
                ..FactorSweepOptions::default()
            },
        };
        let report = factor_geweke_check(&check, &mut rng)?;
        Ok(GewekeEcho {
            model,
            kernel,
            sweeps,
            report,
        })
    }
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let geweke = cfg.bool_or("geweke", false)?;
    let traces = cfg.get("trace");
    if traces.is_none() && !geweke {
        return Err(CliError::Config(
            "diagnose needs `trace` files, `geweke = true`, or both".into(),
        ));
    }
    let seed = cfg.seed()?;
    let chains: Vec<ChainReport> = match traces {
        Some(list) => load_chains(list)?
            .into_iter()
            .map(|(file, chain, ks)| chain_report(file, chain, &ks))
            .collect(),
        None => Vec::new(),
    };
    let out = cfg.out_dir()?;
    let report = DiagnoseReport {
        between_chain: discrepancy(&chains),
        chains,
        geweke: if geweke {
            Some(run_geweke(cfg, seed)?)
        } else {
            None
        },
    };
    write_json(out.join("diagnose.json"), &report)
}
