//! `fit-mixture`: collapsed Gibbs chains for the DP mixture.

use std::collections::BTreeMap;

use bnp_core::crp::Concentration;
use bnp_core::dp_gibbs::{
    coclustering_matrix, modal_partition, posterior_predictive_density, run_chain, GibbsConfig,
    PosteriorTrace, ScanOrder, SweepOptions,
};
use bnp_core::stats::RandomStream;
use rayon::prelude::*;
use serde::Serialize;

use super::{base_model, density_grids, modal_count, write_density, BaseEcho};
use crate::config::RunConfig;
use crate::data::{fmt_f64, read_table, write_json, CsvOut};
use crate::error::{CliError, Result};

/// Largest item count for which the N x N co-clustering matrix is written.
pub const MAX_COCLUSTERING_ITEMS: usize = 5000;

#[derive(Serialize)]
struct ChainSummary {
    chain: usize,
    records: usize,
    mean_k: f64,
    k_histogram: BTreeMap<usize, f64>,
    final_alpha: f64,
}

#[derive(Serialize)]
struct MixtureSummary {
    items: usize,
    dim: usize,
    chains: usize,
    sweeps: usize,
    burnin: usize,
    thin: usize,
    alpha: AlphaEcho,
    base: BaseEcho,
    k_histogram: BTreeMap<usize, f64>,
    modal_k: usize,
    per_chain: Vec<ChainSummary>,
}

#[derive(Serialize)]
struct AlphaEcho {
    initial: f64,
    inferred: bool,
    shape: Option<f64>,
    rate: Option<f64>,
}

fn concentration(cfg: &RunConfig) -> Result<(Concentration, bool)> {
    match cfg.get("alpha") {
        Some("infer") => {
            let shape = cfg.positive_f64_or("alpha_shape", 1.0)?;
            let rate = cfg.positive_f64_or("alpha_rate", 1.0)?;
            Ok((Concentration::with_hyperprior(1.0, shape, rate)?, true))
        }
        _ => {
            if cfg.contains("alpha_shape") || cfg.contains("alpha_rate") {
                return Err(CliError::Config(
                    "`alpha_shape`/`alpha_rate` need `alpha = infer`".into(),
                ));
            }
            Ok((
                Concentration::new(cfg.positive_f64_or("alpha", 1.0)?)?,
                false,
            ))
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let table = read_table(&cfg.required_path("input")?)?;
    let points = table.rows;
    let n = points.len();
    let dim = points[0].len();
    let write_cocluster = cfg.bool_or("coclustering", true)?;
    if write_cocluster && n > MAX_COCLUSTERING_ITEMS {
        return Err(CliError::GuardRail(format!(
            "co-clustering matrix for {n} items exceeds the {MAX_COCLUSTERING_ITEMS}-item limit; \
             set `coclustering = false` to skip it"
        )));
    }
    let base = base_model(cfg, &points)?;
    let (alpha, infer_alpha) = concentration(cfg)?;
    let chains = cfg.chains()?;
    let (sweeps, burn_in, thin) = cfg.schedule(100, 50)?;
    let scan = match cfg.choice("scan", &["fixed", "random"], "fixed")? {
        "random" => ScanOrder::Random,
        _ => ScanOrder::Fixed,
    };
    let grids = density_grids(cfg, &points, &base)?;
    let mut gibbs = GibbsConfig::new(base, alpha, sweeps);
    gibbs.infer_alpha = infer_alpha;
    gibbs.burn_in = burn_in;
    gibbs.thin = thin;
    gibbs.options = SweepOptions {
        scan,
        ..SweepOptions::default()
    };
    let out = cfg.out_dir()?;

    let traces: Vec<PosteriorTrace> = (0..chains)
        .into_par_iter()
        .map(|c| run_chain(&points, &gibbs, &mut RandomStream::new(seed, c as u64)))
        .collect::<std::result::Result<_, _>>()?;

    let mut trace_csv = CsvOut::create(out.join("trace.csv"))?;
    let mut header: Vec<String> = ["chain", "sweep", "k", "log_joint", "alpha"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n).map(|i| format!("c_{i}")));
    trace_csv.row(&header)?;
    for (c, trace) in traces.iter().enumerate() {
        for r in &trace.records {
            let mut row = vec![
                (c + 1).to_string(),
                r.sweep_index.to_string(),
                r.num_groups().to_string(),
                fmt_f64(r.log_joint),
                fmt_f64(r.alpha),
            ];
            row.extend(r.partition.one_based().iter().map(usize::to_string));
            trace_csv.row(&row)?;
        }
    }
    trace_csv.finish()?;

    let modal =
        modal_partition(&traces).ok_or_else(|| CliError::Other("no recorded states".into()))?;
    let mut modal_csv = CsvOut::create(out.join("modal_partition.csv"))?;
    modal_csv.row(&["item", "group"])?;
    for (i, g) in modal.one_based().iter().enumerate() {
        modal_csv.row(&[(i + 1).to_string(), g.to_string()])?;
    }
    modal_csv.finish()?;

    if write_cocluster {
        let m = coclustering_matrix(&traces)?;
        let mut co = CsvOut::create(out.join("coclustering.csv"))?;
        for i in 0..n {
            co.row(&(0..n).map(|j| fmt_f64(m[(i, j)])).collect::<Vec<_>>())?;
        }
        co.finish()?;
    }

    // pool chains with equal weight per recorded state
    let pooled = PosteriorTrace {
        records: traces
            .iter()
            .flat_map(|t| t.records.iter().cloned())
            .collect(),
        ..traces[0].clone()
    };
    let densities = (0..dim)
        .map(|d| posterior_predictive_density(&pooled, &base, d, &grids[d]))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    write_density(out.join("predictive.csv"), &grids, &densities)?;

    let k_histogram = pooled.k_histogram();
    let modal_k = modal_count(&k_histogram);
    let per_chain = traces
        .iter()
        .enumerate()
        .map(|(c, t)| ChainSummary {
            chain: c + 1,
            records: t.len(),
            mean_k: t.records.iter().map(|r| r.num_groups() as f64).sum::<f64>() / t.len() as f64,
            k_histogram: t.k_histogram(),
            final_alpha: t.records.last().map_or(alpha.alpha(), |r| r.alpha),
        })
        .collect();
    let hyper = alpha.hyperprior();
    let summary = MixtureSummary {
        items: n,
        dim,
        chains,
        sweeps,
        burnin: burn_in,
        thin,
        alpha: AlphaEcho {
            initial: alpha.alpha(),
            inferred: infer_alpha,
            shape: hyper.map(|h| h.shape),
            rate: hyper.map(|h| h.rate),
        },
        base: (&base).into(),
        k_histogram,
        modal_k,
        per_chain,
    };
    write_json(out.join("summary.json"), &summary)
}
