//! `simulate`: draw synthetic data together with its ground truth.

use std::collections::BTreeSet;

use bnp_core::crp::{self, Concentration};
use bnp_core::dp_gibbs::mean_var;
use bnp_core::ibp::{
    factor_generate, factor_generate_from_mask, ibp_simulate, DishRate, FactorModelState,
    GenerateConfig, LoadingScheme,
};
use bnp_core::stats::{NormalNormalModel, RandomStream};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{fmt_f64, matrix_rows, write_binary, write_json, write_matrix, CsvOut};
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SimModel {
    CrpMixture,
    FiniteMixture,
    IbpFactors,
}

#[derive(Serialize)]
struct ReplicateSummary {
    model: &'static str,
    replicates: usize,
    /// Quantity counted per replicate: occupied groups or dishes.
    counted: &'static str,
    mean: f64,
    std_error: f64,
    /// Exact expectation where one is available.
    expected: Option<f64>,
    /// Large-sample approximation `alpha ln N` for the mixture models.
    asymptotic: Option<f64>,
}

/// Points separated by `;`, coordinates by `,`.
fn parse_centers(text: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|p| {
            let coords = p
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| {
                            CliError::Config(format!(
                                "key `centers`: `{}` is not a number",
                                c.trim()
                            ))
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if coords.len() != dim {
                return Err(CliError::Config(format!(
                    "key `centers`: point `{}` has {} coordinates, expected {dim}",
                    p.trim(),
                    coords.len()
                )));
            }
            Ok(coords)
        })
        .collect()
}

fn mixture_base(cfg: &RunConfig) -> Result<NormalNormalModel> {
    Ok(NormalNormalModel::new(
        cfg.f64_or("prior_mean", 0.0)?,
        cfg.positive_f64_or("prior_var", 100.0)?,
        cfg.positive_f64_or("obs_var", 1.0)?,
    )?)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let model = match cfg.choice(
        "model",
        &["crp-mixture", "finite-mixture", "ibp-factors"],
        "crp-mixture",
    )? {
        "crp-mixture" => SimModel::CrpMixture,
        "finite-mixture" => SimModel::FiniteMixture,
        _ => SimModel::IbpFactors,
    };
    let replicates = cfg.chains()?;
    let out = cfg.out_dir()?;
    match model {
        SimModel::CrpMixture | SimModel::FiniteMixture => simulate_mixture(cfg, model, seed, &out)?,
        SimModel::IbpFactors => simulate_factors(cfg, seed, &out)?,
    }
    if replicates > 1 {
        let summary = replicate_counts(cfg, model, seed, replicates, &out)?;
        write_json(out.join("summary.json"), &summary)?;
    }
    Ok(())
}

/// Group labels for the mixture models plus the per-group means.
fn draw_mixture(
    cfg: &RunConfig,
    model: SimModel,
    rng: &mut RandomStream,
) -> Result<(Vec<usize>, Option<Vec<f64>>)> {
    let n = cfg.usize_or("n", 100)?;
    if n == 0 {
        return Err(CliError::Config("key `n` must be at least 1".into()));
    }
    let alpha = cfg.positive_f64_or("alpha", 1.0)?;
    match model {
        SimModel::CrpMixture => {
            let p = crp::simulate(n, &Concentration::new(alpha)?, rng)?;
            Ok((p.labels().to_vec(), None))
        }
        _ => {
            let components = match (cfg.opt_usize("components")?, cfg.get("centers")) {
                (Some(k), _) => k,
                (None, Some(c)) => c.split(';').count(),
                (None, None) => {
                    return Err(CliError::Config(
                        "finite-mixture needs `components` or `centers`".into(),
                    ))
                }
            };
            if components == 0 {
                return Err(CliError::Config(
                    "key `components` must be at least 1".into(),
                ));
            }
            let weights = rng.dirichlet(&vec![alpha / components as f64; components]);
            let labels = (0..n).map(|_| rng.categorical(&weights)).collect();
            Ok((labels, Some(weights)))
        }
    }
}

fn simulate_mixture(
    cfg: &RunConfig,
    model: SimModel,
    seed: u64,
    out: &std::path::Path,
) -> Result<()> {
    let dim = cfg.usize_or("dim", 1)?;
    if dim == 0 {
        return Err(CliError::Config("key `dim` must be at least 1".into()));
    }
    let base = mixture_base(cfg)?;
    let mut rng = RandomStream::new(seed, 0);
    let (labels, weights) = draw_mixture(cfg, model, &mut rng)?;
    let groups = match &weights {
        Some(w) => w.len(),
        None => labels.iter().max().map_or(0, |m| m + 1),
    };
    let means = match cfg.get("centers") {
        Some(text) => {
            let centers = parse_centers(text, dim)?;
            if centers.len() < groups {
                return Err(CliError::Config(format!(
                    "key `centers` lists {} points but {groups} groups are needed",
                    centers.len()
                )));
            }
            centers
        }
        None => (0..groups)
            .map(|_| (0..dim).map(|_| base.sample_prior(&mut rng)).collect())
            .collect::<Vec<Vec<f64>>>(),
    };
    let data: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| {
            means[l]
                .iter()
                .map(|&m| base.sample_observation(m, &mut rng))
                .collect()
        })
        .collect();

    write_matrix(out.join("data.csv"), &data)?;
    let mut part = CsvOut::create(out.join("truth_partition.csv"))?;
    part.row(&["item", "group"])?;
    for (i, &l) in labels.iter().enumerate() {
        part.row(&[(i + 1).to_string(), (l + 1).to_string()])?;
    }
    part.finish()?;
    let mut mean_out = CsvOut::create(out.join("truth_means.csv"))?;
    let mut header = vec!["group".to_string()];
    header.extend((1..=dim).map(|d| format!("mean_{d}")));
    mean_out.row(&header)?;
    for (g, m) in means.iter().take(groups).enumerate() {
        let mut row = vec![(g + 1).to_string()];
        row.extend(m.iter().map(|&v| fmt_f64(v)));
        mean_out.row(&row)?;
    }
    mean_out.finish()?;
    if let Some(w) = weights {
        let mut wout = CsvOut::create(out.join("truth_weights.csv"))?;
        wout.row(&["group", "weight"])?;
        for (g, &v) in w.iter().enumerate() {
            wout.row(&[(g + 1).to_string(), fmt_f64(v)])?;
        }
        wout.finish()?;
    }
    Ok(())
}

fn dish_rate(cfg: &RunConfig) -> Result<DishRate> {
    Ok(
        match cfg.choice(
            "dish_rate",
            &["customer-index", "constant"],
            "customer-index",
        )? {
            "constant" => DishRate::Constant,
            _ => DishRate::CustomerIndex,
        },
    )
}

fn ibp_rows(cfg: &RunConfig) -> Result<usize> {
    let m = cfg.usize_or("m", 9)?;
    if m == 0 {
        return Err(CliError::Config("key `m` must be at least 1".into()));
    }
    Ok(m)
}

fn ibp_alpha(cfg: &RunConfig) -> Result<f64> {
    let alpha = cfg.f64_or("alpha", 1.0)?;
    if alpha < 0.0 {
        return Err(CliError::Config(format!(
            "key `alpha` must be non-negative, got {alpha}"
        )));
    }
    Ok(alpha)
}

fn simulate_factors(cfg: &RunConfig, seed: u64, out: &std::path::Path) -> Result<()> {
    let rows = ibp_rows(cfg)?;
    let observations = cfg.usize_or("observations", 100)?;
    if observations == 0 {
        return Err(CliError::Config(
            "key `observations` must be at least 1".into(),
        ));
    }
    let scheme = match cfg.choice("loading", &["bernoulli", "identity"], "bernoulli")? {
        "identity" => LoadingScheme::Identity,
        _ => LoadingScheme::Bernoulli(cfg.f64_or("loading_prob", 0.5)?),
    };
    let gen = GenerateConfig {
        weight_var: cfg.positive_f64_or("weight_var", 1.0)?,
        activation_var: cfg.positive_f64_or("activation_var", 1.0)?,
        noise_var: cfg.positive_f64_or("noise_var", 0.05)?,
        scheme,
    };
    let mut rng = RandomStream::new(seed, 0);
    let (y, truth): (DMatrix<f64>, FactorModelState) = match cfg.opt_usize("k_true")? {
        Some(k) => factor_generate(&gen, rows, observations, k, &mut rng)?,
        None => {
            let z = ibp_simulate(rows, ibp_alpha(cfg)?, dish_rate(cfg)?, &mut rng)?;
            factor_generate_from_mask(&gen, z, observations, false, &mut rng)
        }
    };
    write_matrix(out.join("data.csv"), &matrix_rows(&y))?;
    write_binary(out.join("truth_z.csv"), &truth.z.to_rows())?;
    write_matrix(out.join("truth_w.csv"), &matrix_rows(&truth.weights))?;
    write_matrix(out.join("truth_x.csv"), &matrix_rows(&truth.activations))
}

/// Replicate `r` uses stream `r`, so replicate 0 reproduces the truth files.
fn replicate_counts(
    cfg: &RunConfig,
    model: SimModel,
    seed: u64,
    replicates: usize,
    out: &std::path::Path,
) -> Result<ReplicateSummary> {
    let counts: Vec<usize> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = RandomStream::new(seed, r as u64);
            match model {
                SimModel::IbpFactors => {
                    let z =
                        ibp_simulate(ibp_rows(cfg)?, ibp_alpha(cfg)?, dish_rate(cfg)?, &mut rng)?;
                    Ok(z.num_features())
                }
                _ => {
                    let (labels, _) = draw_mixture(cfg, model, &mut rng)?;
                    Ok(labels.into_iter().collect::<BTreeSet<_>>().len())
                }
            }
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut csv = CsvOut::create(out.join("replicates.csv"))?;
    csv.row(&["replicate", "k"])?;
    for (r, k) in counts.iter().enumerate() {
        csv.row(&[r.to_string(), k.to_string()])?;
    }
    csv.finish()?;

    let ks: Vec<f64> = counts.iter().map(|&k| k as f64).collect();
    let (mean, var) = mean_var(&ks);
    // replicates are independent, so the plain standard error applies
    let std_error = (var / ks.len() as f64).sqrt();
    let (expected, asymptotic, counted, name) = match model {
        SimModel::CrpMixture => {
            let alpha = Concentration::new(cfg.positive_f64_or("alpha", 1.0)?)?;
            let e = crp::expected_tables(cfg.usize_or("n", 100)?, &alpha)?;
            (Some(e.exact), Some(e.asymptotic), "groups", "crp-mixture")
        }
        SimModel::FiniteMixture => (None, None, "groups", "finite-mixture"),
        SimModel::IbpFactors => {
            let m = ibp_rows(cfg)?;
            let alpha = ibp_alpha(cfg)?;
            let expected = match dish_rate(cfg)? {
                DishRate::CustomerIndex => alpha * (1..=m).map(|i| 1.0 / i as f64).sum::<f64>(),
                DishRate::Constant => alpha,
            };
            (Some(expected), None, "dishes", "ibp-factors")
        }
    };
    Ok(ReplicateSummary {
        model: name,
        replicates,
        counted,
        mean,
        std_error,
        expected,
        asymptotic,
    })
}
