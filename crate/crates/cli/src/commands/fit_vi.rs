//! `fit-vi`: truncated stick-breaking coordinate ascent.

use bnp_core::dp_vi::{fit_vi_with, VariationalState, ViConfig};
use bnp_core::stats::{NormalNormalModel, RandomStream};
use serde::Serialize;

use super::{base_model, density_grids, write_density, BaseEcho};
use crate::config::RunConfig;
use crate::data::{fmt_f64, read_table, write_json, CsvOut};
use crate::error::{CliError, Result};

/// A component counts as effective when its expected weight exceeds this.
pub const EFFECTIVE_WEIGHT: f64 = 0.01;

/// Rounds after which a predictive snapshot is written, besides the final one.
const SNAPSHOT_ROUNDS: [usize; 2] = [1, 5];

#[derive(Serialize)]
struct ViSummary {
    items: usize,
    dim: usize,
    truncation: usize,
    alpha: f64,
    restarts: usize,
    base: BaseEcho,
    iterations: usize,
    converged: bool,
    final_elbo: f64,
    effective_threshold: f64,
    effective_components: usize,
    weights: Vec<f64>,
    /// Share of the last stick that prediction assigns to an unseen component.
    tail_weight: f64,
    means: Vec<Vec<f64>>,
    mean_variances: Vec<Vec<f64>>,
}

fn densities(
    state: &VariationalState,
    alpha: f64,
    base: &NormalNormalModel,
    grids: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    grids
        .iter()
        .enumerate()
        .map(|(d, g)| {
            state
                .predictive_density(alpha, base, d, g)
                .expect("dimension in range")
        })
        .collect()
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let table = read_table(&cfg.required_path("input")?)?;
    let points = table.rows;
    let base = base_model(cfg, &points)?;
    let truncation = cfg.usize_or("truncation", 20)?;
    if truncation == 0 {
        return Err(CliError::Config(
            "key `truncation` must be at least 1".into(),
        ));
    }
    let mut vi = ViConfig::new(truncation, cfg.positive_f64_or("alpha", 1.0)?, base);
    vi.max_iterations = cfg.usize_or("iterations", vi.max_iterations)?;
    if vi.max_iterations == 0 {
        return Err(CliError::Config(
            "key `iterations` must be at least 1".into(),
        ));
    }
    vi.tolerance = cfg.positive_f64_or("tolerance", vi.tolerance)?;
    vi.restarts = cfg.usize_or("restarts", vi.restarts)?;
    if vi.restarts == 0 {
        return Err(CliError::Config("key `restarts` must be at least 1".into()));
    }
    let grids = density_grids(cfg, &points, &base)?;
    let out = cfg.out_dir()?;

    let mut snapshots = Vec::new();
    let fit = fit_vi_with(
        &points,
        &vi,
        &mut RandomStream::new(seed, 0),
        |round, state| {
            if SNAPSHOT_ROUNDS.contains(&round) {
                snapshots.push((round, densities(state, vi.alpha, &base, &grids)));
            }
        },
    )?;

    let mut elbo = CsvOut::create(out.join("elbo.csv"))?;
    elbo.row(&["iteration", "elbo"])?;
    for (i, v) in fit.elbo_trace.iter().enumerate() {
        elbo.row(&[(i + 1).to_string(), fmt_f64(*v)])?;
    }
    elbo.finish()?;
    for (round, dens) in &snapshots {
        write_density(
            out.join(format!("predictive_iter_{round}.csv")),
            &grids,
            dens,
        )?;
    }
    let state = &fit.state;
    write_density(
        out.join("predictive_final.csv"),
        &grids,
        &densities(state, vi.alpha, &base, &grids),
    )?;

    let (_, tail_weight) = state.predictive_weights(vi.alpha);
    let summary = ViSummary {
        items: points.len(),
        dim: state.dim(),
        truncation,
        alpha: vi.alpha,
        restarts: vi.restarts,
        base: (&base).into(),
        iterations: fit.elbo_trace.len(),
        converged: fit.converged,
        final_elbo: *fit.elbo_trace.last().expect("at least one round"),
        effective_threshold: EFFECTIVE_WEIGHT,
        effective_components: state.effective_components(EFFECTIVE_WEIGHT),
        weights: state.expected_weights(),
        tail_weight,
        means: state.means().to_vec(),
        mean_variances: state.mean_variances().to_vec(),
    };
    write_json(out.join("summary.json"), &summary)
}
