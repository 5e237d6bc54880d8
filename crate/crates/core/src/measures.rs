//! Truncated stick-breaking draws of Dirichlet and beta process measures,
//! and Bernoulli process draws from a beta process measure.

use serde::{Deserialize, Serialize};

use crate::crp::Partition;
use crate::error::{usage, Result};
use crate::stats::{normal_cdf, NormalNormalModel, RandomStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    /// Weights sum to one.
    ProbabilityMeasure,
    /// Each weight lies in (0, 1]; no constraint on the total.
    BoundedWeightMeasure,
}

/// A finite list of weighted atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomMeasure {
    pub weights: Vec<f64>,
    pub atoms: Vec<f64>,
    pub kind: MeasureKind,
}

impl RandomMeasure {
    /// Total weight of the atoms falling in `[lo, hi)`.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.atoms)
            .filter(|(_, &a)| a >= lo && a < hi)
            .map(|(w, _)| w)
            .sum()
    }

    /// Draw `n` atom indices i.i.d. from a probability measure and return the
    /// partition they induce.
    pub fn sample_partition(&self, n: usize, rng: &mut RandomStream) -> Result<Partition> {
        if self.kind != MeasureKind::ProbabilityMeasure {
            return usage("only a probability measure can be sampled from");
        }
        let picks: Vec<usize> = (0..n).map(|_| rng.categorical(&self.weights)).collect();
        Ok(Partition::canonicalize(&picks))
    }
}

fn check_truncation(alpha: f64, truncation: usize) -> Result<()> {
    if truncation == 0 {
        return usage("truncation must be at least 1");
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return usage(format!("concentration must be positive, got {alpha}"));
    }
    Ok(())
}

/// Stick-breaking weights for given break fractions. The final fraction is
/// treated as 1 so the weights close to a unit total.
pub fn gem_from_fractions(fractions: &[f64]) -> Vec<f64> {
    let mut remaining = 1.0;
    let last = fractions.len().saturating_sub(1);
    fractions
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let w = if k == last { remaining } else { b * remaining };
            remaining *= 1.0 - b;
            w
        })
        .collect()
}

/// Truncated GEM(alpha) weights: `beta_k ~ Beta(1, alpha)` for `k < T`,
/// `beta_T = 1`.
pub fn gem_weights(alpha: f64, truncation: usize, rng: &mut RandomStream) -> Result<Vec<f64>> {
    check_truncation(alpha, truncation)?;
    let mut fractions: Vec<f64> = (0..truncation - 1).map(|_| rng.beta(1.0, alpha)).collect();
    fractions.push(1.0);
    Ok(gem_from_fractions(&fractions))
}

/// Truncated draw from a Dirichlet process with a Gaussian base measure.
pub fn draw_dp_measure(
    alpha: f64,
    base: &NormalNormalModel,
    truncation: usize,
    rng: &mut RandomStream,
) -> Result<RandomMeasure> {
    let weights = gem_weights(alpha, truncation, rng)?;
    let atoms = (0..truncation).map(|_| base.sample_prior(rng)).collect();
    Ok(RandomMeasure {
        weights,
        atoms,
        kind: MeasureKind::ProbabilityMeasure,
    })
}

/// A half-open interval `[lo, hi)` of the real line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Build the intervals `(-inf, c_1), [c_1, c_2), ..., [c_m, inf)`.
pub fn intervals_from_cuts(cuts: &[f64]) -> Vec<Interval> {
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend_from_slice(cuts);
    edges.push(f64::INFINITY);
    edges
        .windows(2)
        .map(|w| Interval { lo: w[0], hi: w[1] })
        .collect()
}

fn check_cover(cells: &[Interval]) -> Result<()> {
    let (Some(first), Some(last)) = (cells.first(), cells.last()) else {
        return usage("need at least one interval");
    };
    if first.lo != f64::NEG_INFINITY || last.hi != f64::INFINITY {
        return usage("intervals must cover the whole real line");
    }
    for (i, c) in cells.iter().enumerate() {
        if !(c.lo < c.hi) {
            return usage(format!("interval {i} is empty or reversed"));
        }
    }
    for (i, w) in cells.windows(2).enumerate() {
        if w[1].lo < w[0].hi {
            return usage(format!("intervals {i} and {} overlap", i + 1));
        }
        if w[1].lo > w[0].hi {
            return usage(format!("gap between intervals {i} and {}", i + 1));
        }
    }
    Ok(())
}

/// Monte Carlo moments of the measure of each cell against the Dirichlet
/// marginal `Dir(alpha G0(T_1), ..., alpha G0(T_K))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalReport {
    pub draws: usize,
    pub expected_mean: Vec<f64>,
    pub expected_var: Vec<f64>,
    pub sample_mean: Vec<f64>,
    pub sample_var: Vec<f64>,
    /// Standard error of each sample variance.
    pub var_std_error: Vec<f64>,
    pub max_mean_deviation: f64,
    pub max_var_deviation: f64,
}

impl MarginalReport {
    /// Largest absolute deviation across means and variances.
    pub fn max_deviation(&self) -> f64 {
        self.max_mean_deviation.max(self.max_var_deviation)
    }
}

pub fn dp_marginal_check(
    alpha: f64,
    base: &NormalNormalModel,
    cells: &[Interval],
    truncation: usize,
    draws: usize,
    rng: &mut RandomStream,
) -> Result<MarginalReport> {
    check_cover(cells)?;
    if draws < 2 {
        return usage("need at least two draws");
    }
    let k = cells.len();
    let expected_mean: Vec<f64> = cells
        .iter()
        .map(|c| {
            normal_cdf(c.hi, base.prior_mean(), base.prior_var())
                - normal_cdf(c.lo, base.prior_mean(), base.prior_var())
        })
        .collect();
    let expected_var: Vec<f64> = expected_mean
        .iter()
        .map(|m| m * (1.0 - m) / (alpha + 1.0))
        .collect();
    let mut samples = vec![Vec::with_capacity(draws); k];
    for _ in 0..draws {
        let g = draw_dp_measure(alpha, base, truncation, rng)?;
        for (cell, out) in cells.iter().zip(samples.iter_mut()) {
            out.push(g.mass_in(cell.lo, cell.hi));
        }
    }
    let n = draws as f64;
    let mut sample_mean = Vec::with_capacity(k);
    let mut sample_var = Vec::with_capacity(k);
    let mut var_std_error = Vec::with_capacity(k);
    for xs in &samples {
        let mean = xs.iter().sum::<f64>() / n;
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
        let var = sq.iter().sum::<f64>() / (n - 1.0);
        let var_of_sq = sq.iter().map(|s| (s - var).powi(2)).sum::<f64>() / (n - 1.0);
        sample_mean.push(mean);
        sample_var.push(var);
        var_std_error.push((var_of_sq / n).sqrt());
    }
    let max_abs = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    Ok(MarginalReport {
        draws,
        max_mean_deviation: max_abs(&sample_mean, &expected_mean),
        max_var_deviation: max_abs(&sample_var, &expected_var),
        expected_mean,
        expected_var,
        sample_mean,
        sample_var,
        var_std_error,
    })
}

/// Beta process stick weights for given break fractions: each weight is the
/// stick remaining after that break, `prod_{j<=k} (1 - beta_j)`.
pub fn bp_from_fractions(fractions: &[f64]) -> Vec<f64> {
    let mut remaining = 1.0;
    fractions
        .iter()
        .map(|&b| {
            remaining *= 1.0 - b;
            remaining
        })
        .collect()
}

/// Truncated beta process stick weights with `beta_j ~ Beta(1, alpha)`.
///
/// The total mass beyond the `T`-th atom is dropped, so truncated measures
/// understate the expected number of active atoms.
pub fn bp_stick_weights(alpha: f64, truncation: usize, rng: &mut RandomStream) -> Result<Vec<f64>> {
    check_truncation(alpha, truncation)?;
    let fractions: Vec<f64> = (0..truncation)
        .map(|_| {
            // keep each weight strictly inside (0, 1)
            rng.beta(1.0, alpha).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
        })
        .collect();
    Ok(bp_from_fractions(&fractions))
}

/// Truncated beta process measure with Gaussian atoms.
pub fn draw_bp_measure(
    alpha: f64,
    base: &NormalNormalModel,
    truncation: usize,
    rng: &mut RandomStream,
) -> Result<RandomMeasure> {
    let weights = bp_stick_weights(alpha, truncation, rng)?;
    let atoms = (0..truncation).map(|_| base.sample_prior(rng)).collect();
    Ok(RandomMeasure {
        weights,
        atoms,
        kind: MeasureKind::BoundedWeightMeasure,
    })
}

/// Independent `Bernoulli(w_k)` activation of every atom.
pub fn draw_bernoulli_process(
    measure: &RandomMeasure,
    rng: &mut RandomStream,
) -> Result<Vec<bool>> {
    if measure.kind != MeasureKind::BoundedWeightMeasure {
        return usage("a Bernoulli process needs a bounded-weight (beta process) measure");
    }
    if let Some(w) = measure.weights.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
        return usage(format!("atom weight {w} is outside (0, 1]"));
    }
    Ok(measure.weights.iter().map(|&w| rng.bernoulli(w)).collect())
}
