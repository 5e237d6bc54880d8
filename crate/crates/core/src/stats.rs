//! Seeded random streams, elementary samplers and the conjugate
//! Normal-Normal model shared by every other module.
//!
//! All densities are returned on the log scale.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, Poisson};

use crate::error::{usage, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A reproducible random stream.
///
/// Backed by ChaCha20 (`rand_chacha` 0.9): the 64-bit seed expands into the
/// key and `stream_id` selects the ChaCha stream, so streams that share a
/// seed but differ in id never overlap. Identical `(seed, stream_id)` pairs
/// produce bit-identical sequences.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer on `0..upper`.
    pub fn index(&mut self, upper: usize) -> usize {
        self.rng.random_range(0..upper)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self, mean: f64, variance: f64) -> f64 {
        if variance == 0.0 {
            return mean;
        }
        Normal::new(mean, variance.sqrt())
            .expect("finite normal parameters")
            .sample(&mut self.rng)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.normal(0.0, 1.0)
    }

    /// Gamma draw with the given shape and *rate*.
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        Gamma::new(shape, 1.0 / rate)
            .expect("positive gamma parameters")
            .sample(&mut self.rng)
    }

    /// Logarithm of a Gamma(shape, 1) draw, accurate for very small shapes
    /// where the draw itself underflows.
    pub fn log_gamma_variate(&mut self, shape: f64) -> f64 {
        if shape >= 1.0 {
            return self.gamma(shape, 1.0).ln();
        }
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        let boosted = self.gamma(shape + 1.0, 1.0).ln();
        let u = 1.0 - self.uniform();
        boosted + u.ln() / shape
    }

    /// Inverse-gamma draw parameterised by shape and scale.
    pub fn inverse_gamma(&mut self, shape: f64, scale: f64) -> f64 {
        1.0 / self.gamma(shape, scale)
    }

    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        Beta::new(a, b)
            .expect("positive beta parameters")
            .sample(&mut self.rng)
    }

    pub fn poisson(&mut self, rate: f64) -> usize {
        if rate <= 0.0 {
            return 0;
        }
        let draw: f64 = Poisson::new(rate)
            .expect("finite poisson rate")
            .sample(&mut self.rng);
        draw as usize
    }

    /// Dirichlet draw. Computed through log-gamma variates so that tiny
    /// concentrations do not collapse to an all-zero vector.
    pub fn dirichlet(&mut self, concentrations: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = concentrations
            .iter()
            .map(|&a| self.log_gamma_variate(a))
            .collect();
        let norm = log_sum_exp(&logs).expect("non-empty concentration vector");
        logs.into_iter().map(|l| (l - norm).exp()).collect()
    }

    /// Index drawn proportionally to `weights` (non-negative, not all zero).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    /// Index drawn proportionally to `exp(log_weights)`.
    pub fn categorical_log(&mut self, log_weights: &[f64]) -> usize {
        let norm = log_sum_exp(log_weights).expect("non-empty weight vector");
        let probs: Vec<f64> = log_weights.iter().map(|l| (l - norm).exp()).collect();
        self.categorical(&probs)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Relative frequency of each distinct item. Counts are divided once at the
/// end, so a single repeated item gets exactly 1.
pub fn frequencies<K: Ord>(items: impl IntoIterator<Item = K>) -> BTreeMap<K, f64> {
    let mut counts: BTreeMap<K, usize> = BTreeMap::new();
    for item in items {
        *counts.entry(item).or_insert(0) += 1;
    }
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect()
}

/// Stable `log(sum(exp(values)))`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return usage("log_sum_exp of an empty list");
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if max == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let shifted: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + shifted.ln())
}

pub fn log_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// `ln(n!)`
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

pub fn normal_cdf(x: f64, mean: f64, variance: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * statrs::function::erf::erfc(-(x - mean) / (2.0 * variance).sqrt())
}

/// Count, sum and sum of squares of a group of scalar observations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SuffStats {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl SuffStats {
    /// Statistics of a batch. Values are accumulated in sorted order so the
    /// result is bit-identical for every permutation of `data`.
    pub fn from_slice(data: &[f64]) -> Self {
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut s = Self::default();
        for y in sorted {
            s.add(y);
        }
        s
    }

    pub fn add(&mut self, y: f64) {
        self.n += 1;
        self.sum += y;
        self.sum_sq += y * y;
    }

    pub fn remove(&mut self, y: f64) {
        debug_assert!(self.n > 0);
        self.n -= 1;
        if self.n == 0 {
            *self = Self::default();
        } else {
            self.sum -= y;
            self.sum_sq -= y * y;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Normal likelihood with known variance and a Normal prior on its mean.
///
/// Serves as both the base distribution over component means and the
/// component likelihood of every Gaussian mixture in this crate.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalNormalModel {
    prior_mean: f64,
    prior_var: f64,
    obs_var: f64,
}

impl NormalNormalModel {
    pub fn new(prior_mean: f64, prior_var: f64, obs_var: f64) -> Result<Self> {
        if !prior_mean.is_finite() {
            return usage(format!("prior mean must be finite, got {prior_mean}"));
        }
        if !(prior_var > 0.0 && prior_var.is_finite()) {
            return usage(format!("prior variance must be positive, got {prior_var}"));
        }
        if !(obs_var > 0.0 && obs_var.is_finite()) {
            return usage(format!(
                "observation variance must be positive, got {obs_var}"
            ));
        }
        Ok(Self {
            prior_mean,
            prior_var,
            obs_var,
        })
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn prior_var(&self) -> f64 {
        self.prior_var
    }

    pub fn obs_var(&self) -> f64 {
        self.obs_var
    }

    /// Posterior mean and variance of the component mean.
    pub fn posterior(&self, stats: &SuffStats) -> (f64, f64) {
        let precision = 1.0 / self.prior_var + stats.n as f64 / self.obs_var;
        let var = 1.0 / precision;
        let mean = var * (self.prior_mean / self.prior_var + stats.sum / self.obs_var);
        (mean, var)
    }

    pub fn conjugate_posterior(&self, data: &[f64]) -> (f64, f64) {
        self.posterior(&SuffStats::from_slice(data))
    }

    /// Log marginal likelihood of a group with the component mean integrated out.
    pub fn log_marginal(&self, stats: &SuffStats) -> f64 {
        if stats.n == 0 {
            return 0.0;
        }
        let n = stats.n as f64;
        let mean = stats.sum / n;
        let within = (stats.sum_sq - stats.sum * mean).max(0.0);
        let spread = self.obs_var + n * self.prior_var;
        let d = mean - self.prior_mean;
        -0.5 * n * (LN_2PI + self.obs_var.ln()) + 0.5 * (self.obs_var / spread).ln()
            - 0.5 * (within / self.obs_var + n * d * d / spread)
    }

    pub fn marginal_likelihood(&self, data: &[f64]) -> f64 {
        self.log_marginal(&SuffStats::from_slice(data))
    }

    /// Log density of a new observation given a group's statistics.
    pub fn log_predictive(&self, y: f64, stats: &SuffStats) -> f64 {
        let (mean, var) = self.posterior(stats);
        log_normal_pdf(y, mean, var + self.obs_var)
    }

    /// Log density of an observation under a fresh component.
    pub fn log_prior_predictive(&self, y: f64) -> f64 {
        log_normal_pdf(y, self.prior_mean, self.prior_var + self.obs_var)
    }

    pub fn log_prior_density(&self, theta: f64) -> f64 {
        log_normal_pdf(theta, self.prior_mean, self.prior_var)
    }

    pub fn log_likelihood(&self, y: f64, theta: f64) -> f64 {
        log_normal_pdf(y, theta, self.obs_var)
    }

    pub fn sample_prior(&self, rng: &mut RandomStream) -> f64 {
        rng.normal(self.prior_mean, self.prior_var)
    }

    pub fn sample_posterior(&self, stats: &SuffStats, rng: &mut RandomStream) -> f64 {
        let (mean, var) = self.posterior(stats);
        rng.normal(mean, var)
    }

    pub fn sample_observation(&self, theta: f64, rng: &mut RandomStream) -> f64 {
        rng.normal(theta, self.obs_var)
    }
}
