//! Indian buffet process feature allocations, the finite beta-Bernoulli
//! model, and the spike-and-slab linear-Gaussian factor model
//! `Y = (Z o W) X + E`.
//!
//! Rows of `Z` are customers. In the factor model a customer is one observed
//! dimension (a row of `Y`), and each feature is a latent factor with one
//! activation per observation (a row of `X`).

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dp_gibbs::{compare_samples, GewekeReport};
use crate::error::{usage, Result};
use crate::stats::{frequencies, ln_factorial, ln_gamma, log_normal_pdf, RandomStream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Binary customer-by-feature matrix stored column by column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryFeatureMatrix {
    rows: usize,
    columns: Vec<Vec<bool>>,
}

impl BinaryFeatureMatrix {
    pub fn new(rows: usize) -> Self {
        Self {
            rows,
            columns: Vec::new(),
        }
    }

    /// Build from columns, dropping any that are all zero.
    pub fn from_columns(rows: usize, columns: Vec<Vec<bool>>) -> Result<Self> {
        if let Some(k) = columns.iter().position(|c| c.len() != rows) {
            return usage(format!(
                "column {k} has {} entries, expected {rows}",
                columns[k].len()
            ));
        }
        let mut m = Self { rows, columns };
        m.prune_empty();
        Ok(m)
    }

    /// Build from 0/1 rows, dropping all-zero columns.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != k) {
            return usage(format!(
                "row {i} has {} entries, expected {k}",
                rows[i].len()
            ));
        }
        let columns = (0..k)
            .map(|j| rows.iter().map(|r| r[j] != 0).collect())
            .collect();
        Self::from_columns(m, columns)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn num_features(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, feature: usize) -> bool {
        self.columns[feature][row]
    }

    pub fn set(&mut self, row: usize, feature: usize, value: bool) {
        self.columns[feature][row] = value;
    }

    pub fn column(&self, feature: usize) -> &[bool] {
        &self.columns[feature]
    }

    /// Popularity `h_k` of every feature.
    pub fn column_sums(&self) -> Vec<usize> {
        self.columns
            .iter()
            .map(|c| c.iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|m| self.columns.iter().filter(|c| c[m]).count())
            .collect()
    }

    pub fn active_entries(&self) -> usize {
        self.column_sums().iter().sum()
    }

    pub fn push_column(&mut self, column: Vec<bool>) {
        assert_eq!(column.len(), self.rows);
        self.columns.push(column);
    }

    pub fn remove_column(&mut self, feature: usize) {
        self.columns.remove(feature);
    }

    /// Remove all-zero columns; returns the indices that were removed.
    pub fn prune_empty(&mut self) -> Vec<usize> {
        let removed: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.iter().any(|&b| b))
            .map(|(k, _)| k)
            .collect();
        self.columns.retain(|c| c.iter().any(|&b| b));
        removed
    }

    /// Columns are in order of the first customer that sampled them.
    pub fn is_first_activation_ordered(&self) -> bool {
        let firsts: Vec<usize> = self
            .columns
            .iter()
            .map(|c| c.iter().position(|&b| b).unwrap_or(usize::MAX))
            .collect();
        firsts.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|m| self.columns.iter().map(|c| c[m] as u8).collect())
            .collect()
    }

    /// Same matrix with columns reordered as `order[new] = old`.
    pub fn permute_columns(&self, order: &[usize]) -> Self {
        Self {
            rows: self.rows,
            columns: order.iter().map(|&k| self.columns[k].clone()).collect(),
        }
    }

    /// Log probability of this feature matrix under the IBP with
    /// concentration `alpha`, counting the `K!` column orderings as distinct
    /// (so the value does not depend on column order).
    pub fn log_ibp_prob(&self, alpha: f64) -> f64 {
        let m = self.rows;
        let k = self.columns.len();
        let harmonic: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
        if k == 0 {
            return -alpha * harmonic;
        }
        let per_column: f64 = self
            .column_sums()
            .iter()
            .map(|&h| ln_factorial(m - h) + ln_factorial(h - 1) - ln_factorial(m))
            .sum();
        k as f64 * alpha.ln() - ln_factorial(k) - alpha * harmonic + per_column
    }
}

/// Rate of brand-new dishes for the customer arriving in position `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DishRate {
    /// `Poisson(alpha / i)`: the sequential buffet whose finite-model limit
    /// is the beta-Bernoulli model.
    #[default]
    CustomerIndex,
    /// `Poisson(alpha / total)` for every customer.
    Constant,
}

/// Sequential buffet draw for `customers` customers.
pub fn ibp_simulate(
    customers: usize,
    alpha: f64,
    rate: DishRate,
    rng: &mut RandomStream,
) -> Result<BinaryFeatureMatrix> {
    if customers == 0 {
        return usage("need at least one customer");
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return usage(format!("alpha must be non-negative, got {alpha}"));
    }
    let mut z = BinaryFeatureMatrix::new(customers);
    let mut popularity: Vec<usize> = Vec::new();
    for i in 0..customers {
        let seen = (i + 1) as f64;
        for (k, h) in popularity.iter_mut().enumerate() {
            if rng.bernoulli(*h as f64 / seen) {
                z.columns[k][i] = true;
                *h += 1;
            }
        }
        let denom = match rate {
            DishRate::CustomerIndex => seen,
            DishRate::Constant => customers as f64,
        };
        for _ in 0..rng.poisson(alpha / denom) {
            let mut col = vec![false; customers];
            col[i] = true;
            z.columns.push(col);
            popularity.push(1);
        }
    }
    Ok(z)
}

/// Finite beta-Bernoulli model: `w_k ~ Beta(alpha/K, 1)`, `z_mk ~ Bernoulli(w_k)`.
/// All-zero columns are dropped from the result.
pub fn finite_bb_simulate(
    rows: usize,
    features: usize,
    alpha: f64,
    rng: &mut RandomStream,
) -> Result<BinaryFeatureMatrix> {
    if features == 0 {
        return usage("need at least one feature");
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return usage(format!("alpha must be positive, got {alpha}"));
    }
    let a = alpha / features as f64;
    let columns = (0..features)
        .map(|_| {
            // Beta(a, 1) = U^(1/a)
            let log_w = (1.0 - rng.uniform()).ln() / a;
            let w = log_w.exp();
            (0..rows).map(|_| rng.bernoulli(w)).collect()
        })
        .collect();
    BinaryFeatureMatrix::from_columns(rows, columns)
}

/// Priors of the factor model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorPriors {
    /// IBP concentration.
    pub alpha: f64,
    /// Slab variance of active loadings.
    pub weight_var: f64,
    /// Variance of factor activations.
    pub activation_var: f64,
    /// Inverse-gamma prior on the noise variance.
    pub noise_shape: f64,
    pub noise_scale: f64,
}

impl Default for FactorPriors {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            weight_var: 1.0,
            activation_var: 1.0,
            noise_shape: 1.0,
            noise_scale: 1.0,
        }
    }
}

impl FactorPriors {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("weight_var", self.weight_var),
            ("activation_var", self.activation_var),
            ("noise_shape", self.noise_shape),
            ("noise_scale", self.noise_scale),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return usage(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Spike-and-slab factor model state. `weights` is zero wherever `z` is.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorModelState {
    pub z: BinaryFeatureMatrix,
    /// `M x K`
    pub weights: DMatrix<f64>,
    /// `K x N`
    pub activations: DMatrix<f64>,
    pub noise_var: f64,
}

impl FactorModelState {
    /// Empty model (no factors) for `M x N` data.
    pub fn empty(rows: usize, observations: usize, noise_var: f64) -> Self {
        Self {
            z: BinaryFeatureMatrix::new(rows),
            weights: DMatrix::zeros(rows, 0),
            activations: DMatrix::zeros(0, observations),
            noise_var,
        }
    }

    pub fn num_features(&self) -> usize {
        self.z.num_features()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, k) = (self.z.rows(), self.z.num_features());
        if self.weights.shape() != (m, k) {
            return usage(format!(
                "weights are {:?}, expected ({m}, {k})",
                self.weights.shape()
            ));
        }
        if self.activations.nrows() != k {
            return usage(format!(
                "activations have {} rows, expected {k}",
                self.activations.nrows()
            ));
        }
        if !(self.noise_var > 0.0) {
            return usage("noise variance must be positive");
        }
        for j in 0..k {
            for i in 0..m {
                if !self.z.get(i, j) && self.weights[(i, j)] != 0.0 {
                    return usage(format!("loading ({i}, {j}) is non-zero but switched off"));
                }
            }
        }
        Ok(())
    }

    /// Loading matrix `G = Z o W`.
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Noise-free reconstruction `G X`.
    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.weights * &self.activations
    }

    /// Same state with features reordered as `order[new] = old`.
    pub fn permute_features(&self, order: &[usize]) -> Self {
        let weights = DMatrix::from_fn(self.weights.nrows(), order.len(), |i, j| {
            self.weights[(i, order[j])]
        });
        let activations = DMatrix::from_fn(order.len(), self.activations.ncols(), |i, j| {
            self.activations[(order[i], j)]
        });
        Self {
            z: self.z.permute_columns(order),
            weights,
            activations,
            noise_var: self.noise_var,
        }
    }

    /// `ln p(Y, Z, W, X, sigma^2)`.
    pub fn log_joint(&self, y: &DMatrix<f64>, priors: &FactorPriors) -> f64 {
        let resid = y - self.reconstruction();
        let s2 = self.noise_var;
        let count = (y.nrows() * y.ncols()) as f64;
        let lik = -0.5 * count * (LN_2PI + s2.ln()) - 0.5 * resid.norm_squared() / s2;
        let mut weights = 0.0;
        for j in 0..self.num_features() {
            for i in 0..self.z.rows() {
                if self.z.get(i, j) {
                    weights += log_normal_pdf(self.weights[(i, j)], 0.0, priors.weight_var);
                }
            }
        }
        let acts: f64 = self
            .activations
            .iter()
            .map(|&x| log_normal_pdf(x, 0.0, priors.activation_var))
            .sum();
        let (a, b) = (priors.noise_shape, priors.noise_scale);
        let noise = a * b.ln() - ln_gamma(a) - (a + 1.0) * s2.ln() - b / s2;
        lik + weights + acts + self.z.log_ibp_prob(priors.alpha) + noise
    }

    fn drop_features(&mut self, remove: &[usize]) {
        if remove.is_empty() {
            return;
        }
        let keep: Vec<usize> = (0..self.num_features())
            .filter(|k| !remove.contains(k))
            .collect();
        *self = self.permute_features(&keep);
    }

    fn push_feature(&mut self, column: Vec<bool>, weights: &[f64], activations: &[f64]) {
        self.z.push_column(column);
        let k = self.weights.ncols();
        let m = self.weights.nrows();
        let n = self.activations.ncols();
        let w = std::mem::replace(&mut self.weights, DMatrix::zeros(0, 0));
        self.weights = w.insert_column(k, 0.0);
        for (i, &w) in weights.iter().enumerate().take(m) {
            self.weights[(i, k)] = w;
        }
        let x = std::mem::replace(&mut self.activations, DMatrix::zeros(0, 0));
        self.activations = x.insert_row(k, 0.0);
        for (j, &x) in activations.iter().enumerate().take(n) {
            self.activations[(k, j)] = x;
        }
    }
}

/// Draw `z ~ N(mean, P^-1)` given the Cholesky factor of the precision `P`.
fn sample_precision_normal(
    chol: &Cholesky<f64, nalgebra::Dyn>,
    mean: &DVector<f64>,
    rng: &mut RandomStream,
) -> DVector<f64> {
    let eps = DVector::from_fn(mean.len(), |_, _| rng.standard_normal());
    let lt = chol.l().transpose();
    let offset = lt
        .solve_upper_triangular(&eps)
        .expect("Cholesky factor is non-singular");
    mean + offset
}

/// `ln N(r | 0, s2 I + w2 Xs^T Xs)` up to the `r`-independent constant
/// shared by every candidate `Xs`, with the loadings integrated out.
fn collapsed_row_log_lik(resid: &DVector<f64>, xs: &DMatrix<f64>, s2: f64, w2: f64) -> f64 {
    let k = xs.nrows();
    let base = -0.5 * resid.norm_squared() / s2;
    if k == 0 {
        return base;
    }
    let precision = xs * xs.transpose() / s2 + DMatrix::identity(k, k) / w2;
    let chol = Cholesky::new(precision).expect("positive definite precision");
    let b = xs * resid / s2;
    let sol = chol.solve(&b);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    base - 0.5 * (log_det + k as f64 * w2.ln()) + 0.5 * b.dot(&sol)
}

/// Options for the factor sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct FactorSweepOptions {
    /// Keep the noise variance fixed instead of resampling it.
    pub fix_noise: bool,
    /// Fault injection: never propose new features. The resulting chain
    /// does not leave the posterior invariant.
    pub no_births: bool,
}

/// Prior probability that row `m` uses a feature that `others` of the
/// remaining `rows - 1` rows use: `h_{-m,k} / M`.
pub fn shared_feature_prior_prob(others: usize, rows: usize) -> f64 {
    others as f64 / rows as f64
}

/// One Gibbs sweep of the factor model.
///
/// 1. Each `(z_mk, w_mk)` for features shared with other rows is updated
///    jointly, `w_mk` integrated out of the switch decision; prior odds are
///    `h_{-m,k} : M - h_{-m,k}`.
/// 2. Each row's singleton features are replaced by `Poisson(alpha / M)`
///    fresh ones, activations drawn from their prior, accepted by the
///    collapsed-loading likelihood ratio.
/// 3. Loadings and activations are drawn from their Gaussian conditionals.
/// 4. The noise variance is drawn from its inverse-gamma conditional.
/// 5. Features nobody uses are deleted.
pub fn factor_gibbs_sweep(
    state: &mut FactorModelState,
    y: &DMatrix<f64>,
    priors: &FactorPriors,
    options: FactorSweepOptions,
    rng: &mut RandomStream,
) {
    let (m_rows, n_obs) = y.shape();
    let s2 = state.noise_var;
    let w2 = priors.weight_var;
    let mut resid = y - state.reconstruction();

    // (1) shared features
    for m in 0..m_rows {
        for k in 0..state.num_features() {
            let h = state.z.column(k).iter().filter(|&&b| b).count() - state.z.get(m, k) as usize;
            if h == 0 {
                continue;
            }
            let x_k = state.activations.row(k).transpose();
            let old = state.weights[(m, k)];
            let mut r = resid.row(m).transpose();
            if old != 0.0 {
                r += &x_k * old;
            }
            let lambda = 1.0 / w2 + x_k.norm_squared() / s2;
            let mu = x_k.dot(&r) / s2 / lambda;
            let p = shared_feature_prior_prob(h, m_rows);
            let log_odds = (p / (1.0 - p)).ln() - 0.5 * (w2 * lambda).ln() + 0.5 * lambda * mu * mu;
            let on = rng.uniform() < 1.0 / (1.0 + (-log_odds).exp());
            let new = if on {
                rng.normal(mu, 1.0 / lambda)
            } else {
                0.0
            };
            state.z.set(m, k, on);
            state.weights[(m, k)] = new;
            let updated = r - &x_k * new;
            resid.set_row(m, &updated.transpose());
        }
    }

    // (2) singleton births and deaths
    for m in 0..m_rows {
        let sums = state.z.column_sums();
        let singles: Vec<usize> = (0..state.num_features())
            .filter(|&k| state.z.get(m, k) && sums[k] == 1)
            .collect();
        let mut r = resid.row(m).transpose();
        for &k in &singles {
            r += state.activations.row(k).transpose() * state.weights[(m, k)];
        }
        let old_x = DMatrix::from_fn(singles.len(), n_obs, |i, j| {
            state.activations[(singles[i], j)]
        });
        let births = if options.no_births {
            0
        } else {
            rng.poisson(priors.alpha / m_rows as f64)
        };
        let new_x = DMatrix::from_fn(births, n_obs, |_, _| rng.normal(0.0, priors.activation_var));
        let log_ratio =
            collapsed_row_log_lik(&r, &new_x, s2, w2) - collapsed_row_log_lik(&r, &old_x, s2, w2);
        if log_ratio >= 0.0 || rng.uniform().ln() < log_ratio {
            state.drop_features(&singles);
            let w_new = if births > 0 {
                let precision =
                    &new_x * new_x.transpose() / s2 + DMatrix::identity(births, births) / w2;
                let chol = Cholesky::new(precision).expect("positive definite precision");
                let mean = chol.solve(&(&new_x * &r / s2));
                sample_precision_normal(&chol, &mean, rng)
            } else {
                DVector::zeros(0)
            };
            for b in 0..births {
                let mut col = vec![false; m_rows];
                col[m] = true;
                let mut wcol = vec![0.0; m_rows];
                wcol[m] = w_new[b];
                let xrow: Vec<f64> = new_x.row(b).iter().copied().collect();
                state.push_feature(col, &wcol, &xrow);
            }
            r -= new_x.transpose() * &w_new;
            resid.set_row(m, &r.transpose());
        }
    }

    // (3) loadings row by row, then activations
    let k_total = state.num_features();
    for m in 0..m_rows {
        let active: Vec<usize> = (0..k_total).filter(|&k| state.z.get(m, k)).collect();
        if active.is_empty() {
            continue;
        }
        let xa = DMatrix::from_fn(active.len(), n_obs, |i, j| {
            state.activations[(active[i], j)]
        });
        let precision =
            &xa * xa.transpose() / s2 + DMatrix::identity(active.len(), active.len()) / w2;
        let chol = Cholesky::new(precision).expect("positive definite precision");
        let ym = y.row(m).transpose();
        let mean = chol.solve(&(&xa * ym / s2));
        let w = sample_precision_normal(&chol, &mean, rng);
        for (i, &k) in active.iter().enumerate() {
            state.weights[(m, k)] = w[i];
        }
    }
    if k_total > 0 {
        let g = &state.weights;
        let precision =
            g.transpose() * g / s2 + DMatrix::identity(k_total, k_total) / priors.activation_var;
        let chol = Cholesky::new(precision).expect("positive definite precision");
        let rhs = g.transpose() * y / s2;
        let mean = chol.solve(&rhs);
        let eps = DMatrix::from_fn(k_total, n_obs, |_, _| rng.standard_normal());
        let offset = chol
            .l()
            .transpose()
            .solve_upper_triangular(&eps)
            .expect("Cholesky factor is non-singular");
        state.activations = mean + offset;
    }

    // (4) noise variance
    if !options.fix_noise {
        let sse = (y - state.reconstruction()).norm_squared();
        let shape = priors.noise_shape + 0.5 * (m_rows * n_obs) as f64;
        let scale = priors.noise_scale + 0.5 * sse;
        state.noise_var = rng.inverse_gamma(shape, scale).max(1e-300);
    }

    // (5) unused features
    let unused: Vec<usize> = state
        .z
        .column_sums()
        .iter()
        .enumerate()
        .filter(|(_, &h)| h == 0)
        .map(|(k, _)| k)
        .collect();
    state.drop_features(&unused);
}

/// How the ground-truth feature matrix is drawn by [`factor_generate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadingScheme {
    /// Every entry of the `M x K_true` mask is on with probability `p`;
    /// columns that come out empty are redrawn.
    Bernoulli(f64),
    /// `Z` is the identity pattern (`z_mk = 1` iff `m == k`) and every
    /// active loading equals 1.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerateConfig {
    pub weight_var: f64,
    pub activation_var: f64,
    pub noise_var: f64,
    pub scheme: LoadingScheme,
}

/// Synthetic data `Y = (Z o W) X + noise` with `K_true` factors.
pub fn factor_generate(
    config: &GenerateConfig,
    rows: usize,
    observations: usize,
    k_true: usize,
    rng: &mut RandomStream,
) -> Result<(DMatrix<f64>, FactorModelState)> {
    if !(config.noise_var > 0.0) {
        return usage("noise variance must be positive");
    }
    if rows == 0 || observations == 0 {
        return usage("need at least one row and one observation");
    }
    let columns: Vec<Vec<bool>> = match config.scheme {
        LoadingScheme::Bernoulli(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return usage(format!("activation probability must be in (0, 1], got {p}"));
            }
            (0..k_true)
                .map(|_| loop {
                    let col: Vec<bool> = (0..rows).map(|_| rng.bernoulli(p)).collect();
                    if col.iter().any(|&b| b) {
                        break col;
                    }
                })
                .collect()
        }
        LoadingScheme::Identity => {
            if k_true > rows {
                return usage("identity loadings need K_true <= M");
            }
            (0..k_true)
                .map(|k| (0..rows).map(|m| m == k).collect())
                .collect()
        }
    };
    let z = BinaryFeatureMatrix::from_columns(rows, columns)?;
    let unit_loadings = config.scheme == LoadingScheme::Identity;
    Ok(factor_generate_from_mask(
        config,
        z,
        observations,
        unit_loadings,
        rng,
    ))
}

/// Synthetic data for a given feature mask: active loadings are 1 when
/// `unit_loadings` is set and `N(0, weight_var)` otherwise; activations are
/// `N(0, activation_var)`; noise is `N(0, noise_var)`.
pub fn factor_generate_from_mask(
    config: &GenerateConfig,
    z: BinaryFeatureMatrix,
    observations: usize,
    unit_loadings: bool,
    rng: &mut RandomStream,
) -> (DMatrix<f64>, FactorModelState) {
    let (rows, k) = (z.rows(), z.num_features());
    let weights = DMatrix::from_fn(rows, k, |i, j| {
        if !z.get(i, j) {
            0.0
        } else if unit_loadings {
            1.0
        } else {
            rng.normal(0.0, config.weight_var)
        }
    });
    let activations = DMatrix::from_fn(k, observations, |_, _| {
        rng.normal(0.0, config.activation_var)
    });
    let state = FactorModelState {
        z,
        weights,
        activations,
        noise_var: config.noise_var,
    };
    let clean = state.reconstruction();
    let y = DMatrix::from_fn(rows, observations, |i, j| {
        clean[(i, j)] + rng.normal(0.0, config.noise_var)
    });
    (y, state)
}

#[derive(Clone, Debug)]
pub struct FactorSample {
    pub sweep: usize,
    pub num_features: usize,
    pub log_joint: f64,
    pub state: FactorModelState,
}

#[derive(Clone, Debug, Default)]
pub struct FactorTrace {
    pub samples: Vec<FactorSample>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorChainConfig {
    pub priors: FactorPriors,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub options: FactorSweepOptions,
}

impl FactorChainConfig {
    /// 1000 sweeps, the first 500 discarded.
    pub fn new(priors: FactorPriors) -> Self {
        Self {
            priors,
            sweeps: 1000,
            burn_in: 500,
            thin: 1,
            options: FactorSweepOptions::default(),
        }
    }
}

/// Run a factor chain from the empty model and record post-burn-in states.
pub fn run_factor_chain(
    y: &DMatrix<f64>,
    config: &FactorChainConfig,
    rng: &mut RandomStream,
) -> Result<FactorTrace> {
    config.priors.validate()?;
    if config.sweeps == 0 || config.burn_in >= config.sweeps {
        return usage("burn-in must be smaller than the number of sweeps");
    }
    if config.thin == 0 {
        return usage("thin must be at least 1");
    }
    if y.nrows() == 0 || y.ncols() == 0 {
        return usage("data matrix is empty");
    }
    let mean = y.mean();
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    let mut state = FactorModelState::empty(y.nrows(), y.ncols(), var.max(1e-6));
    let mut trace = FactorTrace::default();
    for sweep in 1..=config.sweeps {
        factor_gibbs_sweep(&mut state, y, &config.priors, config.options, rng);
        if sweep > config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thin) {
            trace.samples.push(FactorSample {
                sweep,
                num_features: state.num_features(),
                log_joint: state.log_joint(y, &config.priors),
                state: state.clone(),
            });
        }
    }
    Ok(trace)
}

/// Posterior frequency of each factor count.
pub fn factor_count_histogram(trace: &FactorTrace) -> Result<BTreeMap<usize, f64>> {
    if trace.samples.is_empty() {
        return usage("factor count histogram needs a non-empty trace");
    }
    Ok(frequencies(trace.samples.iter().map(|s| s.num_features)))
}

/// Recorded state with the largest log joint; ties go to the earliest.
pub fn map_factor_estimate(trace: &FactorTrace) -> Result<&FactorSample> {
    let mut best: Option<&FactorSample> = None;
    for s in &trace.samples {
        if best.is_none_or(|b| s.log_joint > b.log_joint) {
            best = Some(s);
        }
    }
    best.ok_or_else(|| crate::BnpError::Usage("MAP estimate needs a non-empty trace".into()))
}

/// Index of the factor contributing the most energy `||g_k|| ||x_k||`.
pub fn dominant_factor(state: &FactorModelState) -> Option<usize> {
    (0..state.num_features()).max_by(|&a, &b| {
        let e = |k: usize| state.weights.column(k).norm() * state.activations.row(k).norm();
        e(a).total_cmp(&e(b))
    })
}

/// Loading vector of the leading principal component of the row
/// covariance of `y` (rows are variables, columns observations).
pub fn principal_loading(y: &DMatrix<f64>) -> DVector<f64> {
    let n = y.ncols() as f64;
    let means = DVector::from_fn(y.nrows(), |i, _| y.row(i).sum() / n);
    let centered = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, j)] - means[i]);
    let cov = &centered * centered.transpose() / (n - 1.0).max(1.0);
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    eig.eigenvectors.column(top).into_owned()
}

/// Pearson correlation of two equal-length vectors.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Greedy one-to-one matching of estimated to true loading columns by
/// absolute correlation. Entry `k` is the true column matched to estimated
/// column `k`, if any.
pub fn match_columns(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (ke, kt) = (estimate.ncols(), truth.ncols());
    let mut pairs = Vec::new();
    for i in 0..ke {
        for j in 0..kt {
            let a: Vec<f64> = estimate.column(i).iter().copied().collect();
            let b: Vec<f64> = truth.column(j).iter().copied().collect();
            let r = correlation(&a, &b).abs();
            pairs.push((if r.is_nan() { 0.0 } else { r }, i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = vec![None; ke];
    let mut used = vec![false; kt];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

/// Settings for the forward-versus-chain prior check of the factor sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorGewekeConfig {
    pub priors: FactorPriors,
    pub rows: usize,
    pub observations: usize,
    pub sweeps: usize,
    pub options: FactorSweepOptions,
}

pub const FACTOR_STAT_NAMES: [&str; 4] = [
    "num_features",
    "active_entries",
    "row0_active",
    "log_noise_var",
];

fn factor_stats(state: &FactorModelState) -> Vec<f64> {
    let row0 = (0..state.num_features())
        .filter(|&k| state.z.get(0, k))
        .count();
    vec![
        state.num_features() as f64,
        state.z.active_entries() as f64,
        row0 as f64,
        state.noise_var.ln(),
    ]
}

fn draw_factor_prior(
    priors: &FactorPriors,
    rows: usize,
    observations: usize,
    rng: &mut RandomStream,
) -> Result<FactorModelState> {
    let z = ibp_simulate(rows, priors.alpha, DishRate::CustomerIndex, rng)?;
    let k = z.num_features();
    let weights = DMatrix::from_fn(rows, k, |i, j| {
        if z.get(i, j) {
            rng.normal(0.0, priors.weight_var)
        } else {
            0.0
        }
    });
    let activations = DMatrix::from_fn(k, observations, |_, _| {
        rng.normal(0.0, priors.activation_var)
    });
    let noise_var = rng.inverse_gamma(priors.noise_shape, priors.noise_scale);
    Ok(FactorModelState {
        z,
        weights,
        activations,
        noise_var,
    })
}

fn draw_factor_data(state: &FactorModelState, rng: &mut RandomStream) -> DMatrix<f64> {
    let clean = state.reconstruction();
    DMatrix::from_fn(clean.nrows(), clean.ncols(), |i, j| {
        clean[(i, j)] + rng.normal(0.0, state.noise_var)
    })
}

/// Compare statistics of forward prior draws with those of a chain that
/// alternates one sweep with a fresh draw of the data given the parameters.
/// Monitors the number of features, total active entries, active entries
/// of the first row and the log noise variance.
pub fn factor_geweke_check(
    config: &FactorGewekeConfig,
    rng: &mut RandomStream,
) -> Result<GewekeReport> {
    config.priors.validate()?;
    if config.rows == 0 || config.observations == 0 || config.sweeps < 100 {
        return usage("prior check needs data dimensions >= 1 and at least 100 sweeps");
    }
    let mut forward = Vec::with_capacity(config.sweeps);
    for _ in 0..config.sweeps {
        let s = draw_factor_prior(&config.priors, config.rows, config.observations, rng)?;
        forward.push(factor_stats(&s));
    }
    let mut state = draw_factor_prior(&config.priors, config.rows, config.observations, rng)?;
    let mut y = draw_factor_data(&state, rng);
    let mut chain = Vec::with_capacity(config.sweeps);
    for _ in 0..config.sweeps {
        factor_gibbs_sweep(&mut state, &y, &config.priors, config.options, rng);
        y = draw_factor_data(&state, rng);
        chain.push(factor_stats(&state));
    }
    Ok(compare_samples(&FACTOR_STAT_NAMES, &forward, &chain))
}
