//! Mean-field variational inference for Dirichlet process mixtures of
//! diagonal Gaussians, using the truncated stick-breaking representation.
//!
//! The variational family is
//! `q(v_t) = Beta(a_t, b_t)` for `t < T` with `v_T = 1`,
//! `q(mu_td) = Normal(m_td, s_td)`, and `q(c_n) = Categorical(r_n)`.
//! Every update is an exact coordinate maximisation, so the evidence lower
//! bound never decreases.

use crate::error::{usage, Result};
use crate::stats::{digamma, ln_gamma, log_normal_pdf, NormalNormalModel, RandomStream, SuffStats};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    truncation: usize,
    dim: usize,
    /// Beta parameters of the first `T - 1` stick fractions.
    stick_a: Vec<f64>,
    stick_b: Vec<f64>,
    /// `T x d` posterior means and variances of the component means.
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
    /// `N x T`, rows sum to one.
    resp: Vec<Vec<f64>>,
}

fn check_points(data: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = data.first() else {
        return usage("variational inference needs at least one observation");
    };
    let dim = first.len();
    if dim == 0 {
        return usage("observations must have at least one dimension");
    }
    if let Some(i) = data.iter().position(|p| p.len() != dim) {
        return usage(format!(
            "observation {i} has {} values, expected {dim}",
            data[i].len()
        ));
    }
    Ok(dim)
}

/// Randomised initialisation. Points are visited in a random order and
/// seated by a single sequential pass of the collapsed CRP conditional
/// (at most `T` groups); each responsibility row puts 0.9 on the sampled
/// group and spreads the rest evenly. Groups are ordered by size so the
/// largest takes the first stick. Global factors start at their prior values.
pub fn vi_init(
    data: &[Vec<f64>],
    truncation: usize,
    alpha: f64,
    base: &NormalNormalModel,
    rng: &mut RandomStream,
) -> Result<VariationalState> {
    if truncation == 0 {
        return usage("truncation must be at least 1");
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return usage(format!("concentration must be positive, got {alpha}"));
    }
    let dim = check_points(data)?;
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.index(i + 1));
    }
    let mut groups: Vec<Vec<SuffStats>> = Vec::new();
    let mut labels = vec![0usize; n];
    let mut log_w = Vec::with_capacity(truncation);
    for &i in &order {
        let y = &data[i];
        log_w.clear();
        for g in &groups {
            let pred: f64 = g
                .iter()
                .zip(y)
                .map(|(s, &v)| base.log_predictive(v, s))
                .sum();
            log_w.push((g[0].n as f64).ln() + pred);
        }
        if groups.len() < truncation {
            let prior: f64 = y.iter().map(|&v| base.log_prior_predictive(v)).sum();
            log_w.push(alpha.ln() + prior);
        }
        let k = rng.categorical_log(&log_w);
        if k == groups.len() {
            groups.push(vec![SuffStats::default(); dim]);
        }
        for (s, &v) in groups[k].iter_mut().zip(y) {
            s.add(v);
        }
        labels[i] = k;
    }
    let mut by_size: Vec<usize> = (0..groups.len()).collect();
    by_size.sort_by(|&a, &b| groups[b][0].n.cmp(&groups[a][0].n).then(a.cmp(&b)));
    let mut rank = vec![0usize; groups.len()];
    for (r, &g) in by_size.iter().enumerate() {
        rank[g] = r;
    }
    let (hit, spread) = if truncation == 1 {
        (1.0, 0.0)
    } else {
        (0.9, 0.1 / (truncation - 1) as f64)
    };
    let resp = labels
        .iter()
        .map(|&l| {
            let mut row = vec![spread; truncation];
            row[rank[l]] = hit;
            row
        })
        .collect();
    Ok(VariationalState {
        truncation,
        dim,
        stick_a: vec![1.0; truncation - 1],
        stick_b: vec![alpha; truncation - 1],
        means: vec![vec![base.prior_mean(); dim]; truncation],
        vars: vec![vec![base.prior_var(); dim]; truncation],
        resp,
    })
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

impl VariationalState {
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn responsibilities(&self) -> &[Vec<f64>] {
        &self.resp
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn mean_variances(&self) -> &[Vec<f64>] {
        &self.vars
    }

    pub fn stick_params(&self) -> (&[f64], &[f64]) {
        (&self.stick_a, &self.stick_b)
    }

    /// Expected number of points per component.
    pub fn counts(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.truncation];
        for row in &self.resp {
            for (c, r) in counts.iter_mut().zip(row) {
                *c += r;
            }
        }
        counts
    }

    /// `E[ln pi_t]` under the stick posterior.
    fn expected_log_weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.truncation);
        let mut rest = 0.0;
        for t in 0..self.truncation {
            if t + 1 == self.truncation {
                out.push(rest);
            } else {
                let (a, b) = (self.stick_a[t], self.stick_b[t]);
                let total = digamma(a + b);
                out.push(digamma(a) - total + rest);
                rest += digamma(b) - total;
            }
        }
        out
    }

    /// `E[pi_t]` with the last stick closed (sums to one).
    pub fn expected_weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.truncation);
        let mut remaining = 1.0;
        for t in 0..self.truncation - 1 {
            let (a, b) = (self.stick_a[t], self.stick_b[t]);
            out.push(remaining * a / (a + b));
            remaining *= b / (a + b);
        }
        out.push(remaining);
        out
    }

    /// Weights used for prediction: the closed final stick is split between
    /// the last component and a fresh component drawn from the base measure
    /// in proportion `1 + N_T : alpha`. Returns the component weights and the
    /// fresh-component (tail) mass; together they sum to one.
    pub fn predictive_weights(&self, alpha: f64) -> (Vec<f64>, f64) {
        let mut w = self.expected_weights();
        let last_count = self.counts()[self.truncation - 1];
        let remaining = w[self.truncation - 1];
        let keep = (1.0 + last_count) / (1.0 + last_count + alpha);
        w[self.truncation - 1] = remaining * keep;
        (w, remaining * (1.0 - keep))
    }

    /// Number of components whose expected weight exceeds `threshold`.
    pub fn effective_components(&self, threshold: f64) -> usize {
        self.expected_weights()
            .iter()
            .filter(|&&w| w > threshold)
            .count()
    }

    /// Probability under `q` that points `i` and `j` share a component.
    pub fn co_assignment(&self, i: usize, j: usize) -> f64 {
        self.resp[i]
            .iter()
            .zip(&self.resp[j])
            .map(|(a, b)| a * b)
            .sum()
    }

    fn update_sticks(&mut self, alpha: f64) {
        let counts = self.counts();
        let mut tail: f64 = counts.iter().sum();
        for ((a, b), &c) in self.stick_a.iter_mut().zip(&mut self.stick_b).zip(&counts) {
            tail -= c;
            *a = 1.0 + c;
            *b = alpha + tail.max(0.0);
        }
    }

    fn update_means(&mut self, data: &[Vec<f64>], base: &NormalNormalModel) {
        let counts = self.counts();
        let mut sums = vec![vec![0.0; self.dim]; self.truncation];
        for (row, y) in self.resp.iter().zip(data) {
            for (t, &r) in row.iter().enumerate() {
                for (s, &v) in sums[t].iter_mut().zip(y) {
                    *s += r * v;
                }
            }
        }
        let (mu0, tau2, sigma2) = (base.prior_mean(), base.prior_var(), base.obs_var());
        for (t, sum) in sums.iter().enumerate() {
            let var = 1.0 / (1.0 / tau2 + counts[t] / sigma2);
            self.vars[t].fill(var);
            for (m, s) in self.means[t].iter_mut().zip(sum) {
                *m = var * (mu0 / tau2 + s / sigma2);
            }
        }
    }

    fn update_responsibilities(&mut self, data: &[Vec<f64>], base: &NormalNormalModel) {
        let log_w = self.expected_log_weights();
        let sigma2 = base.obs_var();
        let mut logits = vec![0.0; self.truncation];
        for (row, y) in self.resp.iter_mut().zip(data) {
            for (t, l) in logits.iter_mut().enumerate() {
                let quad: f64 = y
                    .iter()
                    .zip(&self.means[t])
                    .zip(&self.vars[t])
                    .map(|((v, m), s)| (v - m).powi(2) + s)
                    .sum();
                *l = log_w[t] - 0.5 * quad / sigma2;
            }
            *row = softmax(&logits);
        }
    }

    /// Evidence lower bound of the current state.
    pub fn elbo(&self, data: &[Vec<f64>], alpha: f64, base: &NormalNormalModel) -> f64 {
        let (mu0, tau2, sigma2) = (base.prior_mean(), base.prior_var(), base.obs_var());
        let log_w = self.expected_log_weights();
        let d = self.dim as f64;
        let mut total = 0.0;
        // likelihood, assignment prior and assignment entropy
        for (row, y) in self.resp.iter().zip(data) {
            for (t, &r) in row.iter().enumerate() {
                if r <= 0.0 {
                    continue;
                }
                let quad: f64 = y
                    .iter()
                    .zip(&self.means[t])
                    .zip(&self.vars[t])
                    .map(|((v, m), s)| (v - m).powi(2) + s)
                    .sum();
                let loglik = -0.5 * d * (LN_2PI + sigma2.ln()) - 0.5 * quad / sigma2;
                total += r * (loglik + log_w[t] - r.ln());
            }
        }
        // sticks: E[ln p(v)] - E[ln q(v)]
        for t in 0..self.truncation - 1 {
            let (a, b) = (self.stick_a[t], self.stick_b[t]);
            let e_log_v = digamma(a) - digamma(a + b);
            let e_log_1mv = digamma(b) - digamma(a + b);
            let prior = alpha.ln() + (alpha - 1.0) * e_log_1mv;
            let entropy_term = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
                + (a - 1.0) * e_log_v
                + (b - 1.0) * e_log_1mv;
            total += prior - entropy_term;
        }
        // component means: E[ln p(mu)] + H[q(mu)]
        for t in 0..self.truncation {
            for k in 0..self.dim {
                let (m, s) = (self.means[t][k], self.vars[t][k]);
                total += -0.5 * (LN_2PI + tau2.ln()) - 0.5 * ((m - mu0).powi(2) + s) / tau2;
                total += 0.5 * (LN_2PI + 1.0 + s.ln());
            }
        }
        total
    }

    /// Mixture density of a new point along dimension `dim`.
    pub fn predictive_density(
        &self,
        alpha: f64,
        base: &NormalNormalModel,
        dim: usize,
        grid: &[f64],
    ) -> Result<Vec<f64>> {
        if dim >= self.dim {
            return usage(format!("dimension {dim} is out of range"));
        }
        let (weights, tail) = self.predictive_weights(alpha);
        let sigma2 = base.obs_var();
        Ok(grid
            .iter()
            .map(|&y| {
                let comps: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(t, w)| {
                        w * log_normal_pdf(y, self.means[t][dim], self.vars[t][dim] + sigma2).exp()
                    })
                    .sum();
                comps + tail * base.log_prior_predictive(y).exp()
            })
            .collect())
    }

    /// Joint predictive density of a full point.
    pub fn predictive_density_at(
        &self,
        alpha: f64,
        base: &NormalNormalModel,
        point: &[f64],
    ) -> f64 {
        let (weights, tail) = self.predictive_weights(alpha);
        let sigma2 = base.obs_var();
        let comps: f64 = weights
            .iter()
            .enumerate()
            .map(|(t, w)| {
                let log: f64 = point
                    .iter()
                    .enumerate()
                    .map(|(d, &y)| log_normal_pdf(y, self.means[t][d], self.vars[t][d] + sigma2))
                    .sum();
                w * log.exp()
            })
            .sum();
        let prior: f64 = point.iter().map(|&y| base.log_prior_predictive(y)).sum();
        comps + tail * prior.exp()
    }
}

/// One round of coordinate updates (sticks, component means, then
/// responsibilities). Returns the ELBO after the round.
pub fn cavi_iterate(
    state: &mut VariationalState,
    data: &[Vec<f64>],
    alpha: f64,
    base: &NormalNormalModel,
) -> f64 {
    state.update_sticks(alpha);
    state.update_means(data, base);
    state.update_responsibilities(data, base);
    state.elbo(data, alpha, base)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViConfig {
    pub truncation: usize,
    pub alpha: f64,
    pub base: NormalNormalModel,
    pub max_iterations: usize,
    /// Converged once the gain stays below this for `patience` rounds.
    pub tolerance: f64,
    pub patience: usize,
    /// Independent random initialisations; the fit with the highest final
    /// ELBO is kept.
    pub restarts: usize,
}

impl ViConfig {
    pub fn new(truncation: usize, alpha: f64, base: NormalNormalModel) -> Self {
        Self {
            truncation,
            alpha,
            base,
            max_iterations: 1000,
            tolerance: 1e-6,
            patience: 3,
            restarts: 5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ViFit {
    pub state: VariationalState,
    /// ELBO after each round, starting with round 1.
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
}

fn iterate_to_convergence<F>(
    mut state: VariationalState,
    data: &[Vec<f64>],
    config: &ViConfig,
    mut on_round: F,
) -> ViFit
where
    F: FnMut(usize, &VariationalState),
{
    let mut elbo_trace = Vec::new();
    let mut quiet = 0;
    let mut converged = false;
    for iter in 1..=config.max_iterations.max(1) {
        let elbo = cavi_iterate(&mut state, data, config.alpha, &config.base);
        on_round(iter, &state);
        if let Some(&prev) = elbo_trace.last() {
            if elbo - prev < config.tolerance {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
        elbo_trace.push(elbo);
        if quiet >= config.patience {
            converged = true;
            break;
        }
    }
    ViFit {
        state,
        elbo_trace,
        converged,
    }
}

/// Fit from `restarts` random initialisations and keep the one with the
/// highest final ELBO (earliest on ties). `on_round` sees the state after
/// every round (1-based index) of the kept fit only, e.g. to take snapshots.
pub fn fit_vi_with<F>(
    data: &[Vec<f64>],
    config: &ViConfig,
    rng: &mut RandomStream,
    on_round: F,
) -> Result<ViFit>
where
    F: FnMut(usize, &VariationalState),
{
    let inits = (0..config.restarts.max(1))
        .map(|_| vi_init(data, config.truncation, config.alpha, &config.base, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(usize, f64)> = None;
    if inits.len() > 1 {
        for (r, init) in inits.iter().enumerate() {
            let fit = iterate_to_convergence(init.clone(), data, config, |_, _| {});
            let last = *fit.elbo_trace.last().expect("at least one round");
            if best.is_none_or(|(_, b)| last > b) {
                best = Some((r, last));
            }
        }
    }
    let chosen = best.map_or(0, |(r, _)| r);
    let init = inits
        .into_iter()
        .nth(chosen)
        .expect("chosen restart exists");
    Ok(iterate_to_convergence(init, data, config, on_round))
}

pub fn fit_vi(data: &[Vec<f64>], config: &ViConfig, rng: &mut RandomStream) -> Result<ViFit> {
    fit_vi_with(data, config, rng, |_, _| {})
}
