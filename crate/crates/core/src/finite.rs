//! Finite Bayesian Gaussian mixtures with a symmetric Dirichlet prior on the
//! mixing weights.
//!
//! The total concentration `alpha` is split evenly, so each component gets
//! `alpha / K`; this is the parameterisation whose `K -> infinity` limit is
//! the Chinese restaurant process. Mixing weights are always integrated out
//! (Dirichlet-multinomial), so assignment probabilities are exact.

use std::collections::BTreeMap;

use crate::crp::Partition;
use crate::error::{usage, BnpError, Result};
use crate::stats::{ln_gamma, NormalNormalModel, RandomStream, SuffStats};

/// Largest `K^N` accepted by [`exact_assignment_posterior`].
pub const MAX_ASSIGNMENTS: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteMixtureModel {
    components: usize,
    alpha: f64,
    base: NormalNormalModel,
}

impl FiniteMixtureModel {
    pub fn new(components: usize, alpha: f64, base: NormalNormalModel) -> Result<Self> {
        if components == 0 {
            return usage("finite mixture needs at least one component");
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return usage(format!(
                "Dirichlet concentration must be positive, got {alpha}"
            ));
        }
        Ok(Self {
            components,
            alpha,
            base,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Concentration given to each individual component.
    pub fn per_component_alpha(&self) -> f64 {
        self.alpha / self.components as f64
    }

    pub fn base(&self) -> &NormalNormalModel {
        &self.base
    }

    /// Dirichlet-multinomial log probability of a labeled assignment vector,
    /// given the per-component counts.
    pub fn log_assignment_prior(&self, counts: &[usize]) -> f64 {
        let a = self.per_component_alpha();
        let n: usize = counts.iter().sum();
        let groups: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| ln_gamma(c as f64 + a) - ln_gamma(a))
            .sum();
        ln_gamma(self.alpha) - ln_gamma(self.alpha + n as f64) + groups
    }

    fn check_labels(&self, labels: &[usize]) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; self.components];
        for (i, &c) in labels.iter().enumerate() {
            if c >= self.components {
                return usage(format!(
                    "label {c} of item {i} is out of range for {} components",
                    self.components
                ));
            }
            counts[c] += 1;
        }
        Ok(counts)
    }
}

/// Joint log density of assignments, component means and data, with the
/// mixing weights integrated out. Labels are zero-based.
pub fn finite_joint_log_prob(
    model: &FiniteMixtureModel,
    labels: &[usize],
    means: &[f64],
    data: &[f64],
) -> Result<f64> {
    if labels.len() != data.len() {
        return usage(format!(
            "{} labels for {} observations",
            labels.len(),
            data.len()
        ));
    }
    if means.len() != model.components {
        return usage(format!(
            "{} component means for {} components",
            means.len(),
            model.components
        ));
    }
    let counts = model.check_labels(labels)?;
    let base = model.base();
    let prior: f64 = means.iter().map(|&t| base.log_prior_density(t)).sum();
    let likelihood: f64 = labels
        .iter()
        .zip(data)
        .map(|(&c, &y)| base.log_likelihood(y, means[c]))
        .sum();
    Ok(prior + likelihood + model.log_assignment_prior(&counts))
}

/// Sum over groups of the Normal-Normal marginal likelihood.
pub fn collapsed_marginal_likelihood(
    base: &NormalNormalModel,
    partition: &Partition,
    data: &[f64],
) -> Result<f64> {
    if partition.len() != data.len() {
        return usage(format!(
            "partition covers {} items but there are {} observations",
            partition.len(),
            data.len()
        ));
    }
    let mut stats = vec![SuffStats::default(); partition.num_groups()];
    for (&l, &y) in partition.labels().iter().zip(data) {
        stats[l].add(y);
    }
    Ok(stats.iter().map(|s| base.log_marginal(s)).sum())
}

/// Posterior over labeled assignment vectors, from exhaustive enumeration.
#[derive(Clone, Debug)]
pub struct AssignmentPosterior {
    components: usize,
    probabilities: Vec<(Vec<usize>, f64)>,
}

impl AssignmentPosterior {
    /// `(assignment, probability)` pairs in odometer order.
    pub fn assignments(&self) -> &[(Vec<usize>, f64)] {
        &self.probabilities
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn probability(&self, labels: &[usize]) -> Option<f64> {
        self.probabilities
            .iter()
            .find(|(a, _)| a == labels)
            .map(|(_, p)| *p)
    }

    /// Probabilities aggregated over relabelings.
    pub fn partition_probabilities(&self) -> BTreeMap<Partition, f64> {
        let mut out = BTreeMap::new();
        for (a, p) in &self.probabilities {
            *out.entry(Partition::canonicalize(a)).or_insert(0.0) += p;
        }
        out
    }

    /// Posterior probability that items `i` and `j` share a component.
    pub fn same_component(&self, i: usize, j: usize) -> f64 {
        self.probabilities
            .iter()
            .filter(|(a, _)| a[i] == a[j])
            .map(|(_, p)| p)
            .sum()
    }
}

/// Enumerate all `K^N` assignments, score each by prior times collapsed
/// likelihood and normalise.
pub fn exact_assignment_posterior(
    model: &FiniteMixtureModel,
    data: &[f64],
) -> Result<AssignmentPosterior> {
    let k = model.components;
    let n = data.len();
    let total = (k as u64)
        .checked_pow(n as u32)
        .filter(|&t| t <= MAX_ASSIGNMENTS);
    let Some(total) = total else {
        return Err(BnpError::GuardRail(format!(
            "exact enumeration needs K^N <= {MAX_ASSIGNMENTS}; K = {k}, N = {n}"
        )));
    };
    let base = model.base();
    let mut labels = vec![0usize; n];
    let mut scored = Vec::with_capacity(total as usize);
    for _ in 0..total {
        let mut stats = vec![SuffStats::default(); k];
        let mut counts = vec![0usize; k];
        for (&c, &y) in labels.iter().zip(data) {
            stats[c].add(y);
            counts[c] += 1;
        }
        let score = model.log_assignment_prior(&counts)
            + stats.iter().map(|s| base.log_marginal(s)).sum::<f64>();
        scored.push((labels.clone(), score));
        for digit in labels.iter_mut().rev() {
            *digit += 1;
            if *digit < k {
                break;
            }
            *digit = 0;
        }
    }
    let logs: Vec<f64> = scored.iter().map(|(_, s)| *s).collect();
    let norm = crate::stats::log_sum_exp(&logs)?;
    let probabilities = scored
        .into_iter()
        .map(|(a, s)| (a, (s - norm).exp()))
        .collect();
    Ok(AssignmentPosterior {
        components: k,
        probabilities,
    })
}

/// Collapsed Gibbs state for the finite mixture.
#[derive(Clone, Debug)]
pub struct FiniteGibbsState {
    labels: Vec<usize>,
    counts: Vec<usize>,
    stats: Vec<SuffStats>,
    log_score: f64,
}

impl FiniteGibbsState {
    pub fn new(model: &FiniteMixtureModel, labels: Vec<usize>, data: &[f64]) -> Result<Self> {
        if labels.len() != data.len() {
            return usage("initial labels do not match the data length");
        }
        let counts = model.check_labels(&labels)?;
        let mut stats = vec![SuffStats::default(); model.components];
        for (&c, &y) in labels.iter().zip(data) {
            stats[c].add(y);
        }
        let mut state = Self {
            labels,
            counts,
            stats,
            log_score: 0.0,
        };
        state.log_score = state.score(model);
        Ok(state)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Log of the collapsed joint `p(c, y)`.
    pub fn log_score(&self) -> f64 {
        self.log_score
    }

    fn score(&self, model: &FiniteMixtureModel) -> f64 {
        model.log_assignment_prior(&self.counts)
            + self
                .stats
                .iter()
                .map(|s| model.base().log_marginal(s))
                .sum::<f64>()
    }
}

/// Resample every assignment from its full conditional, in item order.
pub fn finite_gibbs_sweep(
    state: &mut FiniteGibbsState,
    model: &FiniteMixtureModel,
    data: &[f64],
    rng: &mut RandomStream,
) -> f64 {
    let a = model.per_component_alpha();
    let base = model.base();
    let mut log_weights = vec![0.0; model.components];
    for (i, &y) in data.iter().enumerate() {
        let old = state.labels[i];
        state.counts[old] -= 1;
        state.stats[old].remove(y);
        for (k, w) in log_weights.iter_mut().enumerate() {
            *w = (state.counts[k] as f64 + a).ln() + base.log_predictive(y, &state.stats[k]);
        }
        let new = rng.categorical_log(&log_weights);
        state.labels[i] = new;
        state.counts[new] += 1;
        state.stats[new].add(y);
    }
    state.log_score = state.score(model);
    state.log_score
}

/// Empirical distribution of the partition induced by drawing weights from
/// `Dirichlet(alpha/K, ..., alpha/K)` and then `n` labels.
pub fn finite_partition_prior_mc(
    components: usize,
    alpha: f64,
    n: usize,
    draws: usize,
    rng: &mut RandomStream,
) -> Result<BTreeMap<Partition, f64>> {
    if n > 6 {
        return Err(BnpError::GuardRail(format!(
            "partition frequency estimation is capped at n = 6, got {n}"
        )));
    }
    if components == 0 || !(alpha > 0.0) {
        return usage("need K >= 1 and alpha > 0");
    }
    if draws == 0 {
        return usage("need at least one draw");
    }
    let conc = vec![alpha / components as f64; components];
    let mut counts: BTreeMap<Partition, usize> = BTreeMap::new();
    let mut labels = vec![0usize; n];
    for _ in 0..draws {
        let weights = rng.dirichlet(&conc);
        for l in labels.iter_mut() {
            *l = rng.categorical(&weights);
        }
        *counts.entry(Partition::canonicalize(&labels)).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(p, c)| (p, c as f64 / draws as f64))
        .collect())
}

/// Total variation distance between two distributions over partitions.
pub fn total_variation(a: &BTreeMap<Partition, f64>, b: &BTreeMap<Partition, f64>) -> f64 {
    let mut keys: Vec<&Partition> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}
