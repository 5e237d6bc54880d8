//! Collapsed Gibbs sampling for Chinese restaurant process mixtures of
//! Gaussians with known observation variance.
//!
//! Observations are points in `d` dimensions; every dimension shares the same
//! Normal-Normal base model and is treated independently in the likelihood.
//! Component means are integrated out, so the chain only moves over
//! partitions (and optionally the concentration).

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::crp::{self, Concentration, Partition};
use crate::error::{usage, Result};
use crate::stats::{frequencies, normal_cdf, NormalNormalModel, RandomStream, SuffStats};

/// Per-dimension sufficient statistics of one group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupStats {
    dims: Vec<SuffStats>,
}

impl GroupStats {
    pub fn new(dim: usize) -> Self {
        Self {
            dims: vec![SuffStats::default(); dim],
        }
    }

    pub fn add(&mut self, point: &[f64]) {
        for (s, &y) in self.dims.iter_mut().zip(point) {
            s.add(y);
        }
    }

    pub fn remove(&mut self, point: &[f64]) {
        for (s, &y) in self.dims.iter_mut().zip(point) {
            s.remove(y);
        }
    }

    pub fn count(&self) -> usize {
        self.dims.first().map_or(0, |s| s.n)
    }

    pub fn dim(&self, d: usize) -> &SuffStats {
        &self.dims[d]
    }

    pub fn log_marginal(&self, base: &NormalNormalModel) -> f64 {
        self.dims.iter().map(|s| base.log_marginal(s)).sum()
    }

    pub fn log_predictive(&self, base: &NormalNormalModel, point: &[f64]) -> f64 {
        self.dims
            .iter()
            .zip(point)
            .map(|(s, &y)| base.log_predictive(y, s))
            .sum()
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dims.iter().zip(&other.dims).all(|(a, b)| {
            a.n == b.n && (a.sum - b.sum).abs() <= tol && (a.sum_sq - b.sum_sq).abs() <= tol
        })
    }
}

/// Log density of a point under a fresh component.
pub fn log_prior_predictive(base: &NormalNormalModel, point: &[f64]) -> f64 {
    point.iter().map(|&y| base.log_prior_predictive(y)).sum()
}

fn check_data(data: &[Vec<f64>]) -> Result<usize> {
    let dim = data.first().map_or(1, |p| p.len());
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

/// Wrap scalar observations as one-dimensional points.
pub fn scalar_points(data: &[f64]) -> Vec<Vec<f64>> {
    data.iter().map(|&y| vec![y]).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScanOrder {
    /// Items visited in index order every sweep.
    #[default]
    Fixed,
    /// A fresh uniformly random permutation each sweep.
    Random,
}

/// Transition kernel used by a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SweepKernel {
    #[default]
    Standard,
    /// Deliberately broken kernel that never opens a new group. Only useful
    /// for checking that the sampler-correctness harness notices.
    NoNewTable,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepOptions {
    pub scan: ScanOrder,
    pub kernel: SweepKernel,
}

/// State of a collapsed chain.
///
/// Group labels are compact (`0..K`, no empty groups) but not necessarily in
/// first-appearance order; [`MixtureGibbsState::partition`] canonicalises.
#[derive(Clone, Debug)]
pub struct MixtureGibbsState {
    labels: Vec<usize>,
    groups: Vec<GroupStats>,
    dim: usize,
    log_joint: f64,
    sweep_index: usize,
}

impl MixtureGibbsState {
    pub fn new(
        data: &[Vec<f64>],
        labels: &[usize],
        base: &NormalNormalModel,
        alpha: &Concentration,
    ) -> Result<Self> {
        let dim = check_data(data)?;
        if labels.len() != data.len() {
            return usage(format!(
                "{} labels for {} observations",
                labels.len(),
                data.len()
            ));
        }
        let partition = Partition::canonicalize(labels);
        let mut state = Self {
            labels: partition.labels().to_vec(),
            groups: Vec::new(),
            dim,
            log_joint: 0.0,
            sweep_index: 0,
        };
        state.groups = state.recompute_stats(data);
        state.log_joint = state.compute_log_joint(base, alpha);
        Ok(state)
    }

    /// Initial state drawn from the CRP prior.
    pub fn from_prior(
        data: &[Vec<f64>],
        base: &NormalNormalModel,
        alpha: &Concentration,
        rng: &mut RandomStream,
    ) -> Result<Self> {
        if data.is_empty() {
            return Self::new(data, &[], base, alpha);
        }
        let p = crp::simulate(data.len(), alpha, rng)?;
        Self::new(data, p.labels(), base, alpha)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn partition(&self) -> Partition {
        Partition::canonicalize(&self.labels)
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[GroupStats] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn log_joint(&self) -> f64 {
        self.log_joint
    }

    pub fn sweep_index(&self) -> usize {
        self.sweep_index
    }

    /// Group statistics rebuilt from the data.
    pub fn recompute_stats(&self, data: &[Vec<f64>]) -> Vec<GroupStats> {
        let k = self.labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut groups = vec![GroupStats::new(self.dim); k];
        for (&l, y) in self.labels.iter().zip(data) {
            groups[l].add(y);
        }
        groups
    }

    /// Whether the incrementally maintained statistics agree with a rebuild.
    pub fn stats_consistent(&self, data: &[Vec<f64>], tol: f64) -> bool {
        let fresh = self.recompute_stats(data);
        fresh.len() == self.groups.len()
            && fresh
                .iter()
                .zip(&self.groups)
                .all(|(a, b)| a.approx_eq(b, tol))
            && self.groups.iter().all(|g| g.count() > 0)
    }

    /// `log p(partition) + log p(data | partition)`.
    pub fn compute_log_joint(&self, base: &NormalNormalModel, alpha: &Concentration) -> f64 {
        let sizes: Vec<usize> = self.groups.iter().map(GroupStats::count).collect();
        crp::log_prob_from_sizes(&sizes, alpha)
            + self
                .groups
                .iter()
                .map(|g| g.log_marginal(base))
                .sum::<f64>()
    }

    /// Replace the observations while keeping the partition (used when data
    /// are resampled inside prior-only chains).
    fn reset_data(&mut self, data: &[Vec<f64>]) {
        self.groups = self.recompute_stats(data);
    }

    fn remove_item(&mut self, i: usize, point: &[f64]) {
        let g = self.labels[i];
        self.groups[g].remove(point);
        if self.groups[g].count() == 0 {
            let last = self.groups.len() - 1;
            self.groups.swap_remove(g);
            if g != last {
                for l in self.labels.iter_mut() {
                    if *l == last {
                        *l = g;
                    }
                }
            }
        }
    }
}

/// One collapsed Gibbs sweep with the default options.
pub fn dp_gibbs_sweep(
    state: &mut MixtureGibbsState,
    base: &NormalNormalModel,
    alpha: &Concentration,
    data: &[Vec<f64>],
    rng: &mut RandomStream,
) {
    dp_gibbs_sweep_with(state, base, alpha, data, SweepOptions::default(), rng)
}

/// One collapsed Gibbs sweep: every item is removed from its group and
/// reseated proportionally to `m_k * pred_k(y)` for occupied groups and
/// `alpha * prior_pred(y)` for a new one.
pub fn dp_gibbs_sweep_with(
    state: &mut MixtureGibbsState,
    base: &NormalNormalModel,
    alpha: &Concentration,
    data: &[Vec<f64>],
    options: SweepOptions,
    rng: &mut RandomStream,
) {
    let n = state.len();
    let mut order: Vec<usize> = (0..n).collect();
    if options.scan == ScanOrder::Random {
        for i in (1..n).rev() {
            order.swap(i, rng.index(i + 1));
        }
    }
    let log_alpha = alpha.alpha().ln();
    let mut log_weights = Vec::new();
    for i in order {
        let y = &data[i];
        state.remove_item(i, y);
        log_weights.clear();
        log_weights.extend(
            state
                .groups
                .iter()
                .map(|g| (g.count() as f64).ln() + g.log_predictive(base, y)),
        );
        let allow_new = options.kernel == SweepKernel::Standard || state.groups.is_empty();
        if allow_new {
            log_weights.push(log_alpha + log_prior_predictive(base, y));
        }
        let choice = rng.categorical_log(&log_weights);
        if choice == state.groups.len() {
            state.groups.push(GroupStats::new(state.dim));
        }
        state.groups[choice].add(y);
        state.labels[i] = choice;
    }
    state.sweep_index += 1;
    state.log_joint = state.compute_log_joint(base, alpha);
}

/// Draw the concentration from its conditional given `K` groups over `n`
/// items, using the Gamma-mixture auxiliary-variable update: draw
/// `eta ~ Beta(alpha + 1, n)`, then `alpha` from a two-component Gamma
/// mixture with rate `b - ln eta`.
pub fn resample_alpha(
    alpha: &Concentration,
    num_groups: usize,
    n: usize,
    rng: &mut RandomStream,
) -> Result<Concentration> {
    let Some(h) = alpha.hyperprior() else {
        return usage("resampling the concentration requires a Gamma hyperprior");
    };
    if n == 0 {
        return alpha.with_alpha(rng.gamma(h.shape, h.rate));
    }
    let k = num_groups as f64;
    let eta = rng.beta(alpha.alpha() + 1.0, n as f64);
    let rate = h.rate - eta.ln();
    let odds = (h.shape + k - 1.0) / (n as f64 * rate);
    let shape = if rng.bernoulli(odds / (1.0 + odds)) {
        h.shape + k
    } else {
        h.shape + k - 1.0
    };
    let draw = rng.gamma(shape, rate).max(f64::MIN_POSITIVE);
    alpha.with_alpha(draw)
}

/// Starting state of a chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChainInit {
    /// Every item in one group. Well-separated clusters then split off
    /// quickly, whereas two large groups covering one cluster only merge by
    /// a slow random walk.
    #[default]
    SingleGroup,
    /// A draw from the CRP prior.
    Prior,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GibbsConfig {
    pub base: NormalNormalModel,
    pub alpha: Concentration,
    /// Resample the concentration after every sweep (needs a hyperprior).
    pub infer_alpha: bool,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub options: SweepOptions,
    pub init: ChainInit,
}

impl GibbsConfig {
    /// 100 sweeps of burn-in, no thinning, fixed scan, single-group start.
    pub fn new(base: NormalNormalModel, alpha: Concentration, sweeps: usize) -> Self {
        Self {
            base,
            alpha,
            infer_alpha: false,
            sweeps,
            burn_in: 100.min(sweeps.saturating_sub(1)),
            thin: 1,
            options: SweepOptions::default(),
            init: ChainInit::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return usage("need at least one sweep");
        }
        if self.burn_in >= self.sweeps {
            return usage(format!(
                "burn-in ({}) must be smaller than the number of sweeps ({})",
                self.burn_in, self.sweeps
            ));
        }
        if self.thin == 0 {
            return usage("thin must be at least 1");
        }
        if self.infer_alpha && self.alpha.hyperprior().is_none() {
            return usage("inferring alpha requires a hyperprior");
        }
        Ok(())
    }
}

/// One recorded post-burn-in state.
#[derive(Clone, Debug)]
pub struct TraceRecord {
    pub sweep_index: usize,
    /// Canonical partition of the items.
    pub partition: Partition,
    pub alpha: f64,
    pub log_joint: f64,
    /// Group statistics in canonical group order.
    pub groups: Vec<GroupStats>,
}

impl TraceRecord {
    fn capture(state: &MixtureGibbsState, alpha: f64) -> Self {
        // map internal labels to canonical order
        let mut order = Vec::new();
        for &l in &state.labels {
            if !order.contains(&l) {
                order.push(l);
            }
        }
        Self {
            sweep_index: state.sweep_index,
            partition: state.partition(),
            alpha,
            log_joint: state.log_joint,
            groups: order.iter().map(|&g| state.groups[g].clone()).collect(),
        }
    }

    pub fn num_groups(&self) -> usize {
        self.partition.num_groups()
    }
}

#[derive(Clone, Debug)]
pub struct PosteriorTrace {
    pub records: Vec<TraceRecord>,
    pub burn_in: usize,
    pub thin: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub stream_id: u64,
}

impl PosteriorTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Posterior frequency of each group count.
    pub fn k_histogram(&self) -> BTreeMap<usize, f64> {
        frequencies(self.records.iter().map(TraceRecord::num_groups))
    }

    /// Posterior frequency of each canonical partition.
    pub fn partition_frequencies(&self) -> BTreeMap<Partition, f64> {
        frequencies(self.records.iter().map(|r| r.partition.clone()))
    }

    /// Most frequently visited partition; ties go to the earliest visit.
    pub fn modal_partition(&self) -> Option<Partition> {
        modal_partition(std::slice::from_ref(self))
    }
}

/// Most frequent partition across several traces; ties go to the partition
/// seen first.
pub fn modal_partition(traces: &[PosteriorTrace]) -> Option<Partition> {
    let mut counts: BTreeMap<&Partition, (usize, usize)> = BTreeMap::new();
    for (seen, r) in traces.iter().flat_map(|t| &t.records).enumerate() {
        counts.entry(&r.partition).or_insert((0, seen)).0 += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(p, _)| p.clone())
}

/// Run one chain and record the post-burn-in states.
pub fn run_chain(
    data: &[Vec<f64>],
    config: &GibbsConfig,
    rng: &mut RandomStream,
) -> Result<PosteriorTrace> {
    config.validate()?;
    let mut alpha = config.alpha;
    let mut state = match config.init {
        ChainInit::SingleGroup => {
            MixtureGibbsState::new(data, &vec![0; data.len()], &config.base, &alpha)?
        }
        ChainInit::Prior => MixtureGibbsState::from_prior(data, &config.base, &alpha, rng)?,
    };
    let mut records = Vec::new();
    for sweep in 1..=config.sweeps {
        dp_gibbs_sweep_with(&mut state, &config.base, &alpha, data, config.options, rng);
        if config.infer_alpha {
            alpha = resample_alpha(&alpha, state.num_groups(), state.len(), rng)?;
            state.log_joint = state.compute_log_joint(&config.base, &alpha);
        }
        if sweep > config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thin) {
            records.push(TraceRecord::capture(&state, alpha.alpha()));
        }
    }
    Ok(PosteriorTrace {
        records,
        burn_in: config.burn_in,
        thin: config.thin,
        sweeps: config.sweeps,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}

/// Posterior predictive density along dimension `dim`, averaged over the
/// recorded states. Each state contributes
/// `sum_k m_k/(n+alpha) pred_k(y) + alpha/(n+alpha) prior_pred(y)`.
pub fn posterior_predictive_density(
    trace: &PosteriorTrace,
    base: &NormalNormalModel,
    dim: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    if trace.is_empty() {
        return usage("posterior predictive needs a non-empty trace");
    }
    let mut out = vec![0.0; grid.len()];
    for r in &trace.records {
        if r.groups.iter().any(|g| dim >= g.dims.len()) {
            return usage(format!("dimension {dim} is out of range"));
        }
        let n = r.partition.len() as f64;
        let denom = n + r.alpha;
        for (slot, &y) in out.iter_mut().zip(grid) {
            let mut dens = r.alpha / denom * base.log_prior_predictive(y).exp();
            for g in &r.groups {
                dens += g.count() as f64 / denom * base.log_predictive(y, g.dim(dim)).exp();
            }
            *slot += dens;
        }
    }
    let w = trace.records.len() as f64;
    out.iter_mut().for_each(|v| *v /= w);
    Ok(out)
}

/// Fraction of recorded states in which items `i` and `j` share a group.
pub fn coclustering_matrix(traces: &[PosteriorTrace]) -> Result<DMatrix<f64>> {
    let records: Vec<&TraceRecord> = traces.iter().flat_map(|t| &t.records).collect();
    let Some(first) = records.first() else {
        return usage("co-clustering needs a non-empty trace");
    };
    let n = first.partition.len();
    let mut m = DMatrix::zeros(n, n);
    for r in &records {
        let labels = r.partition.labels();
        for i in 0..n {
            for j in i..n {
                if labels[i] == labels[j] {
                    m[(i, j)] += 1.0;
                }
            }
        }
    }
    let w = records.len() as f64;
    for i in 0..n {
        for j in i..n {
            let v = m[(i, j)] / w;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Prior-vs-sampler comparison of one monitored statistic.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct StatComparison {
    pub name: String,
    pub forward_mean: f64,
    pub forward_var: f64,
    pub chain_mean: f64,
    pub chain_var: f64,
    /// Standard error of the difference in means.
    pub std_error: f64,
    pub z_score: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GewekeReport {
    pub samples: usize,
    pub threshold: f64,
    pub stats: Vec<StatComparison>,
    pub flagged: bool,
}

/// Flag threshold in standard errors.
pub const GEWEKE_THRESHOLD: f64 = 4.0;

/// Builds a [`GewekeReport`] from forward and chain samples of named
/// statistics. Chain standard errors use batch means.
pub fn compare_samples(names: &[&str], forward: &[Vec<f64>], chain: &[Vec<f64>]) -> GewekeReport {
    let stats: Vec<StatComparison> = names
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let f: Vec<f64> = forward.iter().map(|row| row[s]).collect();
            let c: Vec<f64> = chain.iter().map(|row| row[s]).collect();
            let (fm, fv) = mean_var(&f);
            let (cm, cv) = mean_var(&c);
            let se_f = (fv / f.len() as f64).sqrt();
            let se_c = batch_means_se(&c);
            let se = (se_f * se_f + se_c * se_c).sqrt();
            let diff = cm - fm;
            let z = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            StatComparison {
                name: name.to_string(),
                forward_mean: fm,
                forward_var: fv,
                chain_mean: cm,
                chain_var: cv,
                std_error: se,
                z_score: z,
                flagged: z.abs() > GEWEKE_THRESHOLD,
            }
        })
        .collect();
    let flagged = stats.iter().any(|s| s.flagged);
    GewekeReport {
        samples: chain.len(),
        threshold: GEWEKE_THRESHOLD,
        stats,
        flagged,
    }
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Standard error of the mean of an autocorrelated series from 50 batches.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let batches = 50.min(xs.len());
    if batches < 2 {
        return 0.0;
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, var) = mean_var(&means);
    (var / batches as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GewekeConfig {
    pub base: NormalNormalModel,
    pub alpha: Concentration,
    pub n: usize,
    pub sweeps: usize,
    pub kernel: SweepKernel,
}

/// Monitored statistics of a partition: group count, largest group, size of
/// the first item's group.
fn partition_stats(sizes: &[usize], first_group_size: usize) -> Vec<f64> {
    vec![
        sizes.len() as f64,
        sizes.iter().copied().max().unwrap_or(0) as f64,
        first_group_size as f64,
    ]
}

const MIXTURE_STAT_NAMES: [&str; 3] = ["num_groups", "largest_group", "first_item_group_size"];

fn draw_means(
    groups: usize,
    stats: Option<&[GroupStats]>,
    dim: usize,
    base: &NormalNormalModel,
    rng: &mut RandomStream,
) -> Vec<Vec<f64>> {
    (0..groups)
        .map(|g| {
            (0..dim)
                .map(|d| match stats {
                    Some(s) => base.sample_posterior(s[g].dim(d), rng),
                    None => base.sample_prior(rng),
                })
                .collect()
        })
        .collect()
}

fn draw_data(
    labels: &[usize],
    means: &[Vec<f64>],
    base: &NormalNormalModel,
    rng: &mut RandomStream,
) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|&l| {
            means[l]
                .iter()
                .map(|&m| base.sample_observation(m, rng))
                .collect()
        })
        .collect()
}

/// Getting-it-right check of the collapsed sweep.
///
/// Forward samples draw (partition, means, data) from the prior. The chain
/// alternates a collapsed sweep over the partition, a draw of the means from
/// their conditional, and a fresh draw of the data; its stationary
/// distribution is the same prior, so monitored statistics must agree.
pub fn geweke_prior_check(config: &GewekeConfig, rng: &mut RandomStream) -> Result<GewekeReport> {
    if config.n == 0 || config.sweeps < 100 {
        return usage("prior check needs n >= 1 and at least 100 sweeps");
    }
    let base = &config.base;
    let alpha = &config.alpha;
    let dim = 1;

    let mut forward = Vec::with_capacity(config.sweeps);
    for _ in 0..config.sweeps {
        let p = crp::simulate(config.n, alpha, rng)?;
        forward.push(partition_stats(p.sizes(), p.sizes()[0]));
    }

    let p = crp::simulate(config.n, alpha, rng)?;
    let means = draw_means(p.num_groups(), None, dim, base, rng);
    let data = draw_data(p.labels(), &means, base, rng);
    let mut state = MixtureGibbsState::new(&data, p.labels(), base, alpha)?;
    let mut data = data;
    let options = SweepOptions {
        scan: ScanOrder::Fixed,
        kernel: config.kernel,
    };
    let mut chain = Vec::with_capacity(config.sweeps);
    for _ in 0..config.sweeps {
        dp_gibbs_sweep_with(&mut state, base, alpha, &data, options, rng);
        let means = draw_means(state.num_groups(), Some(&state.groups), dim, base, rng);
        data = draw_data(&state.labels, &means, base, rng);
        state.reset_data(&data);
        let sizes: Vec<usize> = state.groups.iter().map(GroupStats::count).collect();
        chain.push(partition_stats(&sizes, sizes[state.labels[0]]));
    }
    Ok(compare_samples(&MIXTURE_STAT_NAMES, &forward, &chain))
}

/// Probability mass that the base distribution puts on `[lo, hi)`.
pub fn base_interval_mass(base: &NormalNormalModel, lo: f64, hi: f64) -> f64 {
    normal_cdf(hi, base.prior_mean(), base.prior_var())
        - normal_cdf(lo, base.prior_mean(), base.prior_var())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base() -> NormalNormalModel {
        NormalNormalModel::new(0.0, 10.0, 1.0).unwrap()
    }

    fn conc(a: f64) -> Concentration {
        Concentration::new(a).unwrap()
    }

    #[test]
    fn single_point_stays_alone() {
        let data = scalar_points(&[1.3]);
        let mut rng = RandomStream::new(1, 0);
        let mut s = MixtureGibbsState::new(&data, &[0], &base(), &conc(1.0)).unwrap();
        for _ in 0..20 {
            dp_gibbs_sweep(&mut s, &base(), &conc(1.0), &data, &mut rng);
            assert_eq!(s.num_groups(), 1);
        }
    }

    #[test]
    fn incremental_stats_match_rebuild() {
        let mut rng = RandomStream::new(2, 0);
        let data: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                vec![
                    rng.normal(if i % 2 == 0 { -3.0 } else { 3.0 }, 1.0),
                    rng.normal(0.0, 1.0),
                ]
            })
            .collect();
        let mut s = MixtureGibbsState::from_prior(&data, &base(), &conc(1.0), &mut rng).unwrap();
        for _ in 0..50 {
            dp_gibbs_sweep_with(
                &mut s,
                &base(),
                &conc(1.0),
                &data,
                SweepOptions {
                    scan: ScanOrder::Random,
                    kernel: SweepKernel::Standard,
                },
                &mut rng,
            );
            assert!(s.stats_consistent(&data, 1e-8));
            let fresh = MixtureGibbsState::new(&data, s.labels(), &base(), &conc(1.0)).unwrap();
            assert_abs_diff_eq!(fresh.log_joint(), s.log_joint(), epsilon = 1e-8);
        }
    }

    #[test]
    fn log_joint_is_crp_plus_collapsed_likelihood() {
        let y = [0.5, -1.0, 2.0, 2.2];
        let data = scalar_points(&y);
        let p = Partition::canonicalize(&[0, 1, 2, 2]);
        let s = MixtureGibbsState::new(&data, p.labels(), &base(), &conc(0.7)).unwrap();
        let want = crp::log_prob(&p, &conc(0.7))
            + crate::finite::collapsed_marginal_likelihood(&base(), &p, &y).unwrap();
        assert_abs_diff_eq!(s.log_joint(), want, epsilon = 1e-12);
    }

    #[test]
    fn alpha_resampling_with_tight_prior() {
        let a0 = 2.5;
        let alpha = Concentration::with_hyperprior(a0, 1e6, 1e6 / a0).unwrap();
        let mut rng = RandomStream::new(3, 0);
        for _ in 0..100 {
            let a = resample_alpha(&alpha, 4, 50, &mut rng).unwrap();
            assert!((a.alpha() - a0).abs() < 0.01 * a0);
        }
        assert!(resample_alpha(&conc(1.0), 1, 1, &mut rng).is_err());
    }

    #[test]
    fn single_group_pulls_alpha_down() {
        let alpha = Concentration::with_hyperprior(1.0, 2.0, 1.0).unwrap();
        let mut rng = RandomStream::new(4, 0);
        let mut current = alpha;
        let mut total = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            current = resample_alpha(&current, 1, 200, &mut rng).unwrap();
            total += current.alpha();
        }
        let posterior_mean = total / draws as f64;
        assert!(posterior_mean < 2.0 * 0.5, "{posterior_mean}");
    }

    #[test]
    fn config_validation() {
        let mut c = GibbsConfig::new(base(), conc(1.0), 10);
        assert!(c.validate().is_ok());
        c.burn_in = 10;
        assert!(c.validate().is_err());
        c.burn_in = 0;
        c.thin = 0;
        assert!(c.validate().is_err());
        c.thin = 1;
        c.infer_alpha = true;
        assert!(c.validate().is_err());
    }

    #[test]
    fn trace_indices_strictly_increase() {
        let data = scalar_points(&[0.0, 1.0, 5.0]);
        let mut c = GibbsConfig::new(base(), conc(1.0), 30);
        c.burn_in = 10;
        c.thin = 3;
        let t = run_chain(&data, &c, &mut RandomStream::new(5, 0)).unwrap();
        let idx: Vec<usize> = t.records.iter().map(|r| r.sweep_index).collect();
        assert_eq!(idx, vec![13, 16, 19, 22, 25, 28]);
    }

    #[test]
    fn prior_only_predictive_is_prior_predictive() {
        let empty: Vec<Vec<f64>> = Vec::new();
        let c = GibbsConfig::new(base(), conc(1.3), 5);
        let t = run_chain(&empty, &c, &mut RandomStream::new(6, 0)).unwrap();
        let grid = [-3.0, 0.0, 1.5];
        let dens = posterior_predictive_density(&t, &base(), 0, &grid).unwrap();
        for (d, &y) in dens.iter().zip(&grid) {
            assert_abs_diff_eq!(*d, base().log_prior_predictive(y).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn predictive_single_state_weights() {
        // one recorded state: explicit mixture with new-group weight alpha/(n+alpha)
        let y = [0.0, 0.2, 5.0];
        let data = scalar_points(&y);
        let s = MixtureGibbsState::new(&data, &[0, 0, 1], &base(), &conc(2.0)).unwrap();
        let trace = PosteriorTrace {
            records: vec![TraceRecord::capture(&s, 2.0)],
            burn_in: 0,
            thin: 1,
            sweeps: 1,
            seed: 0,
            stream_id: 0,
        };
        let y_star = 1.0;
        let got = posterior_predictive_density(&trace, &base(), 0, &[y_star]).unwrap()[0];
        let b = base();
        let want = 2.0 / 5.0
            * b.log_predictive(y_star, &SuffStats::from_slice(&[0.0, 0.2]))
                .exp()
            + 1.0 / 5.0
                * b.log_predictive(y_star, &SuffStats::from_slice(&[5.0]))
                    .exp()
            + 2.0 / 5.0 * b.log_prior_predictive(y_star).exp();
        assert_abs_diff_eq!(got, want, epsilon = 1e-14);
        let empty = PosteriorTrace {
            records: vec![],
            ..trace
        };
        assert!(posterior_predictive_density(&empty, &base(), 0, &[0.0]).is_err());
    }

    #[test]
    fn coclustering_of_single_state() {
        let data = scalar_points(&[0.0, 0.2, 5.0]);
        let s = MixtureGibbsState::new(&data, &[3, 3, 1], &base(), &conc(2.0)).unwrap();
        let trace = PosteriorTrace {
            records: vec![TraceRecord::capture(&s, 2.0)],
            burn_in: 0,
            thin: 1,
            sweeps: 1,
            seed: 0,
            stream_id: 0,
        };
        let m = coclustering_matrix(&[trace]).unwrap();
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(0, 2)], 0.0);
        for i in 0..3 {
            assert_eq!(m[(i, i)], 1.0);
        }
        assert!(coclustering_matrix(&[]).is_err());
    }

    #[test]
    fn geweke_single_item_has_no_discrepancy() {
        let cfg = GewekeConfig {
            base: base(),
            alpha: conc(1.0),
            n: 1,
            sweeps: 200,
            kernel: SweepKernel::Standard,
        };
        let r = geweke_prior_check(&cfg, &mut RandomStream::new(7, 0)).unwrap();
        assert!(!r.flagged);
        for s in &r.stats {
            assert_eq!(s.forward_mean, 1.0);
            assert_eq!(s.chain_mean, 1.0);
            assert_eq!(s.z_score, 0.0);
        }
    }

    #[test]
    fn batch_means_on_constant_series() {
        assert_eq!(batch_means_se(&[2.0; 500]), 0.0);
        let (m, v) = mean_var(&[1.0, 2.0, 3.0]);
        assert_eq!((m, v), (2.0, 1.0));
    }
}
