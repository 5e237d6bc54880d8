//! The Chinese restaurant process prior over partitions.
//!
//! Labels are stored zero-based in canonical (first-appearance) order;
//! [`Partition::one_based`] gives the 1..K form used in files.
//!
//! Seating convention: with `n` customers already seated, the `(n+1)`-th
//! joins table `k` with probability `m_k / (n + alpha)` and opens a new
//! table with probability `alpha / (n + alpha)`.

use serde::{Deserialize, Serialize};

use crate::error::{usage, BnpError, Result};
use crate::stats::{ln_factorial, ln_gamma, RandomStream};

/// Largest item count accepted by [`enumerate_partitions`].
pub const MAX_ENUMERATION_ITEMS: usize = 12;

/// A partition of `n` items into unlabeled groups, in canonical form.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Partition {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Relabel arbitrary group labels by order of first appearance.
    pub fn canonicalize<T: PartialEq + Clone>(raw: &[T]) -> Self {
        let mut seen: Vec<T> = Vec::new();
        let mut out = Self::empty();
        for item in raw {
            let label = match seen.iter().position(|s| s == item) {
                Some(k) => k,
                None => {
                    seen.push(item.clone());
                    seen.len() - 1
                }
            };
            out.push(label);
        }
        out
    }

    /// Append an item to group `label`; `label == num_groups()` opens a new group.
    pub fn push(&mut self, label: usize) {
        assert!(label <= self.sizes.len(), "label skips a group");
        if label == self.sizes.len() {
            self.sizes.push(0);
        }
        self.sizes[label] += 1;
        self.labels.push(label);
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.sizes.len()
    }

    /// Items belonging to each group.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.sizes.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    /// The partition induced on the items listed in `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let raw: Vec<usize> = order.iter().map(|&i| self.labels[i]).collect();
        Self::canonicalize(&raw)
    }
}

/// Gamma hyperprior (shape, rate) on the concentration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaHyperprior {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    alpha: f64,
    hyperprior: Option<GammaHyperprior>,
}

impl Concentration {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return usage(format!("concentration must be positive, got {alpha}"));
        }
        Ok(Self {
            alpha,
            hyperprior: None,
        })
    }

    pub fn with_hyperprior(alpha: f64, shape: f64, rate: f64) -> Result<Self> {
        let mut c = Self::new(alpha)?;
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return usage(format!(
                "hyperprior shape and rate must be positive, got ({shape}, {rate})"
            ));
        }
        c.hyperprior = Some(GammaHyperprior { shape, rate });
        Ok(c)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn hyperprior(&self) -> Option<GammaHyperprior> {
        self.hyperprior
    }

    /// Same hyperprior, new value.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut c = Self::new(alpha)?;
        c.hyperprior = self.hyperprior;
        Ok(c)
    }
}

/// Seating probabilities for the next customer: one entry per occupied
/// table followed by the new-table probability.
pub fn seat_probabilities(partition: &Partition, alpha: &Concentration) -> Vec<f64> {
    let denom = partition.len() as f64 + alpha.alpha();
    partition
        .sizes()
        .iter()
        .map(|&m| m as f64 / denom)
        .chain(std::iter::once(alpha.alpha() / denom))
        .collect()
}

/// Forward simulation of `n` customers.
pub fn simulate(n: usize, alpha: &Concentration, rng: &mut RandomStream) -> Result<Partition> {
    if n == 0 {
        return usage("crp simulation needs at least one item");
    }
    let mut partition = Partition::empty();
    let mut weights = Vec::new();
    for _ in 0..n {
        weights.clear();
        weights.extend(partition.sizes().iter().map(|&m| m as f64));
        weights.push(alpha.alpha());
        let table = rng.categorical(&weights);
        partition.push(table);
    }
    Ok(partition)
}

/// Exchangeable closed form: `alpha^K prod (N_k - 1)! / prod_{i<n} (i + alpha)`.
pub fn log_prob(partition: &Partition, alpha: &Concentration) -> f64 {
    log_prob_from_sizes(partition.sizes(), alpha)
}

/// [`log_prob`] evaluated from group sizes alone.
pub fn log_prob_from_sizes(sizes: &[usize], alpha: &Concentration) -> f64 {
    let a = alpha.alpha();
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let k = sizes.len() as f64;
    let groups: f64 = sizes.iter().map(|&m| ln_factorial(m - 1)).sum();
    let rising = if n <= 10_000 {
        (0..n).map(|i| (i as f64 + a).ln()).sum()
    } else {
        ln_gamma(n as f64 + a) - ln_gamma(a)
    };
    k * a.ln() + groups - rising
}

/// Product of the sequential seating probabilities that generate `partition`.
pub fn chain_rule_log_prob(partition: &Partition, alpha: &Concentration) -> f64 {
    let mut seated = Partition::empty();
    let mut total = 0.0;
    for &label in partition.labels() {
        let probs = seat_probabilities(&seated, alpha);
        total += probs[label].ln();
        seated.push(label);
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedTables {
    /// `sum_{i=1..n} alpha / (alpha + i - 1)`
    pub exact: f64,
    /// `alpha * ln(n)`
    pub asymptotic: f64,
}

pub fn expected_tables(n: usize, alpha: &Concentration) -> Result<ExpectedTables> {
    if n == 0 {
        return usage("expected table count needs n >= 1");
    }
    let a = alpha.alpha();
    let exact = (0..n).map(|i| a / (a + i as f64)).sum();
    Ok(ExpectedTables {
        exact,
        asymptotic: a * (n as f64).ln(),
    })
}

/// All canonical partitions of `n` items, generated as restricted-growth
/// strings in lexicographic order.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    if n > MAX_ENUMERATION_ITEMS {
        return Err(BnpError::GuardRail(format!(
            "partition enumeration is capped at n = {MAX_ENUMERATION_ITEMS}, got {n}"
        )));
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Partition::empty());
        return Ok(out);
    }
    let mut rgs = vec![0usize; n];
    let mut max_prefix = vec![0usize; n];
    loop {
        out.push(Partition::canonicalize(&rgs));
        // increment the rightmost position that may still grow
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            if rgs[i] <= max_prefix[i - 1] {
                rgs[i] += 1;
                break;
            }
            i -= 1;
        }
        max_prefix[i] = max_prefix[i - 1].max(rgs[i]);
        for j in i + 1..n {
            rgs[j] = 0;
            max_prefix[j] = max_prefix[i];
        }
    }
}
