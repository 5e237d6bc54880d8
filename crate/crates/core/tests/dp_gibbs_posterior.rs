use std::collections::BTreeMap;

use bnp_core::crp::{self, Concentration, Partition};
use bnp_core::dp_gibbs::{
    coclustering_matrix, dp_gibbs_sweep, geweke_prior_check, modal_partition,
    posterior_predictive_density, resample_alpha, run_chain, scalar_points, GewekeConfig,
    GibbsConfig, MixtureGibbsState, SweepKernel,
};
use bnp_core::finite::{collapsed_marginal_likelihood, total_variation};
use bnp_core::stats::{log_sum_exp, NormalNormalModel, RandomStream, SuffStats};
use proptest::prelude::*;

fn base() -> NormalNormalModel {
    NormalNormalModel::new(0.0, 4.0, 1.0).unwrap()
}

fn conc(a: f64) -> Concentration {
    Concentration::new(a).unwrap()
}

/// Exact posterior over the partitions of a small scalar dataset.
fn enumeration_oracle(data: &[f64], alpha: &Concentration) -> BTreeMap<Partition, f64> {
    let parts = crp::enumerate_partitions(data.len()).unwrap();
    let logs: Vec<f64> = parts
        .iter()
        .map(|p| crp::log_prob(p, alpha) + collapsed_marginal_likelihood(&base(), p, data).unwrap())
        .collect();
    let norm = log_sum_exp(&logs).unwrap();
    parts
        .into_iter()
        .zip(logs)
        .map(|(p, l)| (p, (l - norm).exp()))
        .collect()
}

const FIVE: [f64; 5] = [-1.2, -0.8, 0.3, 1.9, 2.4];

#[test]
fn sampler_matches_enumeration_at_five_points() {
    let alpha = conc(1.0);
    let oracle = enumeration_oracle(&FIVE, &alpha);
    assert_eq!(oracle.len(), 52);
    let cfg = GibbsConfig::new(base(), alpha, 50_100);
    let mut rng = RandomStream::new(5, 0);
    let trace = run_chain(&scalar_points(&FIVE), &cfg, &mut rng).unwrap();
    assert_eq!(trace.len(), 50_000);
    let tv = total_variation(&trace.partition_frequencies(), &oracle);
    assert!(tv < 0.03, "total variation {tv}");
}

#[test]
fn permuted_data_gives_the_same_posterior() {
    let alpha = conc(1.0);
    let oracle = enumeration_oracle(&FIVE, &alpha);
    let order = [3usize, 0, 4, 2, 1];
    let permuted: Vec<f64> = order.iter().map(|&i| FIVE[i]).collect();
    let cfg = GibbsConfig::new(base(), alpha, 30_100);
    let mut rng = RandomStream::new(6, 0);
    let trace = run_chain(&scalar_points(&permuted), &cfg, &mut rng).unwrap();
    // item i of the permuted data is item order[i] of the original
    let mut mapped: BTreeMap<Partition, f64> = BTreeMap::new();
    for (p, f) in trace.partition_frequencies() {
        let mut raw = vec![0usize; FIVE.len()];
        for (i, &orig) in order.iter().enumerate() {
            raw[orig] = p.labels()[i];
        }
        *mapped.entry(Partition::canonicalize(&raw)).or_insert(0.0) += f;
    }
    let tv = total_variation(&mapped, &oracle);
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn sampler_matches_enumeration_at_seven_points() {
    let data = [-3.0, -2.2, -0.1, 0.4, 0.9, 2.8, 3.5];
    let alpha = conc(0.7);
    let oracle = enumeration_oracle(&data, &alpha);
    let cfg = GibbsConfig::new(base(), alpha, 60_100);
    let mut rng = RandomStream::new(7, 0);
    let trace = run_chain(&scalar_points(&data), &cfg, &mut rng).unwrap();
    let tv = total_variation(&trace.partition_frequencies(), &oracle);
    assert!(tv < 0.05, "total variation {tv}");
}

/// Blobs at -10 and +10 with spread 0.5, tighter than the unit observation
/// noise the model assumes. Even so, at alpha = 1 a blob of twenty splits
/// with posterior probability near 0.1, so the per-entry co-clustering
/// check runs at alpha = 0.1.
fn two_blobs(rng: &mut RandomStream) -> (Vec<Vec<f64>>, Partition) {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let blob = usize::from(rng.bernoulli(0.5) || i == 0);
        let center = if blob == 1 { 10.0 } else { -10.0 };
        data.push(vec![rng.normal(center, 0.25)]);
        labels.push(blob);
    }
    (data, Partition::canonicalize(&labels))
}

#[test]
fn two_blobs_are_recovered() {
    let wide = NormalNormalModel::new(0.0, 100.0, 1.0).unwrap();
    let mut hits = 0;
    for seed in 0..10 {
        let mut rng = RandomStream::new(seed, 0);
        let (data, truth) = two_blobs(&mut rng);
        let cfg = GibbsConfig::new(wide, conc(0.1), 200);
        let trace = run_chain(&data, &cfg, &mut rng).unwrap();
        assert_eq!(trace.len(), 100);
        if modal_partition(std::slice::from_ref(&trace)) == Some(truth.clone()) {
            hits += 1;
        }
        let co = coclustering_matrix(std::slice::from_ref(&trace)).unwrap();
        for i in 0..data.len() {
            for j in 0..data.len() {
                let same = truth.labels()[i] == truth.labels()[j];
                if same {
                    assert!(co[(i, j)] > 0.9, "seed {seed} ({i},{j}) {}", co[(i, j)]);
                } else {
                    assert!(co[(i, j)] < 0.1, "seed {seed} ({i},{j}) {}", co[(i, j)]);
                }
            }
        }
    }
    assert!(hits >= 9, "modal partition recovered in {hits}/10 seeds");
}

#[test]
fn two_unit_spread_blobs_give_the_true_modal_partition() {
    let wide = NormalNormalModel::new(0.0, 100.0, 1.0).unwrap();
    let mut hits = 0;
    for seed in 0..10 {
        let mut rng = RandomStream::new(100 + seed, 0);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let blob = usize::from(i % 2 == 0);
            data.push(vec![rng.normal(if blob == 1 { 10.0 } else { -10.0 }, 1.0)]);
            labels.push(blob);
        }
        let cfg = GibbsConfig::new(wide, conc(1.0), 200);
        let trace = run_chain(&data, &cfg, &mut rng).unwrap();
        if trace.modal_partition() == Some(Partition::canonicalize(&labels)) {
            hits += 1;
        }
    }
    assert!(hits >= 9, "modal partition recovered in {hits}/10 seeds");
}

#[test]
fn prior_chain_reproduces_the_concentration_hyperprior() {
    // alternate K ~ CRP(alpha) over n items and alpha | K; the alpha marginal
    // must be the Gamma(shape, rate) hyperprior
    let (shape, rate, n) = (2.0, 1.0, 20);
    let mut alpha = Concentration::with_hyperprior(1.0, shape, rate).unwrap();
    let mut rng = RandomStream::new(11, 0);
    let mut draws = Vec::new();
    for step in 0..100_000 {
        let k = crp::simulate(n, &alpha, &mut rng).unwrap().num_groups();
        alpha = resample_alpha(&alpha, k, n, &mut rng).unwrap();
        if step % 5 == 0 {
            draws.push(alpha.alpha());
        }
    }
    draws.sort_by(f64::total_cmp);
    let m = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = statrs::function::gamma::gamma_lr(shape, rate * x);
            ((i + 1) as f64 / m - cdf)
                .abs()
                .max((i as f64 / m - cdf).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS statistic {ks}");
}

#[test]
fn prior_check_passes_and_catches_fault() {
    let cfg = GewekeConfig {
        base: base(),
        alpha: conc(1.0),
        n: 20,
        sweeps: 50_000,
        kernel: SweepKernel::Standard,
    };
    let ok = geweke_prior_check(&cfg, &mut RandomStream::new(12, 0)).unwrap();
    assert!(!ok.flagged, "{ok:#?}");
    let broken = GewekeConfig {
        kernel: SweepKernel::NoNewTable,
        sweeps: 5_000,
        ..cfg
    };
    let bad = geweke_prior_check(&broken, &mut RandomStream::new(12, 0)).unwrap();
    assert!(bad.flagged, "{bad:#?}");
}

#[test]
fn held_out_score_matches_single_gaussian_predictive() {
    let model = NormalNormalModel::new(0.0, 1.0, 1.0).unwrap();
    let mut rng = RandomStream::new(13, 0);
    let theta = model.sample_prior(&mut rng);
    let train: Vec<f64> = (0..50)
        .map(|_| model.sample_observation(theta, &mut rng))
        .collect();
    let test: Vec<f64> = (0..50)
        .map(|_| model.sample_observation(theta, &mut rng))
        .collect();
    let cfg = GibbsConfig::new(model, conc(0.1), 2_100);
    let trace = run_chain(&scalar_points(&train), &cfg, &mut rng).unwrap();
    let dens = posterior_predictive_density(&trace, &model, 0, &test).unwrap();
    let stats = SuffStats::from_slice(&train);
    let exact: Vec<f64> = test
        .iter()
        .map(|&y| model.log_predictive(y, &stats))
        .collect();
    let diffs: Vec<f64> = dens.iter().zip(&exact).map(|(d, e)| d.ln() - e).collect();
    let score: f64 = dens.iter().map(|d| d.ln()).sum();
    let exact_score: f64 = exact.iter().sum();
    let m = exact.len() as f64;
    let mean = exact_score / m;
    let sd = (exact.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!(
        (score - exact_score).abs() < 3.0 * sd * m.sqrt(),
        "{score} vs {exact_score}"
    );
    assert!(diffs.iter().all(|d| d.abs() < 0.5));
}

#[test]
fn predictive_integrates_to_one() {
    let mut rng = RandomStream::new(14, 0);
    // log-scale data from two lognormal populations
    let data: Vec<f64> = (0..60)
        .map(|i| {
            if i % 3 == 0 {
                rng.normal(6.5, 0.04)
            } else {
                rng.normal(6.0, 0.02)
            }
        })
        .collect();
    let mean = data.iter().sum::<f64>() / 60.0;
    let sd = (data.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 59.0).sqrt();
    let model = NormalNormalModel::new(mean, sd * sd, 0.05 * sd * sd).unwrap();
    let cfg = GibbsConfig::new(model, conc(1.0), 400);
    let trace = run_chain(&scalar_points(&data), &cfg, &mut rng).unwrap();
    let (lo, hi, steps) = (mean - 10.0 * sd, mean + 10.0 * sd, 4001);
    let h = (hi - lo) / (steps - 1) as f64;
    let grid: Vec<f64> = (0..steps).map(|i| lo + h * i as f64).collect();
    let dens = posterior_predictive_density(&trace, &model, 0, &grid).unwrap();
    assert!(dens.iter().all(|&d| d >= 0.0));
    let integral: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum();
    assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn statistics_stay_consistent(
        raw in prop::collection::vec((-20.0f64..20.0, -5.0f64..5.0), 1..30),
        alpha in 0.1f64..5.0,
        seed in 0u64..500,
    ) {
        let data: Vec<Vec<f64>> = raw.iter().map(|&(a, b)| vec![a, b]).collect();
        let a = conc(alpha);
        let mut rng = RandomStream::new(seed, 0);
        let mut state = MixtureGibbsState::from_prior(&data, &base(), &a, &mut rng).unwrap();
        for _ in 0..5 {
            dp_gibbs_sweep(&mut state, &base(), &a, &data, &mut rng);
            prop_assert!(state.stats_consistent(&data, 1e-8));
            prop_assert!((state.log_joint() - state.compute_log_joint(&base(), &a)).abs() < 1e-8);
            let p = state.partition();
            prop_assert_eq!(p.len(), data.len());
            prop_assert!(p.sizes().iter().all(|&s| s > 0));
        }
    }
}
