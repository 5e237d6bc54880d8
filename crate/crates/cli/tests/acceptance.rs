//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs as a plain binary (no libtest harness) so the verdict lines always
//! appear in `cargo test` output.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bnp_core::crp::{self, Concentration, Partition};
use bnp_core::dp_gibbs::{
    geweke_prior_check, run_chain, scalar_points, GewekeConfig, GewekeReport, GibbsConfig,
    SweepKernel,
};
use bnp_core::dp_vi::{fit_vi, ViConfig};
use bnp_core::finite::{collapsed_marginal_likelihood, finite_partition_prior_mc, total_variation};
use bnp_core::ibp::{
    correlation, dominant_factor, factor_count_histogram, factor_generate, factor_geweke_check,
    finite_bb_simulate, ibp_simulate, map_factor_estimate, principal_loading, run_factor_chain,
    DishRate, FactorChainConfig, FactorGewekeConfig, FactorPriors, FactorSweepOptions,
    GenerateConfig, LoadingScheme,
};
use bnp_core::stats::{ln_factorial, log_sum_exp, NormalNormalModel, RandomStream, SuffStats};

type Check = Box<dyn Fn() -> Verdict>;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn shuffled(n: usize, rng: &mut RandomStream) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.index(i + 1));
    }
    order
}

fn exchangeability(budget: Duration) -> Verdict {
    let start = Instant::now();
    let parts = crp::enumerate_partitions(8).expect("n = 8 is enumerable");
    let alpha = Concentration::new(1.0).unwrap();
    let mut rng = RandomStream::new(1, 0);
    let (mut total, mut worst) = (0.0, 0.0f64);
    for p in &parts {
        let lp = crp::log_prob(p, &alpha);
        total += lp.exp();
        for _ in 0..100 {
            let q = p.permuted(&shuffled(8, &mut rng));
            worst = worst.max((crp::chain_rule_log_prob(&q, &alpha) - lp).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        parts.len() == 4140 && worst < 1e-10 && (total - 1.0).abs() < 1e-8 && elapsed < budget,
        format!(
            "{} partitions, max permutation gap {worst:.1e}, total mass {total:.12}, {:.2}s",
            parts.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn crp_expectation() -> Verdict {
    let alpha = Concentration::new(1.0).unwrap();
    let exact = crp::expected_tables(500, &alpha).unwrap();
    let mut rng = RandomStream::new(2, 0);
    let ks: Vec<f64> = (0..10_000)
        .map(|_| crp::simulate(500, &alpha, &mut rng).unwrap().num_groups() as f64)
        .collect();
    let (mean, se) = mean_and_se(&ks);
    let z = (mean - exact.exact) / se;
    verdict(
        z.abs() < 3.0,
        format!(
            "mean K {mean:.4} vs exact {:.4} (z = {z:.2}); alpha ln N = {:.4} undershoots by {:.4}",
            exact.exact,
            exact.asymptotic,
            exact.exact - exact.asymptotic
        ),
    )
}

fn gibbs_exactness(budget: Duration) -> Verdict {
    let start = Instant::now();
    let data = [-1.2, -0.8, 0.3, 1.9, 2.4];
    let base = NormalNormalModel::new(0.0, 4.0, 1.0).unwrap();
    let alpha = Concentration::new(1.0).unwrap();
    let parts = crp::enumerate_partitions(5).unwrap();
    let logs: Vec<f64> = parts
        .iter()
        .map(|p| crp::log_prob(p, &alpha) + collapsed_marginal_likelihood(&base, p, &data).unwrap())
        .collect();
    let norm = log_sum_exp(&logs).unwrap();
    let oracle: BTreeMap<Partition, f64> = parts
        .into_iter()
        .zip(logs)
        .map(|(p, l)| (p, (l - norm).exp()))
        .collect();
    let mut cfg = GibbsConfig::new(base, alpha, 50_100);
    cfg.burn_in = 100;
    let trace = run_chain(&scalar_points(&data), &cfg, &mut RandomStream::new(3, 0)).unwrap();
    let tv = total_variation(&trace.partition_frequencies(), &oracle);
    let elapsed = start.elapsed();
    verdict(
        oracle.len() == 52 && trace.len() == 50_000 && tv < 0.03 && elapsed < budget,
        format!(
            "TV {tv:.4} over {} sweeps against {} partitions, {:.2}s",
            trace.len(),
            oracle.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn finite_limit() -> Verdict {
    let alpha = Concentration::new(1.0).unwrap();
    let exact: BTreeMap<Partition, f64> = crp::enumerate_partitions(3)
        .unwrap()
        .into_iter()
        .map(|p| {
            let lp = crp::log_prob(&p, &alpha);
            (p, lp.exp())
        })
        .collect();
    let freq =
        finite_partition_prior_mc(100, 1.0, 3, 200_000, &mut RandomStream::new(4, 0)).unwrap();
    let tv = total_variation(&freq, &exact);
    let probs: Vec<String> = exact.values().map(|p| format!("{p:.4}")).collect();
    verdict(
        tv < 0.05,
        format!("TV {tv:.4} from CRP probabilities [{}]", probs.join(", ")),
    )
}

fn geweke_summary(r: &GewekeReport) -> String {
    let worst = r.stats.iter().map(|s| s.z_score.abs()).fold(0.0, f64::max);
    format!("max |z| {worst:.2}")
}

fn getting_it_right() -> Verdict {
    let mixture = GewekeConfig {
        base: NormalNormalModel::new(0.0, 10.0, 1.0).unwrap(),
        alpha: Concentration::new(1.0).unwrap(),
        n: 20,
        sweeps: 50_000,
        kernel: SweepKernel::Standard,
    };
    let ok = geweke_prior_check(&mixture, &mut RandomStream::new(5, 0)).unwrap();
    let fault = geweke_prior_check(
        &GewekeConfig {
            kernel: SweepKernel::NoNewTable,
            sweeps: 5_000,
            ..mixture
        },
        &mut RandomStream::new(5, 1),
    )
    .unwrap();
    let factors = FactorGewekeConfig {
        priors: FactorPriors::default(),
        rows: 6,
        observations: 5,
        sweeps: 20_000,
        options: FactorSweepOptions::default(),
    };
    let fok = factor_geweke_check(&factors, &mut RandomStream::new(5, 2)).unwrap();
    let ffault = factor_geweke_check(
        &FactorGewekeConfig {
            options: FactorSweepOptions {
                no_births: true,
                ..FactorSweepOptions::default()
            },
            sweeps: 2_000,
            ..factors
        },
        &mut RandomStream::new(5, 3),
    )
    .unwrap();
    verdict(
        !ok.flagged && fault.flagged && !fok.flagged && ffault.flagged,
        format!(
            "mixture {} (fault flagged: {}); factors {} (fault flagged: {})",
            geweke_summary(&ok),
            fault.flagged,
            geweke_summary(&fok),
            ffault.flagged
        ),
    )
}

fn five_blobs(rng: &mut RandomStream) -> Vec<Vec<f64>> {
    const CENTERS: [[f64; 2]; 5] = [
        [-10.0, -10.0],
        [-10.0, 10.0],
        [10.0, -10.0],
        [10.0, 10.0],
        [0.0, 0.0],
    ];
    (0..100)
        .map(|i| CENTERS[i % 5].iter().map(|&m| rng.normal(m, 1.0)).collect())
        .collect()
}

fn variational() -> Verdict {
    let base = NormalNormalModel::new(0.0, 100.0, 1.0).unwrap();
    let (mut hits, mut worst_drop) = (0, 0.0f64);
    for seed in 0..10 {
        let mut rng = RandomStream::new(6, seed);
        let data = five_blobs(&mut rng);
        let fit = fit_vi(&data, &ViConfig::new(20, 1.0, base), &mut rng).unwrap();
        for w in fit.elbo_trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        if fit.state.effective_components(0.01) == 5 {
            hits += 1;
        }
    }
    let mut rng = RandomStream::new(6, 99);
    let data = five_blobs(&mut rng);
    let fit = fit_vi(&data, &ViConfig::new(1, 1.0, base), &mut rng).unwrap();
    let evidence: f64 = (0..2)
        .map(|d| {
            let column: Vec<f64> = data.iter().map(|p| p[d]).collect();
            base.log_marginal(&SuffStats::from_slice(&column))
        })
        .sum();
    let gap = (fit.elbo_trace.last().unwrap() - evidence).abs();
    verdict(
        worst_drop <= 1e-8 && hits >= 8 && gap < 1e-6,
        format!(
            "largest ELBO decrease {worst_drop:.1e}; five components in {hits}/10 seeds; \
             T=1 gap to evidence {gap:.1e}"
        ),
    )
}

fn poisson_cdf(k: usize, rate: f64) -> f64 {
    (0..=k)
        .map(|j| (j as f64 * rate.ln() - rate - ln_factorial(j)).exp())
        .sum()
}

fn ibp_limit() -> Verdict {
    let rows = 100_000;
    let mut rng = RandomStream::new(7, 0);
    let mut hist = vec![0usize; 64];
    for _ in 0..rows {
        let c = finite_bb_simulate(1, 1000, 2.0, &mut rng)
            .unwrap()
            .num_features();
        hist[c.min(63)] += 1;
    }
    let (mut cum, mut ks) = (0usize, 0.0f64);
    for (c, &h) in hist.iter().enumerate() {
        cum += h;
        ks = ks.max((cum as f64 / rows as f64 - poisson_cdf(c, 2.0)).abs());
    }
    let mut rng = RandomStream::new(7, 1);
    let dishes: Vec<f64> = (0..100_000)
        .map(|_| {
            ibp_simulate(4, 1.0, DishRate::CustomerIndex, &mut rng)
                .unwrap()
                .num_features() as f64
        })
        .collect();
    let (mean, se) = mean_and_se(&dishes);
    let harmonic = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
    let z = (mean - harmonic) / se;
    verdict(
        ks <= 0.02 && z.abs() < 3.0,
        format!(
            "KS {ks:.4} against Poisson(2); mean dishes {mean:.4} vs {harmonic:.4} (z = {z:.2})"
        ),
    )
}

fn factor_recovery() -> Verdict {
    let sigma2 = 0.05;
    let gen = GenerateConfig {
        weight_var: 1.0,
        activation_var: 1.0,
        noise_var: sigma2,
        scheme: LoadingScheme::Bernoulli(0.5),
    };
    let chain = FactorChainConfig::new(FactorPriors::default());
    let (mut hits, mut worst_rmse) = (0, 0.0f64);
    let mut modes = Vec::new();
    for seed in 0..10 {
        let mut rng = RandomStream::new(8, seed);
        let (y, truth) = factor_generate(&gen, 9, 100, 3, &mut rng).unwrap();
        let trace = run_factor_chain(&y, &chain, &mut rng).unwrap();
        let hist = factor_count_histogram(&trace).unwrap();
        let mode = hist
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| *k)
            .unwrap();
        modes.push(mode.to_string());
        if mode == 3 || mode == 4 {
            hits += 1;
        }
        let map = map_factor_estimate(&trace).unwrap();
        let diff = map.state.reconstruction() - truth.reconstruction();
        worst_rmse = worst_rmse.max((diff.norm_squared() / diff.len() as f64).sqrt());
    }
    let one = GenerateConfig {
        noise_var: 0.01,
        scheme: LoadingScheme::Bernoulli(1.0),
        ..gen
    };
    let mut rng = RandomStream::new(8, 100);
    let (y, _) = factor_generate(&one, 9, 200, 1, &mut rng).unwrap();
    let trace = run_factor_chain(&y, &chain, &mut rng).unwrap();
    let map = &map_factor_estimate(&trace).unwrap().state;
    let r = dominant_factor(map).map_or(0.0, |k| {
        let loading: Vec<f64> = map.weights.column(k).iter().copied().collect();
        let classical: Vec<f64> = principal_loading(&y).iter().copied().collect();
        correlation(&loading, &classical)
    });
    let bound = 1.2 * f64::sqrt(sigma2);
    verdict(
        hits >= 7 && worst_rmse <= bound && r.abs() > 0.9,
        format!(
            "modal K [{}], in {{3, 4}} for {hits}/10; worst MAP RMSE {worst_rmse:.4} (bound {bound:.4}); \
             one-factor |r| {:.4}",
            modes.join(" "),
            r.abs()
        ),
    )
}

fn bnp(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bnp"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

/// All files under `dir`, relative path to contents.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn run_all_commands(root: &Path) -> Result<(), String> {
    bnp(
        root,
        &[
            "simulate",
            "--seed",
            "9",
            "--model",
            "finite-mixture",
            "--centers",
            "-10;0;10",
            "--n",
            "60",
            "--chains",
            "50",
            "--out",
            "mix",
        ],
    )?;
    bnp(
        root,
        &[
            "simulate",
            "--seed",
            "9",
            "--model",
            "ibp-factors",
            "--m",
            "6",
            "--observations",
            "40",
            "--out",
            "ibp",
        ],
    )?;
    bnp(
        root,
        &[
            "fit-mixture",
            "--seed",
            "9",
            "--input",
            "mix/data.csv",
            "--chains",
            "4",
            "--alpha",
            "infer",
            "--out",
            "fm",
        ],
    )?;
    bnp(
        root,
        &[
            "fit-factors",
            "--seed",
            "9",
            "--input",
            "ibp/data.csv",
            "--chains",
            "3",
            "--sweeps",
            "300",
            "--burnin",
            "100",
            "--out",
            "ff",
        ],
    )?;
    bnp(
        root,
        &[
            "fit-vi",
            "--seed",
            "9",
            "--input",
            "mix/data.csv",
            "--out",
            "vi",
        ],
    )?;
    bnp(
        root,
        &[
            "diagnose",
            "--seed",
            "9",
            "--trace",
            "fm/trace.csv,ff/trace.csv",
            "--geweke",
            "true",
            "--sweeps",
            "500",
            "--out",
            "dg",
        ],
    )
}

fn determinism() -> Verdict {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    if let Err(e) = run_all_commands(first.path()).and_then(|_| run_all_commands(second.path())) {
        return verdict(false, e);
    }
    let (a, b) = (snapshot(first.path()), snapshot(second.path()));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let commands = ["mix/", "fm/", "ff/", "vi/", "dg/"]
        .iter()
        .filter(|prefix| a.keys().any(|k| k.starts_with(*prefix)))
        .count();
    verdict(
        a.len() == b.len() && differing.is_empty() && commands == 5,
        format!(
            "{} files from 5 subcommands compared, {} differ",
            a.len(),
            differing.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        (
            "exchangeability of the CRP",
            Box::new(|| exchangeability(Duration::from_secs(10))),
        ),
        ("CRP expected table count", Box::new(crp_expectation)),
        (
            "Gibbs exactness at N=5",
            Box::new(|| gibbs_exactness(Duration::from_secs(60))),
        ),
        ("finite-to-infinite mixture limit", Box::new(finite_limit)),
        ("getting it right (Geweke)", Box::new(getting_it_right)),
        ("variational inference", Box::new(variational)),
        ("IBP limit and expected dishes", Box::new(ibp_limit)),
        ("factor recovery", Box::new(factor_recovery)),
        ("end-to-end determinism", Box::new(determinism)),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        if !v.passed {
            failures += 1;
        }
        println!(
            "acceptance {} {:<34} {} ({:.1}s): {}",
            i + 1,
            name,
            if v.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
