use std::collections::BTreeMap;

use bnp_core::crp::{self, Concentration, Partition};
use bnp_core::finite::{
    exact_assignment_posterior, finite_partition_prior_mc, total_variation, FiniteMixtureModel,
};
use bnp_core::stats::{NormalNormalModel, RandomStream};
use bnp_core::BnpError;
use proptest::prelude::*;

fn crp_table(n: usize, alpha: f64) -> BTreeMap<Partition, f64> {
    let a = Concentration::new(alpha).unwrap();
    crp::enumerate_partitions(n)
        .unwrap()
        .into_iter()
        .map(|p| {
            let lp = crp::log_prob(&p, &a);
            (p, lp.exp())
        })
        .collect()
}

#[test]
fn hundred_components_approach_the_crp() {
    let mut rng = RandomStream::new(1, 0);
    let freq = finite_partition_prior_mc(100, 1.0, 3, 200_000, &mut rng).unwrap();
    let tv = total_variation(&freq, &crp_table(3, 1.0));
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn distance_to_the_crp_shrinks_with_more_components() {
    let exact = crp_table(4, 1.5);
    let tv_small = total_variation(
        &finite_partition_prior_mc(2, 1.5, 4, 50_000, &mut RandomStream::new(2, 0)).unwrap(),
        &exact,
    );
    let tv_large = total_variation(
        &finite_partition_prior_mc(200, 1.5, 4, 50_000, &mut RandomStream::new(2, 1)).unwrap(),
        &exact,
    );
    assert!(tv_large < tv_small, "{tv_large} vs {tv_small}");
}

#[test]
fn enumeration_refuses_large_problems() {
    let base = NormalNormalModel::new(0.0, 1.0, 1.0).unwrap();
    let model = FiniteMixtureModel::new(10, 1.0, base).unwrap();
    let data = vec![0.0; 7];
    assert!(matches!(
        exact_assignment_posterior(&model, &data),
        Err(BnpError::GuardRail(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_posterior_is_normalised_and_label_symmetric(
        data in prop::collection::vec(-5.0f64..5.0, 1..6),
        k in 1usize..4,
        alpha in 0.1f64..5.0,
    ) {
        let base = NormalNormalModel::new(0.0, 4.0, 1.0).unwrap();
        let model = FiniteMixtureModel::new(k, alpha, base).unwrap();
        let post = exact_assignment_posterior(&model, &data).unwrap();
        let total: f64 = post.assignments().iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        // swapping the names of components 0 and k-1 leaves probabilities unchanged
        for (a, p) in post.assignments() {
            let swapped: Vec<usize> = a
                .iter()
                .map(|&c| if c == 0 { k - 1 } else if c == k - 1 { 0 } else { c })
                .collect();
            let q = post.probability(&swapped).unwrap();
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}
