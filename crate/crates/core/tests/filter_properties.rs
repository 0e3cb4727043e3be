use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use exactpf::estimators::{EstimatorConfig, EstimatorKind};
use exactpf::experiments::{run_replicates, simulate_ou_dataset, FilterVariant};
use exactpf::filter::{
    ess, filter_estimate, pf1_select, rwpf_step, FilterConfig, FilterKind, Observation, Particle, ParticleSet,
    ResampleScheme,
};
use exactpf::models::OuCoxModel;
use exactpf::rng::SeedTree;
use exactpf::stats::{ks_two_sample, mean_var};

#[test]
fn random_weights_match_exact_weights_in_mean() {
    let data = simulate_ou_dataset(0.5, 0.5, 20, 1.0, 404).unwrap();
    let model = data.model.build().unwrap();
    let exact = FilterVariant::new(
        "exact",
        FilterKind::Rwpf,
        FilterConfig::new(200, EstimatorConfig::new(EstimatorKind::ExactTransition)),
    );
    let random = FilterVariant::new("GPE-2", FilterKind::Rwpf, FilterConfig::new(200, EstimatorConfig::gpe2(10.0)));
    let a = run_replicates(&exact, model.as_ref(), &data, 100, SeedTree::new(1)).unwrap();
    let b = run_replicates(&random, model.as_ref(), &data, 100, SeedTree::new(2)).unwrap();
    for i in 0..a.times.len() {
        let col = |s: &exactpf::experiments::ReplicateSet| s.means.iter().map(|m| m[i]).collect::<Vec<_>>();
        let (ma, va) = mean_var(&col(&a));
        let (mb, vb) = mean_var(&col(&b));
        let se = (va / 100.0 + vb / 100.0).sqrt();
        assert!((ma - mb).abs() <= 3.0 * se, "step {i}: exact {ma:.4} random {mb:.4} se {se:.4}");
    }
}

fn weighted_set(seed: u64, n: usize) -> ParticleSet {
    let mut rng = SeedTree::new(seed).rng();
    let mut ps = ParticleSet::from_states(&vec![0.0; n], 0.0);
    for p in &mut ps.particles {
        p.state = rng.random_range(-1.5..1.5);
        p.weight = rng.random_range(0.1..2.0);
    }
    ps
}

#[test]
fn permuting_particles_leaves_the_estimate_law_unchanged() {
    let model = OuCoxModel::ou(0.5).unwrap();
    let mut cfg = FilterConfig::new(40, EstimatorConfig::gpe2(10.0));
    cfg.resample_scheme = ResampleScheme::Multinomial;
    let obs = Observation::Noisy {
        time: 1.0,
        value: 0.4,
        sigma: 0.5,
    };
    let ps = weighted_set(9, 40);
    let mut shuffled = ps.clone();
    let mut order: Vec<Particle> = shuffled.particles.clone();
    order.shuffle(&mut SeedTree::new(10).rng());
    shuffled.particles = order;

    let estimates = |set: &ParticleSet, tag: u64| -> Vec<f64> {
        (0..2000u64)
            .map(|s| {
                let next = rwpf_step(set, &obs, &cfg, &model, None, SeedTree::new(tag).child(s)).unwrap();
                filter_estimate(&next, |x| x).unwrap()
            })
            .collect()
    };
    let a = estimates(&ps, 11);
    let b = estimates(&shuffled, 12);
    let ks = ks_two_sample(&a, &b);
    assert!(ks.p_value >= 0.01, "KS p = {}", ks.p_value);
}

proptest! {
    #[test]
    fn resampled_steps_have_full_delta_ess(
        betas in proptest::collection::vec(0.01f64..5.0, 2..60),
        scheme in prop_oneof![
            Just(ResampleScheme::Multinomial),
            Just(ResampleScheme::Stratified),
            Just(ResampleScheme::Residual),
        ],
        seed in 0u64..1000,
    ) {
        let n = betas.len();
        let sel = pf1_select(&betas, f64::INFINITY, scheme, &mut SeedTree::new(seed).rng()).unwrap();
        prop_assert_eq!(sel.ancestors.len(), n);
        prop_assert!((ess(&sel.deltas).unwrap() - n as f64).abs() < 1e-9);
    }

    #[test]
    fn emitted_weights_are_nonnegative_without_clamping(seed in 0u64..200) {
        let model = OuCoxModel::ou(0.5).unwrap();
        let cfg = FilterConfig::new(30, EstimatorConfig::gpe2(10.0));
        let obs = Observation::Noisy { time: 0.7, value: -0.2, sigma: 0.3 };
        let next = rwpf_step(&weighted_set(seed, 30), &obs, &cfg, &model, None, SeedTree::new(seed)).unwrap();
        prop_assert_eq!(next.clamp_count, 0);
        prop_assert!(next.particles.iter().all(|p| p.weight >= 0.0));
    }
}
