use condwalk::bpre::b2::analytic_verdict;
use condwalk::bpre::environment::geometric_survival_closed_form;
use condwalk::bpre::regime::check_regime;
use condwalk::bpre::{
    run_regime_experiment, sample_environment, simulate_bpre, survival_prob_given_env, verify_tcond, Environment,
    EnvironmentModel, OffspringKind, PoolConfig, ReferenceLaw, Regime, RegimeBudget, SamplerKind, UpPool, Verdict,
};
use condwalk::harness::lab::Lab;
use condwalk::walk::{make_family, FamilyKind, RenewalKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lattice(offspring: OffspringKind) -> EnvironmentModel {
    EnvironmentModel::new(make_family(FamilyKind::LazyLattice { p: 0.3 }).unwrap(), offspring)
}

/// `P(Z_n > 0)` for one ancestor by composing linear-fractional pgfs.
fn geometric_survival_by_composition(increments: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in increments.iter().rev() {
        let m = x.exp();
        s = 1.0 / (1.0 + m * (1.0 - s));
    }
    1.0 - s
}

fn increments() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn survival_starts_at_one_and_decreases(inc in increments(), z0 in 1u64..5, hybrid in any::<bool>()) {
        let kind = if hybrid { OffspringKind::Hybrid } else { OffspringKind::Geometric };
        let env = Environment::from_increments(kind, inc.clone());
        prop_assert_eq!(survival_prob_given_env(&env, z0, 0).unwrap(), 1.0);
        let mut prev = 1.0;
        for h in 1..=inc.len() {
            let p = survival_prob_given_env(&env, z0, h).unwrap();
            prop_assert!((0.0..=prev + 1e-15).contains(&p));
            prev = p;
        }
        prop_assert!(survival_prob_given_env(&env, z0, inc.len() + 1).is_err());
    }

    #[test]
    fn geometric_survival_three_ways(inc in increments()) {
        let env = Environment::from_increments(OffspringKind::Geometric, inc.clone());
        let n = inc.len();
        let composed = geometric_survival_by_composition(&inc);
        let got = survival_prob_given_env(&env, 1, n).unwrap();
        prop_assert!((got - composed).abs() <= 1e-10 * composed.max(1e-300) + 1e-14);
        let closed = geometric_survival_closed_form(&env, n);
        prop_assert!((closed - composed).abs() <= 1e-9 * composed + 1e-14);
    }

    #[test]
    fn more_ancestors_survive_longer(inc in increments(), z0 in 1u64..6) {
        let env = Environment::from_increments(OffspringKind::Hybrid, inc.clone());
        let n = inc.len();
        let one = survival_prob_given_env(&env, 1, n).unwrap();
        let many = survival_prob_given_env(&env, z0, n).unwrap();
        prop_assert!(many >= one - 1e-15);
        prop_assert!((many - (1.0 - (1.0 - one).powi(z0 as i32))).abs() < 1e-12);
    }
}

#[test]
fn simulated_survival_matches_the_recursion() {
    let model = lattice(OffspringKind::Hybrid);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let env = sample_environment(&model, 30, &mut rng);
        let p = survival_prob_given_env(&env, 2, 30).unwrap();
        let runs = 20_000;
        let alive = (0..runs).filter(|_| simulate_bpre(&env, 2, &mut rng).unwrap().survived()).count() as f64 / runs as f64;
        let se = (p * (1.0 - p) / runs as f64).sqrt().max(1e-4);
        assert!((alive - p).abs() <= 4.0 * se, "{alive} vs {p}");
    }
}

#[test]
fn regime_windows() {
    assert!(check_regime(Regime::Small, 300, 30, 1.0, 5.0).is_ok());
    assert!(check_regime(Regime::Small, 300, 30, 3.0, 5.0).is_err());
    assert!(check_regime(Regime::Small, 300, 61, 1.0, 5.0).is_err());
    assert!(check_regime(Regime::Proportional { t: 1.0 }, 300, 30, 5.0, 5.0).is_ok());
    assert!(check_regime(Regime::Proportional { t: 1.0 }, 300, 30, 25.0, 5.0).is_err());
    assert!(check_regime(Regime::Large, 300, 30, 9.0, 5.0).is_err());
    assert!(check_regime(Regime::Large, 300, 30, 10.0, 5.0).is_ok());
}

#[test]
fn analytic_b2_verdicts() {
    let gauss = make_family(FamilyKind::Gaussian { sigma: 1.0 }).unwrap();
    let pareto = make_family(FamilyKind::TwoSidedPareto { alpha: 1.5, balance: 0.5 }).unwrap();
    assert_eq!(analytic_verdict(&EnvironmentModel::new(gauss, OffspringKind::Geometric), 1), Verdict::Pass);
    assert_eq!(analytic_verdict(&EnvironmentModel::new(pareto, OffspringKind::Hybrid), 2), Verdict::Pass);
    assert_eq!(analytic_verdict(&EnvironmentModel::new(pareto, OffspringKind::Geometric), 1), Verdict::Fail);
}

/// The recentred `Z_k e^{-S_k}` settles, so its spread between `n - m`
/// and the previous generation shrinks as the horizon grows.
#[test]
fn zhat_spread_shrinks_with_the_horizon() {
    let model = lattice(OffspringKind::Hybrid);
    let iqr = |n: usize| {
        let budget = RegimeBudget { replicas: 4000, floor: 500, seed: 5, partitions: 2, ..Default::default() };
        let r = run_regime_experiment(&model, n, n / 10, 1.0, Regime::Small, &budget, SamplerKind::EnvImportance, &ReferenceLaw::Power(1.0), None)
            .unwrap();
        r.zhat_iqr.unwrap()
    };
    let (short, long) = (iqr(200), iqr(600));
    assert!(long < short, "{long} vs {short}");
}

#[test]
fn tcond_terms_are_consistent() {
    let model = lattice(OffspringKind::Hybrid);
    let mut lab = Lab::new(3, 2, None);
    let eval = lab.law_eval(&model.family).unwrap();
    let vm = lab.renewal(&model.family, RenewalKind::VMinus, 400).unwrap();
    let pool = UpPool::build(&model, &vm, &PoolConfig { size: 2000, horizon: 100, max_attempts: 1_000_000, seed: 4, partitions: 2 }).unwrap();
    let budget = RegimeBudget { replicas: 3000, floor: 1, seed: 6, partitions: 2, ..Default::default() };
    let r = verify_tcond(&model, 200, 20, 1.0, 1.0, 1, &budget, &eval, &pool).unwrap();
    assert_eq!(r.replicas, 3000);
    assert!(0.0 <= r.min_h && r.min_h <= r.max_h && r.max_h <= 1.0);
    assert!(r.lhs <= r.event_prob * r.max_h + 1e-12);
    assert!(r.lhs >= r.event_prob * r.min_h - 1e-12);
    assert!((r.rhs - r.a1 * r.e_up).abs() < 1e-15);
    assert!(verify_tcond(&model, 200, 20, 1.0, 1.0, 0, &budget, &eval, &pool).is_err());
}
