//! Random environments, branching trajectories and quenched survival.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::offspring::{OffspringKind, OffspringLaw};
use crate::error::{Error, Result};
use crate::walk::{IncrementFamily, ScalingLaw};

/// Default guard on generation sizes.
pub const DEFAULT_POPULATION_CAP: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub family: IncrementFamily,
    pub offspring: OffspringKind,
}

impl EnvironmentModel {
    pub fn new(family: IncrementFamily, offspring: OffspringKind) -> Self {
        Self { family, offspring }
    }

    pub fn scaling(&self) -> ScalingLaw {
        self.family.scaling()
    }
}

/// Offspring laws `f_1..f_n` with increments `X_i = log f_i'(1)` and the
/// associated walk `S_0 = 0, S_k = X_1 + ... + X_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub laws: Vec<OffspringLaw>,
    pub increments: Vec<f64>,
    pub walk: Vec<f64>,
}

impl Environment {
    pub fn from_increments(kind: OffspringKind, increments: Vec<f64>) -> Self {
        let laws = increments.iter().map(|&x| OffspringLaw::new(kind, x)).collect();
        let mut walk = Vec::with_capacity(increments.len() + 1);
        let mut s = 0.0;
        walk.push(s);
        for x in &increments {
            s += x;
            walk.push(s);
        }
        Self { laws, increments, walk }
    }

    /// Environment whose associated walk follows `positions` (shifted to
    /// start at 0).
    pub fn from_positions(kind: OffspringKind, positions: &[f64]) -> Self {
        let inc = positions.windows(2).map(|w| w[1] - w[0]).collect();
        Self::from_increments(kind, inc)
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }

    /// Concatenate two environments.
    pub fn join(&self, other: &Environment) -> Environment {
        let mut inc = self.increments.clone();
        inc.extend_from_slice(&other.increments);
        let kind = self.laws.first().or(other.laws.first()).map_or(OffspringKind::Hybrid, |l| l.kind);
        Environment::from_increments(kind, inc)
    }
}

pub fn sample_environment<R: Rng + ?Sized>(model: &EnvironmentModel, n: usize, rng: &mut R) -> Environment {
    let inc = (0..n).map(|_| model.family.sample_step(rng)).collect();
    Environment::from_increments(model.offspring, inc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpreTrajectory {
    pub sizes: Vec<u64>,
    /// First generation at which the cap was hit; sizes are frozen there.
    pub saturated_at: Option<usize>,
}

impl BpreTrajectory {
    pub fn survived(&self) -> bool {
        self.saturated_at.is_some() || *self.sizes.last().unwrap() > 0
    }

    /// `Z_k e^{-S_k}`.
    pub fn normalized(&self, env: &Environment, k: usize) -> f64 {
        self.sizes[k] as f64 * (-env.walk[k]).exp()
    }
}

/// Generations `Z_0..Z_n` on a fixed environment; fails on crossing `cap`.
pub fn simulate_bpre<R: Rng + ?Sized>(env: &Environment, z0: u64, rng: &mut R) -> Result<BpreTrajectory> {
    let t = simulate_bpre_capped(env, z0, DEFAULT_POPULATION_CAP, rng);
    match t.saturated_at {
        Some(g) => Err(Error::PopulationOverflow { cap: DEFAULT_POPULATION_CAP, generation: g }),
        None => Ok(t),
    }
}

/// As [`simulate_bpre`], but a trajectory reaching `cap` is frozen and
/// flagged instead of failing.
pub fn simulate_bpre_capped<R: Rng + ?Sized>(env: &Environment, z0: u64, cap: u64, rng: &mut R) -> BpreTrajectory {
    simulate_prefix(env, z0, env.len(), cap, rng)
}

/// Generations `Z_0..Z_upto` only.
pub fn simulate_prefix<R: Rng + ?Sized>(env: &Environment, z0: u64, upto: usize, cap: u64, rng: &mut R) -> BpreTrajectory {
    let mut sizes = Vec::with_capacity(upto + 1);
    sizes.push(z0);
    let mut z = z0;
    for (k, law) in env.laws[..upto].iter().enumerate() {
        if z > 0 {
            // guard the mean before drawing so huge Poisson rates never occur
            let mean = z as f64 * law.mean();
            if mean > cap as f64 {
                sizes.push(cap);
                sizes.resize(upto + 1, cap);
                return BpreTrajectory { sizes, saturated_at: Some(k + 1) };
            }
            z = law.sample_sum(z, rng);
            if z >= cap {
                sizes.push(cap);
                sizes.resize(upto + 1, cap);
                return BpreTrajectory { sizes, saturated_at: Some(k + 1) };
            }
        }
        sizes.push(z);
    }
    BpreTrajectory { sizes, saturated_at: None }
}

/// `1 - f_{from+1} o ... o f_{to}(0)`, the survival probability from one
/// particle at generation `from` to generation `to`.
pub fn single_line_survival(env: &Environment, from: usize, to: usize) -> f64 {
    let mut t = 1.0;
    for law in env.laws[from..to].iter().rev() {
        t = law.survival_map(t);
    }
    t
}

/// `t[k]`: probability that one particle at generation `k` has a line
/// reaching `horizon`, for `k = 0..=horizon`.
pub fn survival_profile(env: &Environment, horizon: usize) -> Vec<f64> {
    let mut t = vec![1.0; horizon + 1];
    for k in (0..horizon).rev() {
        t[k] = env.laws[k].survival_map(t[k + 1]);
    }
    t
}

/// `Z_0..Z_upto` drawn given `Z_horizon > 0`, with the weight
/// `P(Z_horizon > 0 | E, Z_0 = z0)`. A zero weight means survival is
/// impossible and the trajectory is all zeros after `Z_0`.
pub fn simulate_surviving<R: Rng + ?Sized>(
    env: &Environment,
    z0: u64,
    upto: usize,
    horizon: usize,
    cap: u64,
    rng: &mut R,
) -> (BpreTrajectory, f64) {
    let t = survival_profile(env, horizon);
    let weight = survival_from(t[0], z0);
    let mut sizes = Vec::with_capacity(upto + 1);
    sizes.push(z0);
    if weight <= 0.0 {
        sizes.resize(upto + 1, 0);
        return (BpreTrajectory { sizes, saturated_at: None }, 0.0);
    }
    let mut z = z0;
    for k in 1..=upto {
        let law = &env.laws[k - 1];
        if z as f64 * law.mean() > cap as f64 {
            sizes.resize(upto + 1, cap);
            return (BpreTrajectory { sizes, saturated_at: Some(k) }, weight);
        }
        z = if k <= horizon { law.sample_sum_surviving(z, t[k], rng) } else { law.sample_sum(z, rng) };
        if z >= cap {
            sizes.resize(upto + 1, cap);
            return (BpreTrajectory { sizes, saturated_at: Some(k) }, weight);
        }
        sizes.push(z);
    }
    (BpreTrajectory { sizes, saturated_at: None }, weight)
}

/// `1 - (1 - t)^k` without cancellation.
pub fn survival_from(t: f64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    -(k as f64 * (-t).ln_1p()).exp_m1()
}

/// `P(Z_horizon > 0 | E, Z_0 = z0)` by backward generating-function iteration.
pub fn survival_prob_given_env(env: &Environment, z0: u64, horizon: usize) -> Result<f64> {
    if horizon > env.len() {
        return Err(Error::InvalidConfig(format!("horizon {horizon} exceeds environment length {}", env.len())));
    }
    Ok(survival_from(single_line_survival(env, 0, horizon), z0))
}

/// Survival probabilities to every horizon `0..=n`.
pub fn survival_curve(env: &Environment, z0: u64) -> Vec<f64> {
    (0..=env.len()).map(|h| survival_from(single_line_survival(env, 0, h), z0)).collect()
}

/// Linear-fractional closed form `1 / sum_{k=0}^{n} e^{-S_k}` for one
/// particle in a geometric environment.
pub fn geometric_survival_closed_form(env: &Environment, horizon: usize) -> f64 {
    1.0 / env.walk[..=horizon].iter().map(|s| (-s).exp()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{make_family, FamilyKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lattice_model(kind: OffspringKind) -> EnvironmentModel {
        EnvironmentModel::new(make_family(FamilyKind::LazyLattice { p: 0.3 }).unwrap(), kind)
    }

    #[test]
    fn increments_are_log_means() {
        let model = EnvironmentModel::new(make_family(FamilyKind::Gaussian { sigma: 1.0 }).unwrap(), OffspringKind::Hybrid);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let env = sample_environment(&model, 200, &mut rng);
        let mut s = 0.0;
        for (law, x) in env.laws.iter().zip(&env.increments) {
            assert_eq!(law.log_mean, *x);
            s += law.mean().ln();
        }
        assert!((s - env.walk[200]).abs() < 1e-9);
        assert_eq!(env.walk[200], env.increments.iter().fold(0.0, |a, b| a + b));
    }

    #[test]
    fn conditional_mean_identity() {
        let model = lattice_model(OffspringKind::Hybrid);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let env = sample_environment(&model, 30, &mut rng);
        let reps = 10_000;
        let z0 = 3;
        let vals: Vec<f64> = (0..reps)
            .map(|_| {
                let t = simulate_bpre(&env, z0, &mut rng).unwrap();
                t.normalized(&env, 30)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - z0 as f64).abs() < 4.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn geometric_closed_form_agrees() {
        let model = lattice_model(OffspringKind::Geometric);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let env = sample_environment(&model, 500, &mut rng);
            for h in [0, 1, 10, 100, 500] {
                let a = survival_prob_given_env(&env, 1, h).unwrap();
                let b = geometric_survival_closed_form(&env, h);
                assert!((a - b).abs() < 1e-10, "h={h}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn surviving_chain_matches_rejection() {
        // law of Z_5 given Z_10 > 0 on a fixed environment, two ways
        let env = Environment::from_increments(OffspringKind::Hybrid, vec![-1.0, 0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40_000;
        let mut a = vec![0.0; 12];
        for _ in 0..n {
            let (t, w) = simulate_surviving(&env, 2, 5, 10, 1 << 40, &mut rng);
            assert!((w - survival_prob_given_env(&env, 2, 10).unwrap()).abs() < 1e-15);
            a[(t.sizes[5] as usize).min(11)] += 1.0;
        }
        let mut b = vec![0.0; 12];
        let mut got = 0;
        while got < n {
            let t = simulate_bpre(&env, 2, &mut rng).unwrap();
            if t.sizes[10] > 0 {
                b[(t.sizes[5] as usize).min(11)] += 1.0;
                got += 1;
            }
        }
        let r = crate::harness::stats::chi_square_test(&a, &b, 5.0).unwrap();
        // two-sample comparison with equal sizes: the statistic doubles
        let stat = r.statistic / 2.0;
        let dist = statrs::distribution::ChiSquared::new(r.dof as f64).unwrap();
        use statrs::distribution::ContinuousCDF;
        assert!(1.0 - dist.cdf(stat) > 0.001, "{r:?}");
    }

    #[test]
    fn sampled_increments_follow_the_family() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gauss = EnvironmentModel::new(make_family(FamilyKind::Gaussian { sigma: 1.0 }).unwrap(), OffspringKind::Hybrid);
        let env = sample_environment(&gauss, 100_000, &mut rng);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let d = crate::harness::stats::ks_statistic(
            &crate::harness::stats::empirical_cdf(&env.increments, None).unwrap(),
            |x| normal.cdf(x),
        );
        assert!(d <= 0.01, "gaussian KS {d}");

        let fam = make_family(FamilyKind::TwoSidedPareto { alpha: 1.5, balance: 0.5 }).unwrap();
        let pareto = EnvironmentModel::new(fam, OffspringKind::Hybrid);
        let env = sample_environment(&pareto, 100_000, &mut rng);
        let c = fam.centering;
        let cdf = |x: f64| {
            let y = x + c;
            if y <= -1.0 {
                0.5 * (-y).powf(-1.5)
            } else if y < 1.0 {
                0.5
            } else {
                1.0 - 0.5 * y.powf(-1.5)
            }
        };
        let d = crate::harness::stats::ks_statistic(&crate::harness::stats::empirical_cdf(&env.increments, None).unwrap(), cdf);
        assert!(d <= 0.01, "pareto KS {d}");
    }

    #[test]
    fn cap_saturates() {
        let env = Environment::from_increments(OffspringKind::Hybrid, vec![5.0; 20]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = simulate_bpre_capped(&env, 1, 1_000_000, &mut rng);
        assert!(t.saturated_at.is_some() && t.survived());
        assert!(matches!(
            simulate_bpre(&Environment::from_increments(OffspringKind::Hybrid, vec![10.0; 20]), 1, &mut rng),
            Err(Error::PopulationOverflow { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn absorption_and_monotone_survival(seed in 0u64..1000, geo in proptest::bool::ANY, z0 in 1u64..5) {
            let kind = if geo { OffspringKind::Geometric } else { OffspringKind::Hybrid };
            let model = lattice_model(kind);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let env = sample_environment(&model, 60, &mut rng);
            let t = simulate_bpre(&env, z0, &mut rng).unwrap();
            for w in t.sizes.windows(2) {
                prop_assert!(w[0] > 0 || w[1] == 0);
            }
            let curve = survival_curve(&env, z0);
            prop_assert_eq!(curve[0], 1.0);
            for w in curve.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
                prop_assert!((0.0..=1.0).contains(&w[1]));
            }
        }
    }
}
