//! The truncated second-moment condition on offspring laws: moments of
//! `(log+ gamma(b))^{alpha + eps}` over the environment law.

use serde::{Deserialize, Serialize};

use super::environment::EnvironmentModel;
use super::offspring::{hybrid_gamma2_bound, OffspringKind, OffspringLaw};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct B2Budget {
    /// Environments at the first level; each further level doubles it.
    pub base: u64,
    pub doublings: usize,
    /// A moment counts as stable when successive levels differ by less
    /// than this fraction.
    pub stability_tol: f64,
    /// Fraction of the largest values used by the Hill estimator.
    pub hill_fraction: f64,
    pub seed: u64,
    pub partitions: usize,
}

impl Default for B2Budget {
    fn default() -> Self {
        Self { base: 125_000, doublings: 3, stability_tol: 0.1, hill_fraction: 0.01, seed: 0, partitions: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B2Report {
    pub family: String,
    pub offspring: OffspringKind,
    pub b: u32,
    pub eps: f64,
    pub power: f64,
    /// `(environments, moment estimate)` per budget level.
    pub moments: Vec<(u64, f64)>,
    /// Largest relative change between successive levels.
    pub max_relative_change: f64,
    pub empirical_stable: bool,
    /// Hill estimate of the tail index of `log+ gamma(b)`, if it has a tail.
    pub hill_index: Option<f64>,
    pub sup_gamma: f64,
    /// Tail fractions `P(log+ gamma > t)` at `t = 1, 2, 4, 8, 16`.
    pub tail: Vec<(f64, f64)>,
    pub analytic: Verdict,
    pub verdict: Verdict,
}

/// Analytic verdict: hybrid laws have `gamma(2)` bounded by a constant, so
/// the moment is finite for every environment; geometric laws have
/// `gamma(b) >= c e^{-b X}` for very negative `X`, so the moment is finite
/// exactly when `X^-` has all moments.
pub fn analytic_verdict(model: &EnvironmentModel, b: u32) -> Verdict {
    match model.offspring {
        OffspringKind::Hybrid if b >= 2 => Verdict::Pass,
        _ => {
            if model.family.left_tail_index().is_some() {
                Verdict::Fail
            } else {
                Verdict::Pass
            }
        }
    }
}

pub fn check_condition_b2(model: &EnvironmentModel, b: u32, eps: f64, budget: &B2Budget) -> Result<B2Report> {
    if b == 0 || eps <= 0.0 {
        return Err(Error::InvalidConfig("condition B2 needs b >= 1 and eps > 0".into()));
    }
    if budget.base == 0 {
        return Err(Error::BudgetTooSmall("no environments requested".into()));
    }
    let alpha = model.family.stable_target.alpha;
    let power = alpha + eps;
    let total = budget.base << budget.doublings;
    let family = model.family;
    let kind = model.offspring;
    let parts = rng::run_partitioned(budget.seed, budget.partitions, total, |_, share, rng| {
        (0..share)
            .map(|_| {
                let law = OffspringLaw::new(kind, family.sample_step(rng));
                law.gamma_b(b)
            })
            .collect::<Vec<f64>>()
    });
    let gammas: Vec<f64> = parts.into_iter().flatten().collect();
    let logs: Vec<f64> = gammas.iter().map(|g| g.max(1.0).ln()).collect();

    // the levels are nested prefixes of one sample
    let mut moments = Vec::new();
    let mut acc = 0.0;
    let mut used = 0usize;
    for level in 0..=budget.doublings {
        let upto = (budget.base << level) as usize;
        for l in &logs[used..upto] {
            acc += l.powf(power);
        }
        used = upto;
        moments.push((upto as u64, acc / upto as f64));
    }
    let max_relative_change = moments
        .windows(2)
        .map(|w| if w[0].1 > 0.0 { (w[1].1 - w[0].1).abs() / w[0].1 } else if w[1].1 > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    let empirical_stable = max_relative_change < budget.stability_tol;
    let hill_index = hill(&logs, budget.hill_fraction);
    let sup_gamma = gammas.iter().cloned().fold(0.0, f64::max);
    let n = logs.len() as f64;
    let tail = [1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&t| (t, logs.iter().filter(|&&l| l > t).count() as f64 / n))
        .collect();
    let analytic = analytic_verdict(model, b);
    let hill_heavy = hill_index.is_some_and(|h| h < power);
    let verdict = if analytic == Verdict::Pass && empirical_stable && !hill_heavy { Verdict::Pass } else { Verdict::Fail };
    Ok(B2Report {
        family: model.family.label(),
        offspring: kind,
        b,
        eps,
        power,
        moments,
        max_relative_change,
        empirical_stable,
        hill_index,
        sup_gamma,
        tail,
        analytic,
        verdict,
    })
}

/// Hill estimator from the top `fraction` of positive values.
fn hill(values: &[f64], fraction: f64) -> Option<f64> {
    let mut pos: Vec<f64> = values.iter().cloned().filter(|&v| v > 0.0).collect();
    let k = ((values.len() as f64 * fraction) as usize).min(pos.len().saturating_sub(1));
    if k < 10 {
        return None;
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let threshold = pos[k].ln();
    let mean = pos[..k].iter().map(|v| v.ln() - threshold).sum::<f64>() / k as f64;
    if mean <= 0.0 {
        None
    } else {
        Some(1.0 / mean)
    }
}

/// Analytic `sup gamma(2)` for the hybrid family.
pub fn hybrid_bound() -> f64 {
    hybrid_gamma2_bound()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hill_recovers_pareto_index() {
        // deterministic Pareto(2) quantiles
        let n = 100_000;
        let v: Vec<f64> = (1..=n).map(|i| (1.0 - (i as f64 - 0.5) / n as f64).powf(-0.5)).collect();
        let h = hill(&v, 0.01).unwrap();
        assert!((h - 2.0).abs() < 0.1, "{h}");
        assert!(hill(&[0.0; 100], 0.1).is_none());
    }
}

#[cfg(test)]
mod verdict_tests {
    use super::*;
    use crate::bpre::environment::EnvironmentModel;
    use crate::walk::{make_family, FamilyKind};

    fn run(kind: FamilyKind, offspring: OffspringKind) -> B2Report {
        let model = EnvironmentModel::new(make_family(kind).unwrap(), offspring);
        let budget = B2Budget { base: 20_000, doublings: 2, seed: 8, partitions: 2, ..Default::default() };
        let b = if offspring == OffspringKind::Hybrid { 2 } else { 1 };
        check_condition_b2(&model, b, 0.1, &budget).unwrap()
    }

    #[test]
    fn frozen_verdicts() {
        let hybrid_lattice = run(FamilyKind::LazyLattice { p: 0.3 }, OffspringKind::Hybrid);
        assert_eq!(hybrid_lattice.verdict, Verdict::Pass);
        let hybrid_pareto = run(FamilyKind::TwoSidedPareto { alpha: 1.5, balance: 0.5 }, OffspringKind::Hybrid);
        assert_eq!(hybrid_pareto.verdict, Verdict::Pass);
        assert!(hybrid_pareto.sup_gamma <= hybrid_bound() + 1e-9);
        let geo_gauss = run(FamilyKind::Gaussian { sigma: 1.0 }, OffspringKind::Geometric);
        assert_eq!(geo_gauss.verdict, Verdict::Pass);
        let geo_pareto = run(FamilyKind::TwoSidedPareto { alpha: 1.5, balance: 0.5 }, OffspringKind::Geometric);
        assert_eq!(geo_pareto.verdict, Verdict::Fail);
    }

    #[test]
    fn rejects_bad_arguments() {
        let model = EnvironmentModel::new(make_family(FamilyKind::Gaussian { sigma: 1.0 }).unwrap(), OffspringKind::Hybrid);
        assert!(check_condition_b2(&model, 0, 0.1, &B2Budget::default()).is_err());
        assert!(check_condition_b2(&model, 2, 0.0, &B2Budget::default()).is_err());
    }
}
