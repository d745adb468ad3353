//! Offspring laws parameterised by their log-mean.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffspringKind {
    /// Bernoulli(M) for `M < 1`, Poisson(M) otherwise.
    Hybrid,
    /// Geometric on `{0, 1, ...}` with mean `M`; linear-fractional pgf.
    Geometric,
}

/// One generation's reproduction law. The log-mean is stored so that the
/// associated walk increment is exactly `log f'(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    pub kind: OffspringKind,
    pub log_mean: f64,
}

/// `1 - f(1 - t)` for `t` in `[0, 1]`, computed without cancellation.
#[inline]
fn one_minus_pgf(kind: OffspringKind, m: f64, t: f64) -> f64 {
    match kind {
        OffspringKind::Hybrid if m < 1.0 => m * t,
        OffspringKind::Hybrid => -(-m * t).exp_m1(),
        OffspringKind::Geometric => {
            if m.is_infinite() {
                1.0
            } else {
                m * t / (1.0 + m * t)
            }
        }
    }
}

impl OffspringLaw {
    pub fn new(kind: OffspringKind, log_mean: f64) -> Self {
        Self { kind, log_mean }
    }

    pub fn mean(&self) -> f64 {
        self.log_mean.exp()
    }

    pub fn is_bernoulli(&self) -> bool {
        self.kind == OffspringKind::Hybrid && self.mean() < 1.0
    }

    /// Generating function `f(s)`.
    pub fn pgf(&self, s: f64) -> f64 {
        1.0 - one_minus_pgf(self.kind, self.mean(), 1.0 - s)
    }

    /// `1 - f(1 - t)`; the survival recursion runs on this map.
    pub fn survival_map(&self, t: f64) -> f64 {
        one_minus_pgf(self.kind, self.mean(), t)
    }

    pub fn pmf(&self, k: u64) -> f64 {
        let m = self.mean();
        match self.kind {
            OffspringKind::Hybrid if m < 1.0 => match k {
                0 => 1.0 - m,
                1 => m,
                _ => 0.0,
            },
            OffspringKind::Hybrid => {
                let kf = k as f64;
                (kf * m.ln() - m - statrs::function::gamma::ln_gamma(kf + 1.0)).exp()
            }
            OffspringKind::Geometric => {
                let q = m / (1.0 + m);
                (1.0 - q) * q.powi(k as i32)
            }
        }
    }

    /// Total offspring of `z` independent parents.
    pub fn sample_sum<R: Rng + ?Sized>(&self, z: u64, rng: &mut R) -> u64 {
        if z == 0 {
            return 0;
        }
        let m = self.mean();
        match self.kind {
            OffspringKind::Hybrid if m < 1.0 => Binomial::new(z, m).unwrap().sample(rng),
            OffspringKind::Hybrid => Poisson::new(z as f64 * m).unwrap().sample(rng) as u64,
            OffspringKind::Geometric => {
                // a sum of z geometrics is negative binomial: Poisson with a Gamma(z, M) rate
                let lambda = Gamma::new(z as f64, m).unwrap().sample(rng);
                if lambda <= 0.0 {
                    0
                } else {
                    Poisson::new(lambda).unwrap().sample(rng) as u64
                }
            }
        }
    }

    /// Total offspring of `z` parents given that at least one child has a
    /// line of descent surviving, when each child's line survives
    /// independently with probability `t`.
    pub fn sample_sum_surviving<R: Rng + ?Sized>(&self, z: u64, t: f64, rng: &mut R) -> u64 {
        assert!(z > 0 && t > 0.0, "conditioning on an impossible event");
        let m = self.mean();
        match self.kind {
            OffspringKind::Hybrid if m < 1.0 => {
                // per parent: surviving child (m t), other child, or none
                let p = m * t;
                let s = truncated_binomial(z, p, rng);
                let r = m * (1.0 - t) / (1.0 - p);
                let rest = if r > 0.0 && z > s { Binomial::new(z - s, r.min(1.0)).unwrap().sample(rng) } else { 0 };
                s + rest
            }
            OffspringKind::Hybrid => {
                let lam = z as f64 * m;
                let s = truncated_poisson(lam * t, rng);
                let other = lam * (1.0 - t);
                let rest = if other > 0.0 { Poisson::new(other).unwrap().sample(rng) as u64 } else { 0 };
                s + rest
            }
            OffspringKind::Geometric => loop {
                let k = self.sample_sum(z, rng);
                if k > 0 && rng.random::<f64>() < survival_of(t, k) {
                    break k;
                }
            },
        }
    }

    /// `gamma(b) = E[K^2; K >= b] / E[K; K >= b]^2`, with `0` when the
    /// law puts no mass on `{b, b+1, ...}`.
    pub fn gamma_b(&self, b: u32) -> f64 {
        let m = self.mean();
        let bf = b as f64;
        match self.kind {
            OffspringKind::Hybrid if m < 1.0 => {
                if b <= 1 {
                    1.0 / m
                } else {
                    0.0
                }
            }
            OffspringKind::Hybrid => {
                if !m.is_finite() {
                    return 1.0;
                }
                // P(K >= j) = P(Gamma(j) <= M)
                let tail = |j: f64| if j <= 0.0 { 1.0 } else { gamma_lr(j, m) };
                let first = m * tail(bf - 1.0);
                let second = m * m * tail(bf - 2.0) + m * tail(bf - 1.0);
                second / (first * first)
            }
            OffspringKind::Geometric => {
                if !m.is_finite() {
                    return 2.0;
                }
                let q = m / (1.0 + m);
                (bf * bf + 2.0 * bf * m + m + 2.0 * m * m) / (q.powi(b as i32) * (bf + m).powi(2))
            }
        }
    }
}

fn survival_of(t: f64, k: u64) -> f64 {
    -(k as f64 * (-t).ln_1p()).exp_m1()
}

/// Poisson(`lam`) conditioned to be positive.
fn truncated_poisson<R: Rng + ?Sized>(lam: f64, rng: &mut R) -> u64 {
    if lam > 1.0 {
        loop {
            let k = Poisson::new(lam).unwrap().sample(rng) as u64;
            if k > 0 {
                return k;
            }
        }
    }
    let mut u = rng.random::<f64>() * -(-lam).exp_m1();
    let mut k = 1u64;
    let mut pk = lam * (-lam).exp();
    loop {
        u -= pk;
        if u <= 0.0 || pk == 0.0 {
            return k;
        }
        k += 1;
        pk *= lam / k as f64;
    }
}

/// Binomial(`z`, `p`) conditioned to be positive: the index of the first
/// success by inversion, then the remaining trials freely.
fn truncated_binomial<R: Rng + ?Sized>(z: u64, p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return z;
    }
    let log_q = (-p).ln_1p();
    let all_fail = (z as f64 * log_q).exp();
    let u = rng.random::<f64>() * (1.0 - all_fail);
    // smallest i with 1 - q^i >= u
    let i = (((-u).ln_1p() / log_q).ceil() as u64).clamp(1, z);
    let rest = if z > i { Binomial::new(z - i, p).unwrap().sample(rng) } else { 0 };
    1 + rest
}

/// `sup_{M >= 1} gamma(2)` for the Poisson branch, attained at `M = 1`.
pub fn hybrid_gamma2_bound() -> f64 {
    OffspringLaw::new(OffspringKind::Hybrid, 0.0).gamma_b(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::stats::chi_square_test;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn brute_gamma(law: &OffspringLaw, b: u64) -> f64 {
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in b..400 {
            let p = law.pmf(k);
            s1 += k as f64 * p;
            s2 += (k * k) as f64 * p;
        }
        if s1 == 0.0 {
            0.0
        } else {
            s2 / (s1 * s1)
        }
    }

    #[test]
    fn hybrid_bound_value() {
        let e = (-1.0f64).exp();
        let want = (2.0 - e) / (1.0 - e).powi(2);
        assert!((hybrid_gamma2_bound() - want).abs() < 1e-12);
    }

    #[test]
    fn surviving_sums_follow_size_biased_law() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for (x, z, t) in [(0.5f64, 2u64, 0.3), (-0.5, 3, 0.05), (-1.0, 4, 0.4), (1.2, 1, 0.01)] {
            let law = OffspringLaw::new(OffspringKind::Hybrid, x);
            let n = 60_000;
            let mut counts = vec![0.0; 30];
            for _ in 0..n {
                let k = law.sample_sum_surviving(z, t, &mut rng) as usize;
                counts[k.min(29)] += 1.0;
            }
            // exact law of the total given a surviving child
            let pk: Vec<f64> = (0..29u64)
                .map(|k| {
                    let total = if law.is_bernoulli() {
                        let m = law.mean();
                        statrs::function::factorial::binomial(z, k) * m.powi(k as i32) * (1.0 - m).powi((z as i64 - k as i64).max(0) as i32)
                            * if k <= z { 1.0 } else { 0.0 }
                    } else {
                        let lam = z as f64 * law.mean();
                        (k as f64 * lam.ln() - lam - statrs::function::gamma::ln_gamma(k as f64 + 1.0)).exp()
                    };
                    total * survival_of(t, k)
                })
                .collect();
            let norm: f64 = pk.iter().sum();
            let mut expected: Vec<f64> = pk.iter().map(|p| n as f64 * p / norm).collect();
            expected.push(0.0);
            let r = chi_square_test(&counts, &expected, 5.0).unwrap();
            assert!(r.p_value > 0.01, "x={x} z={z} t={t}: {r:?}");
        }
    }

    #[test]
    fn poisson_two_chi_square() {
        let law = OffspringLaw::new(OffspringKind::Hybrid, 2f64.ln());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut counts = vec![0.0; 15];
        for _ in 0..n {
            let k = law.sample_sum(1, &mut rng) as usize;
            counts[k.min(14)] += 1.0;
        }
        let mut expected: Vec<f64> = (0..14).map(|k| n as f64 * law.pmf(k)).collect();
        expected.push(n as f64 - expected.iter().sum::<f64>());
        let r = chi_square_test(&counts, &expected, 5.0).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
    }

    proptest! {
        #[test]
        fn pgf_normalised_and_mean_exact(x in -4.0f64..4.0, geo in proptest::bool::ANY) {
            let kind = if geo { OffspringKind::Geometric } else { OffspringKind::Hybrid };
            let law = OffspringLaw::new(kind, x);
            prop_assert!((law.pgf(1.0) - 1.0).abs() < 1e-15);
            let h = 1e-6;
            let deriv = (law.pgf(1.0) - law.pgf(1.0 - h)) / h;
            prop_assert!((deriv / law.mean() - 1.0).abs() < 1e-4);
        }

        #[test]
        fn gamma_matches_truncated_sums(x in -3.0f64..2.0, b in 1u32..4, geo in proptest::bool::ANY) {
            let kind = if geo { OffspringKind::Geometric } else { OffspringKind::Hybrid };
            let law = OffspringLaw::new(kind, x);
            let brute = brute_gamma(&law, b as u64);
            let g = law.gamma_b(b);
            prop_assert!((g - brute).abs() <= 1e-8 * brute.max(1.0), "{} vs {}", g, brute);
        }

        #[test]
        fn hybrid_gamma2_bounded(x in -10.0f64..50.0) {
            let law = OffspringLaw::new(OffspringKind::Hybrid, x);
            prop_assert!(law.gamma_b(2) <= hybrid_gamma2_bound() + 1e-12);
        }
    }
}
