use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng;
use crate::stable::{make_params, StableParams};

/// Which step law, with its own parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FamilyKind {
    /// Steps `-1, 0, +1` with probabilities `p, 1-2p, p`.
    LazyLattice { p: f64 },
    /// `|X|` Pareto with tail `t^{-alpha}` on `[1, inf)`, positive with
    /// probability `balance`; mean removed when `alpha > 1`.
    TwoSidedPareto { alpha: f64, balance: f64 },
    Gaussian { sigma: f64 },
}

/// Span-one lattice with zero shift; the only lattice supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub span: f64,
    pub shift: f64,
}

/// A step law in the domain of attraction of `stable_target`,
/// normalised by `a_n = a_coeff * n^{1/alpha}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementFamily {
    pub kind: FamilyKind,
    pub stable_target: StableParams,
    pub lattice: Option<Lattice>,
    pub a_coeff: f64,
    /// Mean subtracted from the raw Pareto draw (zero elsewhere).
    pub centering: f64,
}

/// Norming sequences `a_n` and `b_n = 1 / (n a_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingLaw {
    pub alpha: f64,
    pub a_coeff: f64,
}

impl ScalingLaw {
    pub fn a(&self, n: u64) -> f64 {
        self.a_coeff * (n as f64).powf(1.0 / self.alpha)
    }

    pub fn b(&self, n: u64) -> f64 {
        1.0 / (n as f64 * self.a(n))
    }
}

/// Total-tail-mass-one Pareto sums divided by `n^{1/alpha}` converge to the
/// stable law with this `c`.
pub fn pareto_natural_scale(alpha: f64) -> f64 {
    if alpha == 1.0 {
        FRAC_PI_2
    } else {
        gamma(1.0 - alpha) * (FRAC_PI_2 * alpha).cos()
    }
}

pub fn make_family(kind: FamilyKind) -> Result<IncrementFamily> {
    let bad = |m: String| Err(Error::BadFamilyParams(m));
    match kind {
        FamilyKind::LazyLattice { p } => {
            if !(p > 0.0 && p < 0.5) {
                return bad(format!("lazy lattice needs 0 < p < 1/2, got {p}"));
            }
            Ok(IncrementFamily {
                kind,
                stable_target: make_params(2.0, 0.0, 0.5)?,
                lattice: Some(Lattice { span: 1.0, shift: 0.0 }),
                a_coeff: (2.0 * p).sqrt(),
                centering: 0.0,
            })
        }
        FamilyKind::Gaussian { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return bad(format!("gaussian needs sigma > 0, got {sigma}"));
            }
            Ok(IncrementFamily {
                kind,
                stable_target: make_params(2.0, 0.0, 0.5)?,
                lattice: None,
                a_coeff: sigma,
                centering: 0.0,
            })
        }
        FamilyKind::TwoSidedPareto { alpha, balance } => {
            if !(alpha > 0.0 && alpha < 2.0) {
                return bad(format!("pareto index must lie in (0,2), got {alpha}"));
            }
            if !(balance > 0.0 && balance < 1.0) {
                return bad(format!("balance must lie in (0,1), got {balance}"));
            }
            let beta = 2.0 * balance - 1.0;
            if alpha == 1.0 && beta != 0.0 {
                return bad("alpha = 1 requires balance = 1/2".into());
            }
            let centering = if alpha > 1.0 { beta * alpha / (alpha - 1.0) } else { 0.0 };
            Ok(IncrementFamily {
                kind,
                stable_target: make_params(alpha, beta, 1.0)?,
                lattice: None,
                a_coeff: pareto_natural_scale(alpha).powf(1.0 / alpha),
                centering,
            })
        }
    }
}

impl IncrementFamily {
    pub fn scaling(&self) -> ScalingLaw {
        ScalingLaw { alpha: self.stable_target.alpha, a_coeff: self.a_coeff }
    }

    pub fn is_lattice(&self) -> bool {
        self.lattice.is_some()
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            FamilyKind::LazyLattice { p } => {
                let u: f64 = rng.random();
                if u < p {
                    -1.0
                } else if u < 2.0 * p {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyKind::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            FamilyKind::TwoSidedPareto { alpha, balance } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let mag = u.powf(-1.0 / alpha);
                let sign = if rng.random::<f64>() < balance { 1.0 } else { -1.0 };
                sign * mag - self.centering
            }
        }
    }

    /// The family of `-X`.
    pub fn reflected(&self) -> IncrementFamily {
        match self.kind {
            FamilyKind::TwoSidedPareto { alpha, balance } => {
                make_family(FamilyKind::TwoSidedPareto { alpha, balance: 1.0 - balance })
                    .expect("reflection keeps parameters admissible")
            }
            _ => *self,
        }
    }

    /// Index of the left tail, `None` when all moments exist.
    pub fn left_tail_index(&self) -> Option<f64> {
        match self.kind {
            FamilyKind::TwoSidedPareto { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Support and probabilities for bounded lattice steps.
    pub fn step_pmf(&self) -> Option<super::lattice::StepPmf> {
        match self.kind {
            FamilyKind::LazyLattice { p } => {
                Some(super::lattice::StepPmf { min: -1, probs: vec![p, 1.0 - 2.0 * p, p] })
            }
            _ => None,
        }
    }

    /// Short human-readable identifier used in provenance records.
    pub fn label(&self) -> String {
        match self.kind {
            FamilyKind::LazyLattice { p } => format!("lazy_lattice(p={p})"),
            FamilyKind::Gaussian { sigma } => format!("gaussian(sigma={sigma})"),
            FamilyKind::TwoSidedPareto { alpha, balance } => {
                format!("two_sided_pareto(alpha={alpha},balance={balance})")
            }
        }
    }
}

pub fn scaling_constants(family: &IncrementFamily, n: u64) -> (f64, f64) {
    let s = family.scaling();
    (s.a(n), s.b(n))
}

/// Fit `a_coeff` so the empirical characteristic function of
/// `S_n / (a_coeff n^{1/alpha})` has modulus `exp(-c |w|^alpha)` at the
/// target scale `c`. Averages the fit over `w` in {0.25, 0.5, 0.75}.
pub fn calibrate_a_coeff(family: &IncrementFamily, n: u64, walks: u64, seed: u64, partitions: usize) -> f64 {
    let alpha = family.stable_target.alpha;
    let norm = (n as f64).powf(1.0 / alpha);
    let freqs = [0.25, 0.5, 0.75];
    let parts = rng::run_partitioned(seed, partitions, walks, |_, share, r| {
        let mut acc = [(0.0f64, 0.0f64); 3];
        for _ in 0..share {
            let mut s = 0.0;
            for _ in 0..n {
                s += family.sample_step(r);
            }
            let x = s / norm;
            for (a, w) in acc.iter_mut().zip(freqs) {
                a.0 += (w * x).cos();
                a.1 += (w * x).sin();
            }
        }
        acc
    });
    let mut fits = Vec::new();
    for (j, w) in freqs.iter().enumerate() {
        let re: f64 = parts.iter().map(|p| p[j].0).sum::<f64>() / walks as f64;
        let im: f64 = parts.iter().map(|p| p[j].1).sum::<f64>() / walks as f64;
        let modulus = re.hypot(im);
        // -ln|phi(w)| = c_nat w^alpha  and  a_coeff = (c_nat / c)^{1/alpha}
        let c_nat = -modulus.ln() / w.powf(alpha);
        fits.push((c_nat / family.stable_target.scale).powf(1.0 / alpha));
    }
    fits.iter().sum::<f64>() / fits.len() as f64
}
