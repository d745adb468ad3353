//! Experiment configurations: a `kind` discriminator, a parameter block
//! per kind, the mandatory seed and partition count, and tolerances.
//!
//! ```json
//! { "kind": "tcond", "seed": 7, "partitions": 4,
//!   "params": { "n": 400, "m": 40, "phi": 2.0, "z": 1.0, "k": 1 },
//!   "tolerances": { "gap": 0.1 } }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bpre::offspring::OffspringKind;
use crate::bpre::regime::{check_regime, Regime, SamplerKind};
use crate::bpre::Verdict;
use crate::error::{Error, Result};
use crate::walk::{make_family, FamilyKind};

fn lazy_lattice() -> FamilyKind {
    FamilyKind::LazyLattice { p: 0.3 }
}

fn hybrid() -> OffspringKind {
    OffspringKind::Hybrid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableCheck {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "StableCheck::default_samples")]
    pub samples: u64,
    #[serde(default = "StableCheck::default_points")]
    pub cf_points: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl StableCheck {
    fn default_samples() -> u64 {
        200_000
    }
    fn default_points() -> Vec<f64> {
        vec![0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WalkCheck {
    /// `V(0) = 1 / (1 - zeta)` and `V-hat = (1 - zeta) V`.
    Renewal { #[serde(default = "lazy_lattice")] family: FamilyKind, #[serde(default = "WalkCheck::default_top")] top: usize },
    /// Exact `q_n(0, y)` against the local limit prediction.
    Kernel { #[serde(default = "lazy_lattice")] family: FamilyKind, n: usize, #[serde(default)] y: usize },
    /// DP-backward against rejection sampling, on the law of `S_{n/2}`.
    Conditioned {
        #[serde(default = "lazy_lattice")]
        family: FamilyKind,
        n: usize,
        end: f64,
        samples: u64,
        #[serde(default = "WalkCheck::default_attempts")]
        max_attempts: u64,
    },
}

impl WalkCheck {
    fn default_top() -> usize {
        50
    }
    fn default_attempts() -> u64 {
        1_000_000_000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LimitCheck {
    /// `g+` against the Rayleigh density and `C*` against `sqrt(2/pi)`.
    Meander { #[serde(default = "lazy_lattice")] family: FamilyKind, n_steps: usize, samples: u64 },
    /// `C(a, b)` against `1 - exp(-2ab)`.
    Bridge { #[serde(default = "lazy_lattice")] family: FamilyKind, n_steps: usize, points: Vec<f64> },
    /// Ladder-product and meander-moment routes to `C*`.
    Constants { #[serde(default = "lazy_lattice")] family: FamilyKind, ns: Vec<usize> },
    /// Conditional laws of an exact kernel in the three end regimes.
    RegimeLaws {
        #[serde(default = "lazy_lattice")]
        family: FamilyKind,
        n: usize,
        m: usize,
        y_small: f64,
        t: f64,
        big_factor: f64,
        points: Vec<f64>,
    },
    /// Rejection-sampled `S_{n-m} / a_m` given `L_n >= 0, S_n <= y`
    /// for a continuous family, against `A1`.
    Continuous { family: FamilyKind, n: usize, m: usize, y: f64, accepted: u64, max_attempts: u64 },
    /// Nested against mixture quadrature for `B(z, T)`.
    Mixture { #[serde(default = "lazy_lattice")] family: FamilyKind, points: Vec<f64>, t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpreRegimeParams {
    #[serde(default = "lazy_lattice")]
    pub family: FamilyKind,
    #[serde(default = "hybrid")]
    pub offspring: OffspringKind,
    pub n: usize,
    pub m: usize,
    pub phi: f64,
    pub regime: Regime,
    #[serde(default = "BpreRegimeParams::default_sampler")]
    pub sampler: SamplerKind,
    pub replicas: u64,
    #[serde(default = "BpreRegimeParams::default_floor")]
    pub floor: u64,
}

impl BpreRegimeParams {
    fn default_sampler() -> SamplerKind {
        SamplerKind::EnvImportance
    }
    fn default_floor() -> u64 {
        1000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallDeviationParams {
    #[serde(default = "lazy_lattice")]
    pub family: FamilyKind,
    #[serde(default = "hybrid")]
    pub offspring: OffspringKind,
    pub n: usize,
    pub phi: f64,
    #[serde(default = "BpreRegimeParams::default_sampler")]
    pub sampler: SamplerKind,
    pub replicas: u64,
    #[serde(default = "BpreRegimeParams::default_floor")]
    pub floor: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcondParams {
    #[serde(default = "lazy_lattice")]
    pub family: FamilyKind,
    #[serde(default = "hybrid")]
    pub offspring: OffspringKind,
    pub n: usize,
    pub m: usize,
    pub phi: f64,
    pub z: f64,
    pub k: u64,
    #[serde(default = "TcondParams::default_replicas")]
    pub replicas: u64,
}

impl TcondParams {
    fn default_replicas() -> u64 {
        20_000
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct B2Case {
    pub family: FamilyKind,
    pub offspring: OffspringKind,
    pub b: u32,
    pub expected: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct B2Params {
    pub cases: Vec<B2Case>,
    #[serde(default = "B2Params::default_eps")]
    pub eps: f64,
    #[serde(default = "B2Params::default_base")]
    pub base: u64,
    #[serde(default = "B2Params::default_doublings")]
    pub doublings: usize,
}

impl B2Params {
    fn default_eps() -> f64 {
        0.1
    }
    fn default_base() -> u64 {
        20_000
    }
    fn default_doublings() -> usize {
        2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum Experiment {
    StableCheck(StableCheck),
    WalkCheck(WalkCheck),
    LimitLaw(LimitCheck),
    BpreRegime(BpreRegimeParams),
    SmallDeviation(SmallDeviationParams),
    Tcond(TcondParams),
    B2Check(B2Params),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    pub seed: u64,
    pub partitions: usize,
    /// Overrides of the experiment's default tolerances, by name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, seed: u64, partitions: usize) -> Self {
        Self { experiment, seed, partitions, tolerances: BTreeMap::new(), out: None }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn kind(&self) -> &'static str {
        match self.experiment {
            Experiment::StableCheck(_) => "stable-check",
            Experiment::WalkCheck(_) => "walk-check",
            Experiment::LimitLaw(_) => "limit-law",
            Experiment::BpreRegime(_) => "bpre-regime",
            Experiment::SmallDeviation(_) => "small-deviation",
            Experiment::Tcond(_) => "tcond",
            Experiment::B2Check(_) => "b2-check",
        }
    }

    /// Tolerance names this experiment understands, with defaults.
    pub fn default_tolerances(&self) -> Vec<(&'static str, f64)> {
        match &self.experiment {
            Experiment::StableCheck(_) => vec![("cf", 0.01), ("rho", 0.01)],
            Experiment::WalkCheck(WalkCheck::Renewal { .. }) => vec![("origin_sigmas", 3.0), ("hat_relative", 1e-6)],
            Experiment::WalkCheck(WalkCheck::Kernel { .. }) => vec![("local_relative", 0.15)],
            Experiment::WalkCheck(WalkCheck::Conditioned { .. }) => vec![("p_value", 0.01)],
            Experiment::LimitLaw(c) => match c {
                LimitCheck::Meander { .. } => vec![("rayleigh", 0.05), ("c_star_relative", 0.10)],
                LimitCheck::Bridge { .. } => vec![("bridge", 0.05)],
                LimitCheck::Constants { .. } => vec![("route_gap", 0.10), ("identity", 0.10)],
                LimitCheck::RegimeLaws { .. } => vec![("small", 0.05), ("proportional", 0.07), ("large", 0.05)],
                LimitCheck::Continuous { .. } => vec![("ks", 0.07), ("accepted", 5000.0)],
                LimitCheck::Mixture { .. } => vec![("identity", 1e-6)],
            },
            Experiment::BpreRegime(_) => vec![("ks", 0.15), ("accepted", 1000.0), ("frequency_factor", 2.0)],
            Experiment::SmallDeviation(_) => vec![("ks", 0.15), ("accepted", 1000.0)],
            Experiment::Tcond(_) => vec![("gap", 0.1)],
            Experiment::B2Check(_) => vec![],
        }
    }

    /// Configured value of a tolerance, falling back to the default.
    pub fn tolerance(&self, name: &str) -> Result<f64> {
        if let Some(v) = self.tolerances.get(name) {
            return Ok(*v);
        }
        self.default_tolerances()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::InvalidConfig(format!("{} has no tolerance {name}", self.kind())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.partitions == 0 {
            return bad("partitions must be at least 1".into());
        }
        let known = self.default_tolerances();
        for (name, v) in &self.tolerances {
            if !known.iter().any(|(n, _)| n == name) {
                return bad(format!("{} has no tolerance {name}", self.kind()));
            }
            if !(*v > 0.0 && v.is_finite()) {
                return bad(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        if let Some(f) = self.tolerances.get("frequency_factor") {
            if *f < 1.0 {
                return bad(format!("frequency_factor must be at least 1, got {f}"));
            }
        }
        match &self.experiment {
            Experiment::StableCheck(p) => {
                crate::stable::make_params(p.alpha, p.beta, p.scale)?;
                if p.samples == 0 || p.cf_points.is_empty() {
                    return bad("stable-check needs samples and cf_points".into());
                }
            }
            Experiment::WalkCheck(c) => match c {
                WalkCheck::Renewal { family, top } => {
                    make_family(*family)?;
                    if *top == 0 {
                        return bad("renewal grid top must be positive".into());
                    }
                }
                WalkCheck::Kernel { family, n, .. } => {
                    if !make_family(*family)?.is_lattice() {
                        return bad("the exact kernel needs a lattice family".into());
                    }
                    if *n == 0 {
                        return bad("kernel horizon must be positive".into());
                    }
                }
                WalkCheck::Conditioned { family, n, end, samples, .. } => {
                    if !make_family(*family)?.is_lattice() {
                        return bad("the DP sampler needs a lattice family".into());
                    }
                    if *n < 2 || *end < 0.0 || *samples == 0 {
                        return bad("conditioned check needs n >= 2, end >= 0 and samples".into());
                    }
                }
            },
            Experiment::LimitLaw(c) => validate_limit(c)?,
            Experiment::BpreRegime(p) => {
                let fam = make_family(p.family)?;
                let a_m = fam.scaling().a(p.m as u64);
                check_regime(p.regime, p.n, p.m, p.phi, a_m).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                if p.replicas == 0 {
                    return bad("replicas must be positive".into());
                }
            }
            Experiment::SmallDeviation(p) => {
                let fam = make_family(p.family)?;
                let a_n = fam.scaling().a(p.n as u64);
                if !(p.phi > 0.0 && p.phi <= a_n / 4.0) {
                    return bad(format!("small deviation needs 0 < phi <= a_n/4 = {}", a_n / 4.0));
                }
                if p.replicas == 0 {
                    return bad("replicas must be positive".into());
                }
            }
            Experiment::Tcond(p) => {
                let fam = make_family(p.family)?;
                let a_m = fam.scaling().a(p.m as u64);
                check_regime(Regime::Small, p.n, p.m, p.phi, a_m).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                if p.k == 0 || p.replicas == 0 {
                    return bad("tcond needs k >= 1 and replicas".into());
                }
            }
            Experiment::B2Check(p) => {
                if p.cases.is_empty() || p.base == 0 || !(p.eps > 0.0) {
                    return bad("b2-check needs cases, a base budget and eps > 0".into());
                }
                for c in &p.cases {
                    make_family(c.family)?;
                    if c.b == 0 {
                        return bad("b must be at least 1".into());
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_limit(c: &LimitCheck) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
    match c {
        LimitCheck::Meander { family, n_steps, samples } => {
            let f = make_family(*family)?;
            if f.stable_target.alpha != 2.0 {
                return bad("the meander closed form exists only for alpha = 2");
            }
            if *n_steps == 0 || *samples == 0 {
                return bad("meander needs n_steps and samples");
            }
        }
        LimitCheck::Bridge { family, n_steps, points } => {
            let f = make_family(*family)?;
            if f.stable_target.alpha != 2.0 {
                return bad("the bridge closed form exists only for alpha = 2");
            }
            if *n_steps == 0 || points.is_empty() || points.iter().any(|p| *p <= 0.0) {
                return bad("bridge needs n_steps and positive points");
            }
        }
        LimitCheck::Constants { family, ns } => {
            make_family(*family)?;
            if ns.len() < 2 || ns.contains(&0) {
                return bad("constants need at least two positive n");
            }
        }
        LimitCheck::RegimeLaws { family, n, m, y_small, t, big_factor, points } => {
            let f = make_family(*family)?;
            if !f.is_lattice() {
                return bad("regime laws need an exact kernel (lattice family)");
            }
            let a_m = f.scaling().a(*m as u64);
            if *m == 0 || *m >= *n || points.is_empty() {
                return bad("regime laws need 0 < m < n and points");
            }
            if !(*y_small >= 0.0 && *y_small <= a_m / 2.0) {
                return bad("y_small must lie in [0, a_m / 2]");
            }
            if !(*t > 0.0 && *big_factor >= 2.0) {
                return bad("regime laws need t > 0 and big_factor >= 2");
            }
        }
        LimitCheck::Continuous { family, n, m, y, accepted, .. } => {
            let f = make_family(*family)?;
            if f.is_lattice() {
                return bad("the continuous check needs a non-lattice family");
            }
            if *m == 0 || *m >= *n || *y < 0.0 || *accepted == 0 {
                return bad("continuous check needs 0 < m < n, y >= 0 and accepted > 0");
            }
        }
        LimitCheck::Mixture { family, points, t } => {
            make_family(*family)?;
            if points.is_empty() || !(*t > 0.0) {
                return bad("mixture needs points and t > 0");
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tcond() -> ExperimentConfig {
        ExperimentConfig::new(
            Experiment::Tcond(TcondParams {
                family: lazy_lattice(),
                offspring: OffspringKind::Hybrid,
                n: 400,
                m: 40,
                phi: 2.0,
                z: 1.0,
                k: 1,
                replicas: 100,
            }),
            7,
            4,
        )
    }

    #[test]
    fn json_round_trip_and_shape() {
        let c = tcond();
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["kind"], "tcond");
        assert_eq!(v["params"]["n"], 400);
        let back: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn seed_and_partitions_are_mandatory() {
        let text = r#"{"kind": "tcond", "params": {"n": 400, "m": 40, "phi": 2.0, "z": 1.0, "k": 1}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
        let text = r#"{"kind": "tcond", "seed": 1, "partitions": 2,
                       "params": {"n": 400, "m": 40, "phi": 2.0, "z": 1.0, "k": 1}}"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.tolerance("gap").unwrap(), 0.1);
    }

    #[test]
    fn tolerances_must_be_known_and_positive() {
        let mut c = tcond();
        c.tolerances.insert("gap".into(), 0.0);
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        c.tolerances.insert("gap".into(), 0.2);
        c.validate().unwrap();
        assert_eq!(c.tolerance("gap").unwrap(), 0.2);
        c.tolerances.insert("nonsense".into(), 1.0);
        assert!(c.validate().is_err());
        let mut c = tcond();
        c.partitions = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn phi_must_fit_the_regime() {
        let mut c = tcond();
        if let Experiment::Tcond(p) = &mut c.experiment {
            p.phi = 20.0;
        }
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let regime = |phi: f64, regime: Regime| {
            ExperimentConfig::new(
                Experiment::BpreRegime(BpreRegimeParams {
                    family: lazy_lattice(),
                    offspring: OffspringKind::Hybrid,
                    n: 300,
                    m: 30,
                    phi,
                    regime,
                    sampler: SamplerKind::EnvImportance,
                    replicas: 10,
                    floor: 1,
                }),
                1,
                1,
            )
        };
        assert!(regime(2.0, Regime::Small).validate().is_ok());
        assert!(regime(2.0, Regime::Large).validate().is_err());
        assert!(regime(4.2, Regime::Proportional { t: 1.0 }).validate().is_ok());
    }
}
