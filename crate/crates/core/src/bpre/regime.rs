//! Conditioned generation-size experiments on `{S_n <= phi, Z_n > 0}`.
//!
//! The importance sampler splits paths by the first time `j` at which the
//! environment walk reaches its minimum `-d`. For `j <= J` the depth is
//! drawn from its exact law tilted by `e^{-d}`, the prefix from the
//! strictly-descending passage tables and the remainder from the killed
//! kernel. The branching process is then drawn given `Z_n > 0` and the
//! replica carries `P(Z_n > 0 | E)`. Strata `j > J` are bounded using
//! `P(Z_j > 0 | E) <= e^{S_j}`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::environment::{
    simulate_prefix, simulate_surviving, single_line_survival, survival_from, Environment, EnvironmentModel,
    DEFAULT_POPULATION_CAP,
};
use super::theta::UpPool;
use crate::error::{Error, Result};
use crate::harness::stats::{empirical_cdf, StepCdf};
use crate::limits::laws::{eval_a1, eval_b_curve, LimitLawEval};
use crate::rng;
use crate::stable::{interp_linear, stable_cdf, stable_density, StableParams};
use crate::walk::kernel::{exact_kernel, ConditionKernel, EndSpec};
use crate::walk::lattice::{AscendingPassage, StepPmf};
use crate::walk::renewal::RenewalTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Regime {
    /// `phi = o(a_m)`.
    Small,
    /// `phi ~ T a_m`.
    Proportional { t: f64 },
    /// `a_m = o(phi)`.
    Large,
}

impl Regime {
    pub fn index(&self) -> u8 {
        match self {
            Regime::Small => 1,
            Regime::Proportional { .. } => 2,
            Regime::Large => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    BruteForce,
    EnvImportance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeBudget {
    /// Environments drawn (brute force) or replicas spread over strata.
    pub replicas: u64,
    /// Fewest accepted replicas tolerated.
    pub floor: u64,
    /// Strata `j = 0..=J` sampled explicitly (capped at `n`).
    pub strata: usize,
    pub min_per_stratum: u64,
    pub cap: u64,
    pub seed: u64,
    pub partitions: usize,
}

impl Default for RegimeBudget {
    fn default() -> Self {
        Self {
            replicas: 20_000,
            floor: 1000,
            strata: 1_000_000,
            min_per_stratum: 20,
            cap: DEFAULT_POPULATION_CAP,
            seed: 0,
            partitions: 4,
        }
    }
}

/// Limit law the regime statistic is compared with.
#[derive(Debug, Clone, Copy)]
pub enum ReferenceLaw<'a> {
    A1(&'a LimitLawEval),
    B { eval: &'a LimitLawEval, t: f64 },
    Stable(StableParams),
    /// `y^p` on `[0, 1]`.
    Power(f64),
}

impl ReferenceLaw<'_> {
    /// CDF at increasing points.
    pub fn cdf_at(&self, zs: &[f64]) -> Result<Vec<f64>> {
        match *self {
            ReferenceLaw::A1(e) => zs.iter().map(|&z| eval_a1(z.max(0.0), e)).collect(),
            ReferenceLaw::B { eval, t } => {
                let top = zs.iter().cloned().fold(0.0, f64::max);
                let grid = fine_grid(0.0, top.max(0.01), 0.005);
                let vals = eval_b_curve(&grid, t, eval, 3)?;
                Ok(zs.iter().map(|&z| if z <= 0.0 { 0.0 } else { interp_linear(&grid, &vals, z).unwrap_or(1.0) }).collect())
            }
            ReferenceLaw::Stable(p) => {
                let lo = zs.first().copied().unwrap_or(0.0);
                let hi = zs.last().copied().unwrap_or(0.0);
                let grid = fine_grid(lo, hi.max(lo + 0.01), 0.01);
                let vals = grid.iter().map(|&x| stable_cdf(&p, x)).collect::<Result<Vec<_>>>()?;
                Ok(zs.iter().map(|&z| interp_linear(&grid, &vals, z).unwrap_or(0.0)).collect())
            }
            ReferenceLaw::Power(p) => Ok(zs.iter().map(|&z| z.clamp(0.0, 1.0).powf(p)).collect()),
        }
    }

    pub fn provenance(&self) -> String {
        match self {
            ReferenceLaw::A1(e) => format!("A1; C* = {} ({:?}); {}", e.c_star, e.c_star_choice, e.provenance),
            ReferenceLaw::B { eval, t } => format!("B(., {t}); {}", eval.provenance),
            ReferenceLaw::Stable(p) => format!("stable alpha={} beta={} c={}", p.alpha, p.beta, p.scale),
            ReferenceLaw::Power(p) => format!("y^{p}"),
        }
    }
}

fn fine_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Inputs for the predicted frequency `Theta g(0) b_n sum_{j <= phi} V+(j)`.
#[derive(Debug, Clone, Copy)]
pub struct AsymInputs<'a> {
    pub theta: f64,
    pub theta_error: f64,
    pub v_plus: &'a RenewalTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub sampler: SamplerKind,
    pub statistic: String,
    pub family: String,
    pub n: usize,
    pub m: usize,
    pub phi: f64,
    pub a_m: f64,
    pub replicas: u64,
    pub accepted: u64,
    /// Surviving replicas left out of the statistic because they hit the cap.
    pub saturated_excluded: u64,
    pub effective_sample_size: f64,
    pub ecdf: StepCdf,
    pub reference: Vec<f64>,
    pub ks: f64,
    /// Estimate of `P(S_n <= phi, Z_n > 0)`.
    pub frequency: f64,
    pub frequency_error: f64,
    /// Upper bound on the mass of strata not sampled.
    pub residual_bound: f64,
    /// `P(S_n <= phi, L_n >= 0)` from the exact kernel, lattice only.
    pub q_mass: Option<f64>,
    pub prediction: Option<f64>,
    pub prediction_ratio: Option<f64>,
    /// `Theta * q_mass`.
    pub prediction_exact_q: Option<f64>,
    /// Weighted interquartile range of `Zhat(n-m) / Zhat(n-2m)`.
    pub zhat_iqr: Option<f64>,
    pub reference_provenance: String,
    pub seed: u64,
    pub partitions: usize,
}

impl RegimeReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "z,empirical,reference")?;
        for ((z, e), r) in self.ecdf.xs.iter().zip(&self.ecdf.values).zip(&self.reference) {
            writeln!(out, "{z},{e},{r}")?;
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// `sup |F - G|` on both sides of each jump, with `G` given at the jumps.
pub fn ks_from_values(ecdf: &StepCdf, reference: &[f64]) -> f64 {
    let mut d: f64 = 0.0;
    let mut prev = 0.0;
    for (v, g) in ecdf.values.iter().zip(reference) {
        d = d.max((v - g).abs()).max((prev - g).abs());
        prev = *v;
    }
    d
}

/// One accepted or weighted replica.
#[derive(Debug, Clone, Copy)]
struct Replica {
    weight: f64,
    /// `Z_g` with `g = n - m` (or `Z_n` when `m = 0`).
    z_g: u64,
    z_prev: Option<u64>,
    s_n: f64,
    s_g: f64,
    s_prev: f64,
    saturated: bool,
}

struct Collected {
    replicas: Vec<Replica>,
    drawn: u64,
    frequency: f64,
    frequency_error: f64,
    residual_bound: f64,
    q_mass: Option<f64>,
}

/// Branching process on `env` drawn given `Z_n > 0`, weighted by
/// `P(Z_n > 0 | E)`.
fn weighted_replica<R: Rng + ?Sized>(env: &Environment, m: usize, cap: u64, rng: &mut R) -> Replica {
    let n = env.len();
    let g = n - m;
    let prev_gen = (m > 0 && n >= 2 * m).then(|| n - 2 * m);
    let (traj, weight) = simulate_surviving(env, 1, g, n, cap, rng);
    Replica {
        weight,
        z_g: traj.sizes[g],
        z_prev: prev_gen.map(|k| traj.sizes[k]),
        s_n: env.walk[n],
        s_g: env.walk[g],
        s_prev: prev_gen.map_or(0.0, |k| env.walk[k]),
        saturated: traj.saturated_at.is_some(),
    }
}

fn brute_force(model: &EnvironmentModel, n: usize, m: usize, phi: f64, budget: &RegimeBudget) -> Collected {
    let parts = rng::run_partitioned(budget.seed, budget.partitions, budget.replicas, |_, share, rng| {
        let mut out = Vec::new();
        for _ in 0..share {
            let env = super::environment::sample_environment(model, n, rng);
            if env.walk[n] > phi {
                continue;
            }
            let traj = simulate_prefix(&env, 1, n, budget.cap, rng);
            if !traj.survived() {
                continue;
            }
            let g = n - m;
            let prev_gen = (m > 0 && n >= 2 * m).then(|| n - 2 * m);
            out.push(Replica {
                weight: 1.0,
                z_g: traj.sizes[g],
                z_prev: prev_gen.map(|k| traj.sizes[k]),
                s_n: env.walk[n],
                s_g: env.walk[g],
                s_prev: prev_gen.map_or(0.0, |k| env.walk[k]),
                saturated: traj.saturated_at.is_some_and(|s| s <= g),
            });
        }
        out
    });
    let replicas: Vec<Replica> = parts.into_iter().flatten().collect();
    let p = replicas.len() as f64 / budget.replicas as f64;
    Collected {
        drawn: budget.replicas,
        frequency: p,
        frequency_error: (p * (1.0 - p) / budget.replicas as f64).sqrt(),
        residual_bound: 0.0,
        q_mass: None,
        replicas,
    }
}

/// Passage tables for prefixes whose minimum is first reached at the last step.
struct Prefixes {
    pmf: StepPmf,
    /// `alive[j][d - 1] = P(tau_j = j, S_j = -d)`.
    alive: Vec<Vec<f64>>,
}

impl Prefixes {
    fn new(pmf: &StepPmf, n: usize) -> Self {
        let mut p = AscendingPassage::new(pmf, 0);
        let mut alive = vec![vec![]];
        for _ in 0..n {
            p.advance();
            alive.push(p.alive().to_vec());
        }
        Self { pmf: pmf.clone(), alive }
    }

    fn mass(&self, j: usize, d: usize) -> f64 {
        if d == 0 {
            return if j == 0 { 1.0 } else { 0.0 };
        }
        self.alive[j].get(d - 1).copied().unwrap_or(0.0)
    }

    fn depths(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.alive[j].len()
        }
    }

    /// Environment walk `S_0..S_j` with `tau_j = j`, `S_j = -d`, drawn
    /// backward through the reversed walk `S'_i = S_j - S_{j-i}`.
    fn sample<R: Rng + ?Sized>(&self, j: usize, d: usize, rng: &mut R) -> Vec<f64> {
        let mut rev = vec![0i64; j + 1];
        rev[j] = -(d as i64);
        let mut opts: Vec<(i64, f64)> = Vec::new();
        for i in (1..=j).rev() {
            opts.clear();
            let mut total = 0.0;
            for (s, p) in self.pmf.support() {
                let u = rev[i] - s;
                let w = if i == 1 {
                    if u == 0 { p } else { 0.0 }
                } else if u < 0 {
                    p * self.mass(i - 1, (-u) as usize)
                } else {
                    0.0
                };
                if w > 0.0 {
                    opts.push((u, w));
                    total += w;
                }
            }
            let mut t = rng.random::<f64>() * total;
            let mut pick = opts[opts.len() - 1].0;
            for &(u, w) in &opts {
                t -= w;
                if t < 0.0 {
                    pick = u;
                    break;
                }
            }
            rev[i - 1] = pick;
        }
        (0..=j).map(|k| (-(d as i64) - rev[j - k]) as f64).collect()
    }
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut t = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        t -= w;
        if t < 0.0 {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn env_importance(model: &EnvironmentModel, n: usize, m: usize, phi: f64, budget: &RegimeBudget) -> Result<Collected> {
    let pmf = model
        .family
        .step_pmf()
        .ok_or_else(|| Error::InvalidConfig("environment importance sampling needs a bounded lattice family".into()))?;
    let kernel = exact_kernel(&model.family, n, 0)?;
    let prefixes = Prefixes::new(&pmf, n);
    let q = |len: usize, y: f64| kernel.end_mass(len, EndSpec::AtMost(y));
    let j_max = budget.strata.min(n);

    // per-stratum exact masses over d, and the survival-weighted bounds
    let mut bounds = vec![0.0; n + 1];
    let mut depth_mass: Vec<Vec<f64>> = Vec::with_capacity(j_max + 1);
    for j in 0..=n {
        let mut masses = Vec::new();
        let mut bound = 0.0;
        for d in 0..=prefixes.depths(j) {
            let w = prefixes.mass(j, d) * q(n - j, phi + d as f64);
            bound += w * (-(d as f64)).exp();
            if j <= j_max {
                masses.push(w);
            }
        }
        bounds[j] = bound;
        if j <= j_max {
            depth_mass.push(masses);
        }
    }
    let residual_bound: f64 = bounds[j_max + 1..].iter().sum();
    if bounds[..=j_max].iter().all(|&b| b <= 0.0) {
        return Err(Error::ImpossibleEvent(format!("S_{n} <= {phi} with L_{n} >= 0")));
    }

    // depth drawn from the e^{-d} tilt of its stratum law; the replica
    // value e^d P(Z_n > 0 | E) then has mean bounds[j]^{-1} times the
    // stratum's contribution
    let draw = |j: usize, count: u64, seed: u64| -> Result<Vec<(f64, Replica)>> {
        let tilted: Vec<f64> = depth_mass[j].iter().enumerate().map(|(d, w)| w * (-(d as f64)).exp()).collect();
        let parts = rng::run_partitioned(seed, budget.partitions, count, |_, share, rng| {
            let mut out = Vec::with_capacity(share as usize);
            for _ in 0..share {
                let d = draw_index(&tilted, rng);
                let mut positions = if j == 0 { vec![0.0] } else { prefixes.sample(j, d, rng) };
                let post = kernel.sample_path(n - j, EndSpec::AtMost(phi + d as f64), rng)?;
                positions.extend(post.positions[1..].iter().map(|u| u - d as f64));
                let env = Environment::from_positions(model.offspring, &positions);
                out.push(((d as f64).exp(), weighted_replica(&env, m, budget.cap, rng)));
            }
            Ok::<_, Error>(out)
        });
        let mut reps = Vec::with_capacity(count as usize);
        for p in parts {
            reps.extend(p?);
        }
        Ok(reps)
    };

    let bound_total: f64 = bounds[..=j_max].iter().sum();
    let floor = budget.min_per_stratum.max(2);
    let mut replicas = Vec::new();
    let mut drawn = 0u64;
    let mut frequency = 0.0;
    let mut freq_var = 0.0;
    for j in 0..=j_max {
        if bounds[j] <= 0.0 {
            continue;
        }
        let count = ((budget.replicas as f64 * bounds[j] / bound_total).round() as u64).max(floor);
        let reps = draw(j, count, rng::child_seed(budget.seed, j as u64))?;
        let k = reps.len() as f64;
        drawn += reps.len() as u64;
        let values: Vec<f64> = reps.iter().map(|(tilt, r)| tilt * r.weight).collect();
        let mean = values.iter().sum::<f64>() / k;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        frequency += bounds[j] * mean;
        freq_var += bounds[j].powi(2) * var / k;
        for ((_, mut r), v) in reps.into_iter().zip(values) {
            r.weight = bounds[j] * v / k;
            replicas.push(r);
        }
    }
    Ok(Collected {
        replicas,
        drawn,
        frequency,
        frequency_error: freq_var.sqrt(),
        residual_bound,
        q_mass: Some(q(n, phi)),
    })
}

fn collect(model: &EnvironmentModel, n: usize, m: usize, phi: f64, budget: &RegimeBudget, sampler: SamplerKind) -> Result<Collected> {
    match sampler {
        SamplerKind::BruteForce => Ok(brute_force(model, n, m, phi, budget)),
        SamplerKind::EnvImportance => env_importance(model, n, m, phi, budget),
    }
}

/// Checks the regime window on `phi / a_m` and `m <= n / 5`.
pub fn check_regime(regime: Regime, n: usize, m: usize, phi: f64, a_m: f64) -> Result<()> {
    let fail = |detail: String| Err(Error::RegimeMismatch { case: format!("regime {}", regime.index()), detail });
    if m == 0 || 5 * m > n {
        return fail(format!("m = {m} must satisfy 1 <= m <= n/5 = {}", n / 5));
    }
    let r = phi / a_m;
    match regime {
        Regime::Small if r > 0.5 => fail(format!("phi / a_m = {r} exceeds 0.5")),
        Regime::Proportional { .. } if !(0.25..=4.0).contains(&r) => fail(format!("phi / a_m = {r} outside [0.25, 4]")),
        Regime::Large if r < 2.0 => fail(format!("phi / a_m = {r} below 2")),
        _ => Ok(()),
    }
}

fn weighted_iqr(values: &[(f64, f64)]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let xs: Vec<f64> = values.iter().map(|v| v.0).collect();
    let ws: Vec<f64> = values.iter().map(|v| v.1).collect();
    let cdf = empirical_cdf(&xs, Some(&ws)).ok()?;
    let quant = |p: f64| cdf.xs[cdf.values.partition_point(|&v| v < p).min(cdf.xs.len() - 1)];
    Some(quant(0.75) - quant(0.25))
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    collected: Collected,
    model: &EnvironmentModel,
    regime: Regime,
    sampler: SamplerKind,
    statistic: &str,
    stat: impl Fn(&Replica) -> f64,
    n: usize,
    m: usize,
    phi: f64,
    scale: f64,
    budget: &RegimeBudget,
    reference: &ReferenceLaw,
    asym: Option<&AsymInputs>,
) -> Result<RegimeReport> {
    let usable: Vec<&Replica> = collected.replicas.iter().filter(|r| r.weight > 0.0 && !r.saturated).collect();
    let saturated_excluded = collected.replicas.iter().filter(|r| r.weight > 0.0 && r.saturated).count() as u64;
    let accepted = usable.len() as u64;
    if accepted < budget.floor {
        return Err(Error::TooFewAccepted { accepted, floor: budget.floor });
    }
    let xs: Vec<f64> = usable.iter().map(|r| stat(r)).collect();
    let ws: Vec<f64> = usable.iter().map(|r| r.weight).collect();
    let wsum: f64 = ws.iter().sum();
    let effective_sample_size = wsum * wsum / ws.iter().map(|w| w * w).sum::<f64>();
    let ecdf = empirical_cdf(&xs, Some(&ws))?;
    let reference_vals = reference.cdf_at(&ecdf.xs)?;
    let ks = ks_from_values(&ecdf, &reference_vals);

    let zhat: Vec<(f64, f64)> = usable
        .iter()
        .filter_map(|r| {
            let zp = r.z_prev?;
            (zp > 0).then(|| ((r.z_g as f64 / zp as f64) * (r.s_prev - r.s_g).exp(), r.weight))
        })
        .collect();

    let b_n = model.scaling().b(n as u64);
    let (prediction, prediction_exact_q) = match asym {
        Some(a) => {
            let g0 = stable_density(&model.family.stable_target, 0.0)?;
            let sum_v: f64 = if model.family.is_lattice() {
                (0..=phi.floor() as usize).map(|j| a.v_plus.eval(j as f64)).sum()
            } else {
                crate::quad::integrate(&|w| a.v_plus.eval(w), 0.0, phi, 1e-8)?
            };
            (Some(a.theta * g0 * b_n * sum_v), collected.q_mass.map(|q| a.theta * q))
        }
        None => (None, None),
    };
    Ok(RegimeReport {
        regime,
        sampler,
        statistic: statistic.into(),
        family: model.family.label(),
        n,
        m,
        phi,
        a_m: scale,
        replicas: collected.drawn,
        accepted,
        saturated_excluded,
        effective_sample_size,
        reference: reference_vals,
        ks,
        frequency: collected.frequency,
        frequency_error: collected.frequency_error,
        residual_bound: collected.residual_bound,
        q_mass: collected.q_mass,
        prediction_ratio: prediction.map(|p| collected.frequency / p),
        prediction,
        prediction_exact_q,
        zhat_iqr: weighted_iqr(&zhat),
        ecdf,
        reference_provenance: reference.provenance(),
        seed: budget.seed,
        partitions: budget.partitions,
    })
}

/// Law of `log Z_{n-m} / a_m` (regimes 1, 2) or `(log Z_{n-m} - S_n) / a_m`
/// (regime 3) given `S_n <= phi, Z_n > 0`.
#[allow(clippy::too_many_arguments)]
pub fn run_regime_experiment(
    model: &EnvironmentModel,
    n: usize,
    m: usize,
    phi: f64,
    regime: Regime,
    budget: &RegimeBudget,
    sampler: SamplerKind,
    reference: &ReferenceLaw,
    asym: Option<&AsymInputs>,
) -> Result<RegimeReport> {
    let a_m = model.scaling().a(m as u64);
    check_regime(regime, n, m, phi, a_m)?;
    let collected = collect(model, n, m, phi, budget, sampler)?;
    let (name, stat): (&str, Box<dyn Fn(&Replica) -> f64>) = match regime {
        Regime::Large => ("(log Z_{n-m} - S_n) / a_m", Box::new(move |r: &Replica| ((r.z_g as f64).ln() - r.s_n) / a_m)),
        _ => ("log Z_{n-m} / a_m", Box::new(move |r: &Replica| (r.z_g as f64).ln() / a_m)),
    };
    build_report(collected, model, regime, sampler, name, stat, n, m, phi, a_m, budget, reference, asym)
}

/// Law of `log Z_n / phi` given `S_n <= phi, Z_n > 0`, against
/// `y^{alpha rho + 1}`.
pub fn small_deviation_experiment(
    model: &EnvironmentModel,
    n: usize,
    phi: f64,
    budget: &RegimeBudget,
    sampler: SamplerKind,
) -> Result<RegimeReport> {
    let a_n = model.scaling().a(n as u64);
    if phi > a_n / 4.0 || phi <= 0.0 {
        return Err(Error::RegimeMismatch { case: "small deviation".into(), detail: format!("phi = {phi} not in (0, a_n / 4 = {}]", a_n / 4.0) });
    }
    let p = &model.family.stable_target;
    let reference = ReferenceLaw::Power(p.alpha * p.rho + 1.0);
    let collected = collect(model, n, 0, phi, budget, sampler)?;
    let stat = move |r: &Replica| (r.z_g as f64).ln() / phi;
    build_report(collected, model, Regime::Small, sampler, "log Z_n / phi", stat, n, 0, phi, phi, budget, &reference, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcondResult {
    pub n: usize,
    pub m: usize,
    pub phi: f64,
    pub z: f64,
    pub k: u64,
    pub lhs: f64,
    pub lhs_error: f64,
    /// `P(S_{n-m} <= z a_m | S_n <= phi, L_n >= 0)` from the same paths.
    pub event_prob: f64,
    pub a1: f64,
    pub e_up: f64,
    pub e_up_error: f64,
    pub rhs: f64,
    pub rhs_error: f64,
    pub replicas: u64,
    pub min_h: f64,
    pub max_h: f64,
}

/// `I_n(z, m, phi)` with `H_n = P(Z_n > 0 | E, Z_0 = k)` against
/// `A1(z) E^up[H_infinity]`.
#[allow(clippy::too_many_arguments)]
pub fn verify_tcond(
    model: &EnvironmentModel,
    n: usize,
    m: usize,
    phi: f64,
    z: f64,
    k: u64,
    budget: &RegimeBudget,
    eval: &LimitLawEval,
    pool: &UpPool,
) -> Result<TcondResult> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let a_m = model.scaling().a(m as u64);
    check_regime(Regime::Small, n, m, phi, a_m)?;
    let kernel: ConditionKernel = exact_kernel(&model.family, n, 0)?;
    let parts = rng::run_partitioned(budget.seed, budget.partitions, budget.replicas, |_, share, rng| {
        let mut out = Vec::with_capacity(share as usize);
        for _ in 0..share {
            let path = kernel.sample_path(n, EndSpec::AtMost(phi), rng)?;
            let env = Environment::from_positions(model.offspring, &path.positions);
            let h = survival_from(single_line_survival(&env, 0, n), k);
            out.push((h, path.positions[n - m] <= z * a_m));
        }
        Ok::<_, Error>(out)
    });
    let mut samples = Vec::new();
    for p in parts {
        samples.extend(p?);
    }
    let r = samples.len() as u64;
    if r < budget.floor {
        return Err(Error::TooFewAccepted { accepted: r, floor: budget.floor });
    }
    let nf = r as f64;
    let vals: Vec<f64> = samples.iter().map(|&(h, e)| if e { h } else { 0.0 }).collect();
    let lhs = vals.iter().sum::<f64>() / nf;
    let lhs_var = vals.iter().map(|v| (v - lhs).powi(2)).sum::<f64>() / (nf - 1.0);
    let event_prob = samples.iter().filter(|s| s.1).count() as f64 / nf;
    let a1 = eval_a1(z, eval)?;
    let (e_up, e_up_error) = pool.expected_survival(k, false);
    let (min_h, max_h) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.0), b.max(s.0)));
    Ok(TcondResult {
        n,
        m,
        phi,
        z,
        k,
        lhs,
        lhs_error: (lhs_var / nf).sqrt(),
        event_prob,
        a1,
        e_up,
        e_up_error,
        rhs: a1 * e_up,
        rhs_error: a1 * e_up_error,
        replicas: r,
        min_h,
        max_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpre::environment::survival_prob_given_env;
    use crate::bpre::offspring::OffspringKind;
    use crate::walk::{make_family, FamilyKind};

    fn lattice_model() -> EnvironmentModel {
        EnvironmentModel::new(make_family(FamilyKind::LazyLattice { p: 0.3 }).unwrap(), OffspringKind::Hybrid)
    }

    /// `P(S_n <= phi, Z_n > 0)` by enumerating every environment path.
    fn exact_frequency(n: usize, phi: f64) -> f64 {
        let probs = [0.3, 0.4, 0.3];
        let mut total = 0.0;
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let mut p = 1.0;
            let mut inc = Vec::with_capacity(n);
            for _ in 0..n {
                p *= probs[c % 3];
                inc.push((c % 3) as f64 - 1.0);
                c /= 3;
            }
            if inc.iter().sum::<f64>() > phi {
                continue;
            }
            let env = Environment::from_increments(OffspringKind::Hybrid, inc);
            total += p * survival_prob_given_env(&env, 1, n).unwrap();
        }
        total
    }

    #[test]
    fn importance_frequency_matches_enumeration() {
        let (n, phi) = (10, 1.0);
        let exact = exact_frequency(n, phi);
        let budget = RegimeBudget { replicas: 40_000, seed: 3, partitions: 2, ..Default::default() };
        let c = env_importance(&lattice_model(), n, 2, phi, &budget).unwrap();
        assert!((c.frequency - exact).abs() < 4.0 * c.frequency_error + 1e-12, "{} vs {exact} (se {})", c.frequency, c.frequency_error);
    }

    #[test]
    fn brute_force_frequency_matches_enumeration() {
        let (n, phi) = (10, 1.0);
        let exact = exact_frequency(n, phi);
        let budget = RegimeBudget { replicas: 200_000, seed: 4, partitions: 2, ..Default::default() };
        let c = brute_force(&lattice_model(), n, 2, phi, &budget);
        assert!((c.frequency - exact).abs() < 4.0 * c.frequency_error, "{} vs {exact} (se {})", c.frequency, c.frequency_error);
    }

    #[test]
    fn samplers_agree_on_the_conditional_law() {
        let model = lattice_model();
        let (n, m, phi) = (40, 4, 1.0);
        let imp = env_importance(&model, n, m, phi, &RegimeBudget { replicas: 20_000, seed: 5, partitions: 2, ..Default::default() }).unwrap();
        let bf = brute_force(&model, n, m, phi, &RegimeBudget { replicas: 300_000, seed: 6, partitions: 2, ..Default::default() });
        let cdf = |c: &Collected| {
            let xs: Vec<f64> = c.replicas.iter().map(|r| (r.z_g as f64).ln()).collect();
            let ws: Vec<f64> = c.replicas.iter().map(|r| r.weight).collect();
            empirical_cdf(&xs, Some(&ws)).unwrap()
        };
        let d = crate::harness::stats::ks_between(&cdf(&imp), &cdf(&bf));
        assert!(bf.replicas.len() > 3000);
        assert!(d < 0.04, "KS between samplers {d}");
        let se = imp.frequency_error.hypot(bf.frequency_error);
        assert!((imp.frequency - bf.frequency).abs() < 4.0 * se);
    }

    #[test]
    fn power_reference_is_a_convex_cdf() {
        let r = ReferenceLaw::Power(2.0);
        let zs: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let v = r.cdf_at(&zs).unwrap();
        assert_eq!(v[20], 1.0);
        assert_eq!(v[0], 0.0);
        assert!(v.windows(3).all(|w| w[2] - w[1] >= w[1] - w[0] - 1e-15));
    }

    #[test]
    fn regime_windows_are_enforced() {
        assert!(check_regime(Regime::Small, 300, 30, 2.0, 4.24).is_ok());
        assert!(check_regime(Regime::Small, 300, 30, 3.0, 4.24).is_err());
        assert!(check_regime(Regime::Small, 300, 70, 1.0, 6.5).is_err());
        assert!(check_regime(Regime::Proportional { t: 1.0 }, 300, 30, 0.5, 4.24).is_err());
        assert!(check_regime(Regime::Large, 300, 30, 5.0, 4.24).is_err());
        let model = lattice_model();
        assert!(small_deviation_experiment(&model, 300, 4.0, &RegimeBudget::default(), SamplerKind::EnvImportance).is_err());
    }

    #[test]
    fn report_is_proper_and_round_trips() {
        let model = lattice_model();
        let budget = RegimeBudget { replicas: 4000, floor: 500, seed: 1, partitions: 2, ..Default::default() };
        let r = small_deviation_experiment(&model, 60, 1.5, &budget, SamplerKind::EnvImportance).unwrap();
        assert!(r.ecdf.values.windows(2).all(|w| w[1] >= w[0]));
        assert!((r.ecdf.values.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(r.ks >= 0.0 && r.ks <= 1.0);
        assert!(r.effective_sample_size <= r.accepted as f64 + 1e-9);
        let back: RegimeReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back.accepted, r.accepted);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("z,empirical,reference\n"));
    }

    #[test]
    fn too_few_accepted_is_reported() {
        let model = lattice_model();
        let budget = RegimeBudget { replicas: 50, floor: 1000, seed: 1, partitions: 1, ..Default::default() };
        assert!(matches!(
            small_deviation_experiment(&model, 60, 1.5, &budget, SamplerKind::BruteForce),
            Err(Error::TooFewAccepted { .. })
        ));
    }
}
