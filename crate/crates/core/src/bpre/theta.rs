//! The survival constant `Theta` and the pool of environments drawn under
//! the walk conditioned to stay nonnegative.

use serde::{Deserialize, Serialize};

use super::environment::{simulate_prefix, single_line_survival, survival_from, Environment, EnvironmentModel};
use crate::error::{Error, Result};
use crate::rng;
use crate::walk::lattice::AscendingPassage;
use crate::walk::renewal::RenewalTable;
use crate::walk::{sample_h_transform, HMode};

/// Environments under `P^up` with single-particle survival to `horizon`
/// and to `2 horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpPool {
    pub horizon: usize,
    pub survival: Vec<f64>,
    pub survival_doubled: Vec<f64>,
    /// Self-normalised `h`-transform weights (all one for the Doob chain).
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub size: u64,
    pub horizon: usize,
    /// Rejection attempts per pool walk for non-lattice families.
    pub max_attempts: u64,
    pub seed: u64,
    pub partitions: usize,
}

impl UpPool {
    /// Pool walk `i` uses its own substream, so pools at different horizons
    /// share path prefixes.
    pub fn build(model: &EnvironmentModel, v_minus: &RenewalTable, config: &PoolConfig) -> Result<Self> {
        if config.size == 0 || config.horizon == 0 {
            return Err(Error::BudgetTooSmall("empty P-up pool".into()));
        }
        let mode = if model.family.is_lattice() {
            HMode::DoobChain
        } else {
            HMode::RejectionWeighted { max_attempts: config.max_attempts }
        };
        let len = 2 * config.horizon;
        let seed = config.seed;
        let parts = rng::run_partitioned(seed, config.partitions, config.size, |part, share, _| {
            let offset = rng::split_budget(config.size, config.partitions)[..part].iter().sum::<u64>();
            (0..share)
                .map(|i| {
                    let mut r = rng::substream(seed, offset + i);
                    let (path, w) = sample_h_transform(&model.family, len, 0.0, v_minus, mode, &mut r)?;
                    let env = Environment::from_positions(model.offspring, &path.positions);
                    Ok((
                        single_line_survival(&env, 0, config.horizon),
                        single_line_survival(&env, 0, len),
                        w,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        });
        let mut pool = UpPool { horizon: config.horizon, survival: vec![], survival_doubled: vec![], weights: vec![] };
        for part in parts {
            for (a, b, w) in part? {
                pool.survival.push(a);
                pool.survival_doubled.push(b);
                pool.weights.push(w);
            }
        }
        Ok(pool)
    }

    /// `E^up[P(survival to the horizon | E, Z_0 = k)]` with its standard error.
    pub fn expected_survival(&self, k: u64, doubled: bool) -> (f64, f64) {
        let ts = if doubled { &self.survival_doubled } else { &self.survival };
        weighted_mean(ts.iter().map(|&t| survival_from(t, k)), &self.weights)
    }
}

fn weighted_mean(values: impl Iterator<Item = f64>, weights: &[f64]) -> (f64, f64) {
    let vals: Vec<f64> = values.collect();
    let wsum: f64 = weights.iter().sum();
    let mean = vals.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
    let n = vals.len() as f64;
    let var = vals.iter().zip(weights).map(|(v, w)| (w * n / wsum * (v - mean)).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Which prefixes count as "the minimum is first reached at `j`".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinConvention {
    /// `S_j < S_i` for all `i < j` (first attainment).
    Strict,
    /// `S_j <= S_i` for all `i < j`.
    Weak,
}

impl MinConvention {
    pub fn holds(self, walk: &[f64]) -> bool {
        let j = walk.len() - 1;
        let s = walk[j];
        walk[..j].iter().all(|&v| match self {
            MinConvention::Strict => s < v,
            MinConvention::Weak => s <= v,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaConfig {
    /// Outer truncation `J`.
    pub j_max: usize,
    /// Population truncation `K`.
    pub k_max: u64,
    /// Prefixes sampled per `j >= 1`.
    pub per_stratum: u64,
    pub convention: MinConvention,
    pub max_attempts: u64,
    pub seed: u64,
    pub partitions: usize,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        Self {
            j_max: 40,
            k_max: 1000,
            per_stratum: 4000,
            convention: MinConvention::Strict,
            max_attempts: 100_000_000,
            seed: 0,
            partitions: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaTerm {
    pub j: usize,
    /// `P(tau_j = j)`.
    pub prob: f64,
    pub prob_error: f64,
    pub value: f64,
    pub std_error: f64,
    pub value_doubled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Estimate with survival to twice the pool horizon.
    pub value_doubled: f64,
    pub horizon: usize,
    pub terms: Vec<ThetaTerm>,
    pub config: ThetaConfig,
}

impl ThetaEstimate {
    /// Partial sum over `j <= j_max`.
    pub fn partial(&self, j_max: usize) -> f64 {
        self.terms.iter().filter(|t| t.j <= j_max).map(|t| t.value).sum()
    }

    /// Change when the survival horizon is doubled.
    pub fn horizon_delta(&self) -> f64 {
        self.value - self.value_doubled
    }
}

/// `sum_{j <= J} sum_{k <= K} P(Z_j = k, tau_j = j) P^up(survival | Z_0 = k)`,
/// with `P^up(survival)` taken from `pool`.
pub fn estimate_theta(model: &EnvironmentModel, pool: &UpPool, config: &ThetaConfig) -> Result<ThetaEstimate> {
    if config.k_max == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    let exact_probs = model.family.step_pmf().map(|pmf| {
        let start = match config.convention {
            MinConvention::Strict => 0,
            MinConvention::Weak => -1,
        };
        AscendingPassage::run(&pmf, start, config.j_max).alive_by_step
    });
    let (h1, h1d) = (pool.expected_survival(1, false).0, pool.expected_survival(1, true).0);
    let mut terms = vec![ThetaTerm { j: 0, prob: 1.0, prob_error: 0.0, value: h1, std_error: pool.expected_survival(1, false).1, value_doubled: h1d }];
    for j in 1..=config.j_max {
        let seed = rng::child_seed(config.seed, j as u64);
        let per_attempt_cap = config.max_attempts / config.per_stratum.max(1);
        let parts = rng::run_partitioned(seed, config.partitions, config.per_stratum, |_, share, rng| {
            let mut out = Vec::with_capacity(share as usize);
            let mut attempts = 0u64;
            let mut positions = vec![0.0; j + 1];
            for _ in 0..share {
                let mut tries = 0u64;
                loop {
                    for k in 1..=j {
                        positions[k] = positions[k - 1] + model.family.sample_step(rng);
                    }
                    tries += 1;
                    if config.convention.holds(&positions) {
                        break;
                    }
                    if tries > per_attempt_cap {
                        return Err(Error::BudgetTooSmall(format!("no prefix with tau_{j} = {j} after {tries} attempts")));
                    }
                }
                attempts += tries;
                let env = Environment::from_positions(model.offspring, &positions);
                let z = *simulate_prefix(&env, 1, j, u64::MAX / 4, rng).sizes.last().unwrap();
                out.push(z);
            }
            Ok((out, attempts))
        });
        let mut sizes = Vec::new();
        let mut attempts = 0u64;
        for p in parts {
            let (s, a) = p?;
            sizes.extend(s);
            attempts += a;
        }
        let (prob, prob_error) = match &exact_probs {
            Some(p) => (p[j], 0.0),
            None => {
                let p = sizes.len() as f64 / attempts as f64;
                (p, (p * (1.0 - p) / attempts as f64).sqrt())
            }
        };
        let eval = |doubled: bool| {
            let vals: Vec<f64> = sizes
                .iter()
                .map(|&z| if z >= 1 && z <= config.k_max { pool.expected_survival(z, doubled).0 } else { 0.0 })
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            (mean, (var / n).sqrt())
        };
        let (mean, se) = eval(false);
        let (mean_d, _) = eval(true);
        terms.push(ThetaTerm {
            j,
            prob,
            prob_error,
            value: prob * mean,
            std_error: (prob * se).hypot(prob_error * mean),
            value_doubled: prob * mean_d,
        });
    }
    let value = terms.iter().map(|t| t.value).sum();
    let std_error = terms.iter().map(|t| t.std_error.powi(2)).sum::<f64>().sqrt();
    let value_doubled = terms.iter().map(|t| t.value_doubled).sum();
    Ok(ThetaEstimate { value, std_error, value_doubled, horizon: pool.horizon, terms, config: *config })
}
