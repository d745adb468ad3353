//! Shared inputs of the experiments (meander, bridge and density tables,
//! renewal functions, the `P^up` pool and `Theta`), optionally cached as
//! JSON and always recorded by content hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::bpre::{estimate_theta, EnvironmentModel, PoolConfig, ThetaConfig, ThetaEstimate, UpPool};
use crate::error::Result;
use crate::limits::{
    estimate_bridge_positivity, estimate_meander_density, BridgeConfig, BridgeMethod, BridgePositivityTable,
    CStarChoice, LimitLawEval, MeanderConfig, MeanderTable, Sign,
};
use crate::rng::child_seed;
use crate::stable::{DensityTable, StableParams};
use crate::walk::cache::sha256_hex;
use crate::walk::{estimate_renewal, IncrementFamily, RenewalBudget, RenewalKind, RenewalMethod, RenewalTable};

pub const MEANDER_STEPS: usize = 10_000;
pub const MEANDER_SAMPLES: u64 = 20_000;
pub const EVAL_BRIDGE_STEPS: usize = 2000;
pub const POOL_SIZE: u64 = 2000;
pub const POOL_HORIZON: usize = 3000;

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

pub struct Lab {
    pub seed: u64,
    pub partitions: usize,
    cache: Option<PathBuf>,
    /// Table name to SHA-256 of its JSON form.
    pub provenance: BTreeMap<String, String>,
}

impl Lab {
    pub fn new(seed: u64, partitions: usize, cache: Option<&Path>) -> Self {
        Self { seed, partitions, cache: cache.map(Path::to_path_buf), provenance: BTreeMap::new() }
    }

    fn seed_for(&self, label: &str) -> u64 {
        let h = sha256_hex(label.as_bytes());
        child_seed(self.seed, u64::from_str_radix(&h[..16], 16).unwrap_or(0))
    }

    /// Loads `name` from the cache when an entry built from the same inputs
    /// exists, builds and stores it otherwise.
    pub fn cached<T, K, F>(&mut self, name: &str, key: &K, build: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        K: Serialize,
        F: FnOnce() -> Result<T>,
    {
        let key_hash = sha256_hex(&serde_json::to_vec(&(name, key, self.seed, self.partitions))?);
        let path = self.cache.as_ref().map(|d| d.join(format!("{name}-{}.json", &key_hash[..16])));
        if let Some(p) = &path {
            if let Ok(bytes) = std::fs::read(p) {
                if let Ok(value) = serde_json::from_slice::<T>(&bytes) {
                    self.provenance.insert(name.into(), sha256_hex(&bytes));
                    return Ok(value);
                }
            }
        }
        let value = build()?;
        let bytes = serde_json::to_vec(&value)?;
        if let Some(p) = &path {
            std::fs::create_dir_all(p.parent().unwrap())?;
            let tmp = p.with_extension("partial");
            std::fs::write(&tmp, &bytes)?;
            std::fs::rename(&tmp, p)?;
        }
        self.provenance.insert(name.into(), sha256_hex(&bytes));
        Ok(value)
    }

    pub fn meander(&mut self, family: &IncrementFamily, sign: Sign, n_steps: usize, samples: u64) -> Result<MeanderTable> {
        let cfg = MeanderConfig {
            n_steps,
            samples,
            seed: self.seed_for(&format!("meander {sign:?}")),
            partitions: self.partitions,
            ..Default::default()
        };
        let g = grid(0.0, 8.0, 0.01);
        let fam = *family;
        let name = format!("meander_{}", if sign == Sign::Plus { "plus" } else { "minus" });
        self.cached(&name, &(fam, cfg), || estimate_meander_density(&fam, sign, &g, &cfg))
    }

    /// Exact kernel ratios for lattice families; a coarse Monte Carlo table
    /// otherwise (enough for `A1`, which does not read `C`).
    pub fn eval_bridge(&mut self, family: &IncrementFamily) -> Result<BridgePositivityTable> {
        let (g, cfg) = if family.is_lattice() {
            (grid(0.0, 5.0, 0.25), BridgeConfig { n_steps: EVAL_BRIDGE_STEPS, method: BridgeMethod::Exact, ..Default::default() })
        } else {
            (
                vec![0.0, 1.0, 2.0],
                BridgeConfig {
                    n_steps: 200,
                    walks_per_start: 5000,
                    bin_width: 0.2,
                    method: BridgeMethod::MonteCarlo,
                    ..Default::default()
                },
            )
        };
        let cfg = BridgeConfig { seed: self.seed_for("bridge"), partitions: self.partitions, ..cfg };
        let fam = *family;
        self.cached("bridge", &(fam, cfg, &g), || estimate_bridge_positivity(&fam, &g, &g, &cfg))
    }

    pub fn density(&mut self, params: &StableParams) -> Result<DensityTable> {
        let p = *params;
        self.cached("density", &p, || DensityTable::symmetric(&p, 12.0, 0.02, 1e-10))
    }

    /// `A1`, `A2`, `B` evaluator built from the family's own tables.
    pub fn law_eval(&mut self, family: &IncrementFamily) -> Result<LimitLawEval> {
        let meander = self.meander(family, Sign::Minus, MEANDER_STEPS, MEANDER_SAMPLES)?;
        let bridge = self.eval_bridge(family)?;
        let density = self.density(&family.stable_target)?;
        LimitLawEval::new(meander, bridge, density, CStarChoice::TableMoment, 1e-8)
    }

    pub fn renewal(&mut self, family: &IncrementFamily, kind: RenewalKind, top: usize) -> Result<RenewalTable> {
        let budget = RenewalBudget { seed: self.seed_for(&format!("{kind:?}")), partitions: self.partitions, ..Default::default() };
        let method = if family.is_lattice() { RenewalMethod::Exact } else { RenewalMethod::Auto };
        let g: Vec<f64> = (0..=top).map(|k| k as f64).collect();
        let fam = *family;
        self.cached(&format!("renewal_{kind:?}").to_lowercase(), &(fam, budget, top), || {
            estimate_renewal(&fam, kind, &g, &budget, method)
        })
    }

    pub fn pool(&mut self, model: &EnvironmentModel) -> Result<UpPool> {
        let vm = self.renewal(&model.family, RenewalKind::VMinus, 1000)?;
        let cfg = PoolConfig {
            size: POOL_SIZE,
            horizon: POOL_HORIZON,
            max_attempts: 0,
            seed: self.seed_for("pool"),
            partitions: self.partitions,
        };
        let m = *model;
        self.cached("pool", &(m, cfg), || UpPool::build(&m, &vm, &cfg))
    }

    pub fn theta(&mut self, model: &EnvironmentModel, pool: &UpPool) -> Result<ThetaEstimate> {
        let cfg = ThetaConfig { seed: self.seed_for("theta"), partitions: self.partitions, ..Default::default() };
        let m = *model;
        self.cached("theta", &(m, cfg, &self.provenance.get("pool").cloned()), || estimate_theta(&m, pool, &cfg))
    }

    /// Seed for a named sampling step of the experiment itself.
    pub fn run_seed(&self, label: &str) -> u64 {
        self.seed_for(label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{make_family, FamilyKind};

    #[test]
    fn cache_round_trips_and_hashes_content() {
        let dir = tempfile::tempdir().unwrap();
        let fam = make_family(FamilyKind::LazyLattice { p: 0.3 }).unwrap();
        let mut a = Lab::new(3, 2, Some(dir.path()));
        let built = a.renewal(&fam, RenewalKind::VPlus, 10).unwrap();
        let mut b = Lab::new(3, 2, Some(dir.path()));
        let mut calls = 0;
        let loaded: RenewalTable = b
            .cached("renewal_vplus", &(fam, RenewalBudget { seed: b.seed_for("VPlus"), partitions: 2, ..Default::default() }, 10usize), || {
                calls += 1;
                Err(crate::Error::EmptySample)
            })
            .unwrap();
        assert_eq!(calls, 0);
        assert_eq!(loaded, built);
        assert_eq!(a.provenance, b.provenance);
        // a different seed is a different entry
        let mut c = Lab::new(4, 2, Some(dir.path()));
        c.renewal(&fam, RenewalKind::VPlus, 10).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
