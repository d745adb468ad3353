//! Time-one meander densities from long walks conditioned on `L_n >= 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng;
use crate::stable::{interp_linear, StableParams};
use crate::walk::{IncrementFamily, RejectionSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    /// Meander of the walk itself.
    Plus,
    /// Meander of the negated walk.
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanderConfig {
    pub n_steps: usize,
    /// Accepted walks wanted.
    pub samples: u64,
    /// Total rejection attempts allowed over all partitions.
    pub max_attempts: u64,
    /// Kernel bandwidth; Silverman's rule when absent.
    pub bandwidth: Option<f64>,
    /// Multiplies the family's `a_n` (norming convention).
    pub norm_factor: f64,
    pub seed: u64,
    pub partitions: usize,
}

impl Default for MeanderConfig {
    fn default() -> Self {
        Self {
            n_steps: 10_000,
            samples: 20_000,
            max_attempts: 200_000_000,
            bandwidth: None,
            norm_factor: 1.0,
            seed: 0,
            partitions: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanderProvenance {
    pub family: String,
    pub n_steps: usize,
    pub a_n: f64,
    pub samples: u64,
    pub attempts: u64,
    pub bandwidth: f64,
    pub seed: u64,
    pub partitions: usize,
}

/// Sample moment `E[W^power]` of the normalised endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub power: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanderTable {
    pub sign: Sign,
    pub params: StableParams,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub provenance: MeanderProvenance,
    /// Moment of order `alpha rho` (minus) or `alpha (1 - rho)` (plus).
    pub moment: MomentEstimate,
}

impl MeanderTable {
    pub fn eval(&self, w: f64) -> f64 {
        interp_linear(&self.grid, &self.values, w).unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        quad::trapezoid(&self.grid, &self.values)
    }

    /// `int w^power g(w) dw` over the table, exact for the piecewise-linear
    /// interpolant.
    pub fn table_moment(&self, power: f64) -> f64 {
        let f = |w: f64| w.powf(power) * self.eval(w);
        self.grid
            .windows(2)
            .map(|c| quad::gk15(&f, c[0], c[1]).0)
            .sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "z,value,stderr")?;
        for ((z, v), e) in self.grid.iter().zip(&self.values).zip(&self.std_errors) {
            writeln!(out, "{z},{v},{e}")?;
        }
        Ok(())
    }
}

/// Silverman's rule `0.9 min(sd, iqr / 1.34) N^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * (n - 1.0)).round() as usize).min(sorted.len() - 1)];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel estimate on `[0, inf)` with reflection at 0; returns
/// values and pointwise standard errors.
pub fn reflected_kde(samples: &[f64], grid: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let norm = 1.0 / (h * (2.0 * PI).sqrt());
    let mut values = Vec::with_capacity(grid.len());
    let mut errors = Vec::with_capacity(grid.len());
    for &w in grid {
        let (mut s, mut s2) = (0.0, 0.0);
        for &x in samples {
            let a = (w - x) / h;
            let b = (w + x) / h;
            let k = norm * ((-0.5 * a * a).exp() + (-0.5 * b * b).exp());
            s += k;
            s2 += k * k;
        }
        let mean = s / n;
        values.push(if w < 0.0 { 0.0 } else { mean });
        errors.push(((s2 / n - mean * mean).max(0.0) / n).sqrt());
    }
    (values, errors)
}

/// Normalised endpoints `±S_n / a_n` of walks conditioned on staying
/// nonnegative (for the sign's orientation), with the attempt count.
pub fn meander_endpoints(family: &IncrementFamily, sign: Sign, config: &MeanderConfig) -> Result<(Vec<f64>, u64)> {
    let fam = match sign {
        Sign::Plus => *family,
        Sign::Minus => family.reflected(),
    };
    let a_n = family.scaling().a(config.n_steps as u64) * config.norm_factor;
    let attempt_shares = rng::split_budget(config.max_attempts, config.partitions);
    let parts = rng::run_partitioned(config.seed, config.partitions, config.samples, |i, share, r| {
        let mut sampler = RejectionSampler::new(&fam, config.n_steps, 0.0, None, attempt_shares[i]);
        let mut out = Vec::with_capacity(share as usize);
        for _ in 0..share {
            match sampler.next_positions(r) {
                Ok((pos, _)) => out.push(pos[config.n_steps] / a_n),
                Err(_) => break,
            }
        }
        (out, sampler.attempts, share)
    });
    let mut samples = Vec::with_capacity(config.samples as usize);
    let mut attempts = 0;
    for (out, att, share) in parts {
        if (out.len() as u64) < share {
            return Err(Error::BudgetTooSmall(format!(
                "meander rejection accepted {} of {share} within the attempt budget",
                out.len()
            )));
        }
        samples.extend(out);
        attempts += att;
    }
    Ok((samples, attempts))
}

pub fn estimate_meander_density(
    family: &IncrementFamily,
    sign: Sign,
    grid: &[f64],
    config: &MeanderConfig,
) -> Result<MeanderTable> {
    if config.samples < 2 {
        return Err(Error::BudgetTooSmall("meander needs at least two samples".into()));
    }
    let (samples, attempts) = meander_endpoints(family, sign, config)?;
    Ok(meander_from_samples(family, sign, grid, config, &samples, attempts))
}

/// Build the table from already drawn endpoints.
pub fn meander_from_samples(
    family: &IncrementFamily,
    sign: Sign,
    grid: &[f64],
    config: &MeanderConfig,
    samples: &[f64],
    attempts: u64,
) -> MeanderTable {
    let params = family.stable_target;
    let h = config.bandwidth.unwrap_or_else(|| silverman_bandwidth(samples));
    let (values, std_errors) = reflected_kde(samples, grid, h);
    let power = match sign {
        Sign::Minus => params.alpha * params.rho,
        Sign::Plus => params.alpha * (1.0 - params.rho),
    };
    let n = samples.len() as f64;
    let pw: Vec<f64> = samples.iter().map(|w| w.powf(power)).collect();
    let mean = pw.iter().sum::<f64>() / n;
    let var = pw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    MeanderTable {
        sign,
        params,
        grid: grid.to_vec(),
        values,
        std_errors,
        provenance: MeanderProvenance {
            family: family.label(),
            n_steps: config.n_steps,
            a_n: family.scaling().a(config.n_steps as u64) * config.norm_factor,
            samples: samples.len() as u64,
            attempts,
            bandwidth: h,
            seed: config.seed,
            partitions: config.partitions,
        },
        moment: MomentEstimate { power, value: mean, std_error: (var / n).sqrt() },
    }
}
