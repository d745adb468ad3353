//! Exact tables `q_n(x, y) = P_x(L_n >= 0, S_n = y)` for bounded lattice
//! steps, with backward path sampling.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::family::IncrementFamily;
use super::lattice::{backward_to_end, step_killed, StepPmf};
use super::path::WalkPath;
use crate::error::{Error, Result};

/// Default memory guard: about 400 MB of `f64`.
pub const DEFAULT_MAX_CELLS: usize = 50_000_000;

/// Terminal condition of a conditioned walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "y", rename_all = "snake_case")]
pub enum EndSpec {
    /// `S_N = y` (lattice only).
    Exact(f64),
    /// `S_N <= y`.
    AtMost(f64),
}

impl EndSpec {
    pub fn holds(&self, s: f64) -> bool {
        match *self {
            EndSpec::Exact(y) => s == y,
            EndSpec::AtMost(y) => s <= y,
        }
    }

    /// Integer heights `[lo, hi]` satisfying the condition, clipped at 0.
    pub fn lattice_range(&self) -> Option<(usize, usize)> {
        match *self {
            EndSpec::Exact(y) => (y >= 0.0 && y.fract() == 0.0).then(|| (y as usize, y as usize)),
            EndSpec::AtMost(y) => (y >= 0.0).then(|| (0, y.floor() as usize)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionKernel {
    pub family: IncrementFamily,
    pub pmf: StepPmf,
    pub horizon: usize,
    pub start: usize,
    /// `tables[n][y] = q_n(start, y)`.
    pub tables: Vec<Vec<f64>>,
}

pub fn kernel_cells(pmf: &StepPmf, n: usize, x: usize) -> usize {
    let (_, up) = pmf.reach();
    (0..=n).map(|k| x + k * up + 1).sum()
}

pub fn exact_kernel(family: &IncrementFamily, n: usize, x: usize) -> Result<ConditionKernel> {
    exact_kernel_with_limit(family, n, x, DEFAULT_MAX_CELLS)
}

pub fn exact_kernel_with_limit(family: &IncrementFamily, n: usize, x: usize, max_cells: usize) -> Result<ConditionKernel> {
    let pmf = family
        .step_pmf()
        .ok_or_else(|| Error::InvalidConfig(format!("exact kernel needs a bounded lattice family, got {}", family.label())))?;
    if n == 0 {
        return Err(Error::InvalidConfig("kernel horizon must be at least 1".into()));
    }
    let cells = kernel_cells(&pmf, n, x);
    if cells > max_cells {
        return Err(Error::HorizonTooLarge { cells, limit: max_cells });
    }
    let mut tables = Vec::with_capacity(n + 1);
    let mut row = vec![0.0; x + 1];
    row[x] = 1.0;
    tables.push(row);
    for k in 1..=n {
        let next = step_killed(&pmf, &tables[k - 1]);
        tables.push(next);
    }
    Ok(ConditionKernel { family: *family, pmf, horizon: n, start: x, tables })
}

impl ConditionKernel {
    pub fn q(&self, n: usize, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        self.tables[n].get(y as usize).copied().unwrap_or(0.0)
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.tables[n]
    }

    /// `P_x(L_n >= 0)`.
    pub fn alive(&self, n: usize) -> f64 {
        self.tables[n].iter().sum()
    }

    /// `P_x(L_n >= 0, S_n in end)`.
    pub fn end_mass(&self, n: usize, end: EndSpec) -> f64 {
        match end.lattice_range() {
            Some((lo, hi)) => self.tables[n].iter().skip(lo).take(hi + 1 - lo).sum(),
            None => 0.0,
        }
    }

    /// Law of `S_k` given `L_n >= 0` and the end condition, as masses on
    /// heights `0..`.
    pub fn marginal(&self, k: usize, n: usize, end: EndSpec) -> Result<Vec<f64>> {
        let (lo, hi) = end
            .lattice_range()
            .ok_or_else(|| Error::ImpossibleEvent(format!("{end:?} on the lattice")))?;
        let r = backward_to_end(&self.pmf, lo, hi, n - k);
        let row = &self.tables[k];
        let mut out: Vec<f64> = row.iter().enumerate().map(|(u, &q)| q * r.get(u).copied().unwrap_or(0.0)).collect();
        let total: f64 = out.iter().sum();
        if total <= 0.0 {
            return Err(Error::ImpossibleEvent(format!("{end:?} after {n} steps from {}", self.start)));
        }
        out.iter_mut().for_each(|v| *v /= total);
        Ok(out)
    }

    /// Joint law of `(S_k, S_n)` given `L_n >= 0` and the end condition, as
    /// `(u, v, probability)` triples with positive probability.
    pub fn two_time_law(&self, k: usize, n: usize, end: EndSpec) -> Result<Vec<(usize, usize, f64)>> {
        let (lo, hi) = end
            .lattice_range()
            .ok_or_else(|| Error::ImpossibleEvent(format!("{end:?} on the lattice")))?;
        let row = &self.tables[k];
        let mut out = Vec::new();
        for v in lo..=hi {
            let r = backward_to_end(&self.pmf, v, v, n - k);
            for (u, &q) in row.iter().enumerate() {
                let w = q * r.get(u).copied().unwrap_or(0.0);
                if w > 0.0 {
                    out.push((u, v, w));
                }
            }
        }
        let total: f64 = out.iter().map(|t| t.2).sum();
        if total <= 0.0 {
            return Err(Error::ImpossibleEvent(format!("{end:?} after {n} steps from {}", self.start)));
        }
        out.iter_mut().for_each(|t| t.2 /= total);
        Ok(out)
    }

    /// Path of length `n <= horizon` from the kernel's start, conditioned on
    /// `L_n >= 0` and `end`. The terminal height is drawn from row `n`, then
    /// the path is walked backward using `q_{k-1}(u) p(v - u) / q_k(v)`.
    pub fn sample_path<R: Rng + ?Sized>(&self, n: usize, end: EndSpec, rng: &mut R) -> Result<WalkPath> {
        let (lo, hi) = end
            .lattice_range()
            .ok_or_else(|| Error::ImpossibleEvent(format!("{end:?} on the lattice")))?;
        let row = &self.tables[n];
        let hi = hi.min(row.len().saturating_sub(1));
        let mass: f64 = if lo <= hi { row[lo..=hi].iter().sum() } else { 0.0 };
        if mass <= 0.0 {
            return Err(Error::ImpossibleEvent(format!("{end:?} after {n} steps from {}", self.start)));
        }
        let mut target = rng.random::<f64>() * mass;
        let mut v = hi;
        for y in lo..=hi {
            target -= row[y];
            if target < 0.0 {
                v = y;
                break;
            }
        }
        let mut heights = vec![0usize; n + 1];
        heights[n] = v;
        let mut weights: Vec<(usize, f64)> = Vec::with_capacity(self.pmf.probs.len());
        for k in (1..=n).rev() {
            let prev = &self.tables[k - 1];
            let cur = heights[k] as i64;
            weights.clear();
            let mut total = 0.0;
            for (s, p) in self.pmf.support() {
                let u = cur - s;
                if u >= 0 && (u as usize) < prev.len() {
                    let w = prev[u as usize] * p;
                    if w > 0.0 {
                        weights.push((u as usize, w));
                        total += w;
                    }
                }
            }
            let mut t = rng.random::<f64>() * total;
            let mut chosen = weights[weights.len() - 1].0;
            for &(u, w) in &weights {
                t -= w;
                if t < 0.0 {
                    chosen = u;
                    break;
                }
            }
            heights[k - 1] = chosen;
        }
        let positions: Vec<f64> = heights.iter().map(|&h| h as f64).collect();
        Ok(WalkPath::from_positions(&positions))
    }

    /// Long-format export with columns `n, y, q`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,y,q")?;
        for (n, row) in self.tables.iter().enumerate() {
            for (y, q) in row.iter().enumerate() {
                writeln!(out, "{n},{y},{q}")?;
            }
        }
        Ok(())
    }
}
