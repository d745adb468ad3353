//! Bridge positivity `C(a, b)`: probability that the limiting bridge from
//! `a` to `b` over unit time stays nonnegative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stable::StableParams;
use crate::walk::lattice::{free_distribution, killed_distribution};
use crate::walk::IncrementFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeMethod {
    Auto,
    /// Exact kernel ratios for bounded lattice families.
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    pub n_steps: usize,
    /// Endpoint bin width in units of `c^{1/alpha}`.
    pub bin_width: f64,
    /// Monte Carlo walks per starting value `a`.
    pub walks_per_start: u64,
    pub method: BridgeMethod,
    /// Also compute the table at half the bin width and report the gap.
    pub report_binning_bias: bool,
    pub seed: u64,
    pub partitions: usize,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            n_steps: 2000,
            bin_width: 0.05,
            walks_per_start: 100_000,
            method: BridgeMethod::Auto,
            report_binning_bias: false,
            seed: 0,
            partitions: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgePositivityTable {
    pub params: StableParams,
    pub family: String,
    pub n_steps: usize,
    /// Bin width actually used, in the normalised scale.
    pub bin_width: f64,
    pub a_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    /// `values[i][j] = C(a_grid[i], b_grid[j])`.
    pub values: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    /// Largest change when the bin width is halved.
    pub binning_bias: Option<f64>,
}

impl BridgePositivityTable {
    /// Bilinear interpolation, clamped to the grid edges.
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let (i, ta) = locate(&self.a_grid, a);
        let (j, tb) = locate(&self.b_grid, b);
        let v = |ii: usize, jj: usize| self.values[ii][jj];
        let i1 = (i + 1).min(self.a_grid.len() - 1);
        let j1 = (j + 1).min(self.b_grid.len() - 1);
        (1.0 - ta) * ((1.0 - tb) * v(i, j) + tb * v(i, j1)) + ta * ((1.0 - tb) * v(i1, j) + tb * v(i1, j1))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "a,b,value,stderr")?;
        for (i, a) in self.a_grid.iter().enumerate() {
            for (j, b) in self.b_grid.iter().enumerate() {
                writeln!(out, "{a},{b},{},{}", self.values[i][j], self.std_errors[i][j])?;
            }
        }
        Ok(())
    }
}

/// Cell index and fractional position, clamped to the grid.
fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 1, 0.0);
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
}

pub fn estimate_bridge_positivity(
    family: &IncrementFamily,
    a_grid: &[f64],
    b_grid: &[f64],
    config: &BridgeConfig,
) -> Result<BridgePositivityTable> {
    if a_grid.iter().chain(b_grid).any(|&v| v < 0.0) || a_grid.is_empty() || b_grid.is_empty() {
        return Err(Error::InvalidConfig("bridge grid must be nonempty and nonnegative".into()));
    }
    let exact = match config.method {
        BridgeMethod::Exact => {
            if family.step_pmf().is_none() {
                return Err(Error::InvalidConfig(format!("no exact bridge path for {}", family.label())));
            }
            true
        }
        BridgeMethod::Auto => family.step_pmf().is_some(),
        BridgeMethod::MonteCarlo => false,
    };
    let width = config.bin_width * family.stable_target.unit();
    let compute = |w: f64| {
        if exact {
            exact_table(family, a_grid, b_grid, config.n_steps, w)
        } else {
            monte_carlo_table(family, a_grid, b_grid, config, w)
        }
    };
    let (values, std_errors) = compute(width)?;
    let binning_bias = if config.report_binning_bias {
        let (half, _) = compute(0.5 * width)?;
        Some(
            values
                .iter()
                .flatten()
                .zip(half.iter().flatten())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    Ok(BridgePositivityTable {
        params: family.stable_target,
        family: family.label(),
        n_steps: config.n_steps,
        bin_width: width,
        a_grid: a_grid.to_vec(),
        b_grid: b_grid.to_vec(),
        values,
        std_errors,
        binning_bias,
    })
}

type Grid2 = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn exact_table(family: &IncrementFamily, a_grid: &[f64], b_grid: &[f64], n: usize, width: f64) -> Result<Grid2> {
    let pmf = family.step_pmf().expect("checked by caller");
    let a_n = family.scaling().a(n as u64);
    let mut values = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        let x = (a * a_n).round() as usize;
        let killed = killed_distribution(&pmf, x, n);
        let (offset, free) = free_distribution(&pmf, x as i64, n);
        let mut row = Vec::with_capacity(b_grid.len());
        for &b in b_grid {
            // lattice heights within half a bin of b a_n, at least the nearest one
            let centre = b * a_n;
            let half = 0.5 * width * a_n;
            let mut lo = (centre - half).ceil().max(0.0) as i64;
            let mut hi = (centre + half).floor() as i64;
            if hi < lo {
                lo = centre.round() as i64;
                hi = lo;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for y in lo..=hi {
                num += killed.get(y as usize).copied().unwrap_or(0.0);
                let idx = y - offset;
                if idx >= 0 {
                    den += free.get(idx as usize).copied().unwrap_or(0.0);
                }
            }
            if den <= 0.0 {
                return Err(Error::EmptyBin { a, b });
            }
            row.push((num / den).clamp(0.0, 1.0));
        }
        values.push(row);
    }
    let errors = vec![vec![0.0; b_grid.len()]; a_grid.len()];
    Ok((values, errors))
}

fn monte_carlo_table(
    family: &IncrementFamily,
    a_grid: &[f64],
    b_grid: &[f64],
    config: &BridgeConfig,
    width: f64,
) -> Result<Grid2> {
    let n = config.n_steps;
    let a_n = family.scaling().a(n as u64);
    let mut values = Vec::with_capacity(a_grid.len());
    let mut errors = Vec::with_capacity(a_grid.len());
    for (ia, &a) in a_grid.iter().enumerate() {
        let x0 = a * a_n;
        let seed = rng::child_seed(config.seed, ia as u64);
        let parts = rng::run_partitioned(seed, config.partitions, config.walks_per_start, |_, share, r| {
            let mut hit = vec![0u64; b_grid.len()];
            let mut pos = vec![0u64; b_grid.len()];
            for _ in 0..share {
                let mut s = x0;
                let mut min = f64::INFINITY;
                for _ in 0..n {
                    s += family.sample_step(r);
                    min = min.min(s);
                }
                let e = s / a_n;
                for (j, &b) in b_grid.iter().enumerate() {
                    if (e - b).abs() <= 0.5 * width {
                        hit[j] += 1;
                        if min >= 0.0 {
                            pos[j] += 1;
                        }
                    }
                }
            }
            (hit, pos)
        });
        let mut hit = vec![0u64; b_grid.len()];
        let mut pos = vec![0u64; b_grid.len()];
        for (h, p) in parts {
            for j in 0..b_grid.len() {
                hit[j] += h[j];
                pos[j] += p[j];
            }
        }
        let mut row = Vec::with_capacity(b_grid.len());
        let mut erow = Vec::with_capacity(b_grid.len());
        for (j, &b) in b_grid.iter().enumerate() {
            if hit[j] == 0 {
                return Err(Error::EmptyBin { a, b });
            }
            let c = pos[j] as f64 / hit[j] as f64;
            row.push(c);
            erow.push((c * (1.0 - c) / hit[j] as f64).sqrt());
        }
        values.push(row);
        errors.push(erow);
    }
    Ok((values, errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{make_family, FamilyKind};

    #[test]
    fn locate_clamps() {
        let g = [0.0, 1.0, 2.0];
        assert_eq!(locate(&g, -1.0), (0, 0.0));
        assert_eq!(locate(&g, 5.0), (2, 0.0));
        let (i, t) = locate(&g, 1.25);
        assert_eq!(i, 1);
        assert!((t - 0.25).abs() < 1e-15);
    }

    #[test]
    fn exact_values_are_probabilities() {
        let f = make_family(FamilyKind::LazyLattice { p: 0.3 }).unwrap();
        let cfg = BridgeConfig { n_steps: 200, ..Default::default() };
        let t = estimate_bridge_positivity(&f, &[0.0, 0.5, 1.0], &[0.0, 0.5, 1.0], &cfg).unwrap();
        for v in t.values.iter().flatten() {
            assert!((0.0..=1.0).contains(v));
        }
        // moving the start up makes staying positive easier
        assert!(t.values[2][2] > t.values[1][2]);
        assert!((t.eval(1.0, 1.0) - t.values[2][2]).abs() < 1e-15);
    }
}
