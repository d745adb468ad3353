//! Renewal functions built from ladder heights, ladder-epoch tails and the
//! probability `zeta` of a zero first ladder height.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::family::IncrementFamily;
use super::lattice::{AscendingPassage, StepPmf};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenewalKind {
    /// Weak ascending heights `<= x`.
    VPlus,
    /// Weak descending heights `<= x`.
    VMinus,
    /// Weak ascending heights `< x`.
    VPlusUnder,
    /// Weak descending heights `< x`.
    VMinusUnder,
    /// Strict ascending heights `<= x`.
    VHatPlus,
    /// Strict descending heights `<= x`.
    VHatMinus,
}

impl RenewalKind {
    pub fn ascending(self) -> bool {
        matches!(self, Self::VPlus | Self::VPlusUnder | Self::VHatPlus)
    }

    pub fn strict(self) -> bool {
        matches!(self, Self::VHatPlus | Self::VHatMinus)
    }

    pub fn under(self) -> bool {
        matches!(self, Self::VPlusUnder | Self::VMinusUnder)
    }

    pub fn all() -> [RenewalKind; 6] {
        [Self::VPlus, Self::VMinus, Self::VPlusUnder, Self::VMinusUnder, Self::VHatPlus, Self::VHatMinus]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenewalMethod {
    /// Exact for bounded lattice families, Monte Carlo otherwise.
    Auto,
    MonteCarlo,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalBudget {
    pub walks: u64,
    /// Step horizon per simulated walk.
    pub horizon: usize,
    /// Horizon of the first-passage series on the exact path.
    pub exact_horizon: usize,
    pub seed: u64,
    pub partitions: usize,
}

impl Default for RenewalBudget {
    fn default() -> Self {
        Self { walks: 20_000, horizon: 100_000, exact_horizon: 20_000, seed: 0, partitions: 4 }
    }
}

/// Tabulated renewal function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalTable {
    pub kind: RenewalKind,
    pub family: String,
    pub method: RenewalMethod,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub zeta: f64,
    pub zeta_error: f64,
    /// Bound on the mass missed by truncating walks or series.
    pub truncation_bound: f64,
    /// Renewal masses `u(y)` at integer heights, exact path only.
    pub atoms: Option<Vec<f64>>,
    /// Regular-variation index used beyond the grid.
    pub tail_exponent: f64,
}

impl RenewalTable {
    /// Evaluate at any `x >= 0`; the table is extended past its range by
    /// `V(x) ~ V(top) ((x + 1) / (top + 1))^kappa`.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if let Some(atoms) = &self.atoms {
            let top = atoms.len() - 1;
            let count = |k: usize| atoms[..=k.min(top)].iter().sum::<f64>();
            let idx = if self.kind.under() {
                if x <= 0.0 {
                    return 0.0;
                }
                (x.ceil() as usize) - 1
            } else {
                x.floor() as usize
            };
            if idx <= top {
                return count(idx);
            }
            let vt = count(top);
            return vt * ((idx as f64 + 1.0) / (top as f64 + 1.0)).powf(self.tail_exponent);
        }
        let last = *self.grid.last().unwrap();
        if x > last {
            let vt = *self.values.last().unwrap();
            return vt * ((x + 1.0) / (last + 1.0)).powf(self.tail_exponent);
        }
        // right-continuous step through the grid
        let i = self.grid.partition_point(|&g| g <= x);
        if i == 0 {
            return 0.0;
        }
        self.values[i - 1]
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,value,stderr")?;
        for ((x, v), e) in self.grid.iter().zip(&self.values).zip(&self.std_errors) {
            writeln!(out, "{x},{v},{e}")?;
        }
        Ok(())
    }
}

/// Series estimate of `zeta` on both sides of the duality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaEstimate {
    /// Truncated series plus the estimated remainder.
    pub value: f64,
    /// Sum of the series terms up to the horizon.
    pub truncated_sum: f64,
    /// The remainder lies in `[0, truncation_bound]`.
    pub truncation_bound: f64,
    pub horizon: usize,
    /// Same quantity from `P(S_1 > 0, ..., S_{n-1} > 0, S_n = 0)`.
    pub dual_value: f64,
    pub dual_bound: f64,
}

fn zeta_series(pmf: &StepPmf, horizon: usize) -> (f64, f64, f64) {
    let p = AscendingPassage::run(pmf, 0, horizon);
    let sum: f64 = p.level0_by_step.iter().sum();
    let alive = p.alive_mass() + p.dropped;
    let last_total: f64 = p.last_levels.iter().sum();
    let frac0 = if last_total > 0.0 { p.last_levels[0] / last_total } else { 0.0 };
    (sum + alive * frac0, sum, alive)
}

/// `zeta = P(H_1^+ = 0)`; exactly zero for continuous families.
pub fn estimate_zeta(family: &IncrementFamily, horizon: usize) -> ZetaEstimate {
    let Some(pmf) = family.step_pmf() else {
        return ZetaEstimate {
            value: 0.0,
            truncated_sum: 0.0,
            truncation_bound: 0.0,
            horizon,
            dual_value: 0.0,
            dual_bound: 0.0,
        };
    };
    let (value, truncated_sum, bound) = zeta_series(&pmf, horizon);
    let (dual_value, _, dual_bound) = zeta_series(&pmf.reflected(), horizon);
    ZetaEstimate { value, truncated_sum, truncation_bound: bound, horizon, dual_value, dual_bound }
}

/// Law of the first ladder height for the given direction and strictness,
/// from the first-passage series. Returns `(law, unallocated_mass)`; the
/// unabsorbed mass is spread like the last step's absorptions.
pub fn ladder_height_law(pmf: &StepPmf, ascending: bool, strict: bool, horizon: usize) -> (Vec<f64>, f64) {
    let pmf = if ascending { pmf.clone() } else { pmf.reflected() };
    let start = if strict { -1 } else { 0 };
    let p = AscendingPassage::run(&pmf, start, horizon);
    let residual = p.alive_mass() + p.dropped;
    let shift = usize::from(strict);
    let mut law = vec![0.0; p.level_mass.len() + shift];
    for (l, m) in p.level_mass.iter().enumerate() {
        law[l + shift] += m;
    }
    let last_total: f64 = p.last_levels.iter().sum();
    if last_total > 0.0 {
        for (l, m) in p.last_levels.iter().enumerate() {
            law[l + shift] += residual * m / last_total;
        }
    }
    (law, residual)
}

/// Renewal masses `u(y)`, `y = 0..=ymax`, from a ladder-height law `f`:
/// `u = delta_0 + f * u`.
pub fn renewal_atoms(law: &[f64], ymax: usize) -> Vec<f64> {
    let f0 = law.first().copied().unwrap_or(0.0);
    let mut u = vec![0.0; ymax + 1];
    for y in 0..=ymax {
        let mut acc = if y == 0 { 1.0 } else { 0.0 };
        for h in 1..law.len().min(y + 1) {
            acc += law[h] * u[y - h];
        }
        u[y] = acc / (1.0 - f0);
    }
    u
}

fn tail_exponent(family: &IncrementFamily, kind: RenewalKind) -> f64 {
    let p = family.stable_target;
    if kind.ascending() {
        p.alpha * p.rho
    } else {
        p.alpha * (1.0 - p.rho)
    }
}

pub fn estimate_renewal(
    family: &IncrementFamily,
    kind: RenewalKind,
    grid: &[f64],
    budget: &RenewalBudget,
    method: RenewalMethod,
) -> Result<RenewalTable> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] < 0.0 {
        return Err(Error::InvalidConfig("renewal grid must be nonnegative and increasing".into()));
    }
    let pmf = family.step_pmf();
    let use_exact = match method {
        RenewalMethod::Exact => {
            if pmf.is_none() {
                return Err(Error::InvalidConfig(format!("no exact renewal path for {}", family.label())));
            }
            true
        }
        RenewalMethod::Auto => pmf.is_some(),
        RenewalMethod::MonteCarlo => false,
    };
    if use_exact {
        Ok(exact_renewal(family, &pmf.unwrap(), kind, grid, budget.exact_horizon))
    } else {
        monte_carlo_renewal(family, kind, grid, budget)
    }
}

fn exact_renewal(family: &IncrementFamily, pmf: &StepPmf, kind: RenewalKind, grid: &[f64], horizon: usize) -> RenewalTable {
    let (law, residual) = ladder_height_law(pmf, kind.ascending(), kind.strict(), horizon);
    let (weak_law, weak_residual) = ladder_height_law(pmf, kind.ascending(), false, horizon);
    let ymax = (grid.last().unwrap().ceil() as usize).max(1);
    let atoms = renewal_atoms(&law, ymax);
    let mut table = RenewalTable {
        kind,
        family: family.label(),
        method: RenewalMethod::Exact,
        grid: grid.to_vec(),
        values: Vec::new(),
        std_errors: vec![0.0; grid.len()],
        zeta: weak_law[0],
        zeta_error: weak_residual,
        truncation_bound: residual,
        atoms: Some(atoms),
        tail_exponent: tail_exponent(family, kind),
    };
    table.values = grid.iter().map(|&x| table.eval(x)).collect();
    table
}

struct McAccum {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    zero_first: u64,
    truncated: u64,
    walks: u64,
}

fn monte_carlo_renewal(
    family: &IncrementFamily,
    kind: RenewalKind,
    grid: &[f64],
    budget: &RenewalBudget,
) -> Result<RenewalTable> {
    let fam = if kind.ascending() { *family } else { family.reflected() };
    let strict = kind.strict();
    let under = kind.under();
    let x_max = *grid.last().unwrap();
    let parts = rng::run_partitioned(budget.seed, budget.partitions, budget.walks, |_, share, r| {
        let mut acc = McAccum {
            sum: vec![0.0; grid.len()],
            sumsq: vec![0.0; grid.len()],
            zero_first: 0,
            truncated: 0,
            walks: share,
        };
        let mut counts = vec![0u32; grid.len()];
        for _ in 0..share {
            counts.iter_mut().for_each(|c| *c = 0);
            let credit = |h: f64, counts: &mut [u32]| {
                let first = if under { grid.partition_point(|&g| g <= h) } else { grid.partition_point(|&g| g < h) };
                for c in &mut counts[first..] {
                    *c += 1;
                }
            };
            credit(0.0, &mut counts);
            let mut record = 0.0;
            let mut s = 0.0;
            let mut first_seen = false;
            let mut finished = false;
            for _ in 0..budget.horizon {
                s += fam.sample_step(r);
                let is_ladder = if strict { s > record } else { s >= record };
                if !is_ladder {
                    continue;
                }
                if !first_seen {
                    first_seen = true;
                    if s == 0.0 {
                        acc.zero_first += 1;
                    }
                }
                record = s;
                let beyond = if under { record >= x_max } else { record > x_max };
                if beyond {
                    finished = true;
                    break;
                }
                credit(record, &mut counts);
            }
            if !finished {
                acc.truncated += 1;
            }
            for (i, &c) in counts.iter().enumerate() {
                acc.sum[i] += c as f64;
                acc.sumsq[i] += (c as f64) * (c as f64);
            }
        }
        acc
    });
    let total = budget.walks.max(1) as f64;
    let mut sum = vec![0.0; grid.len()];
    let mut sumsq = vec![0.0; grid.len()];
    let (mut zero_first, mut truncated, mut walks) = (0u64, 0u64, 0u64);
    for p in &parts {
        for i in 0..grid.len() {
            sum[i] += p.sum[i];
            sumsq[i] += p.sumsq[i];
        }
        zero_first += p.zero_first;
        truncated += p.truncated;
        walks += p.walks;
    }
    debug_assert_eq!(walks, budget.walks);
    let values: Vec<f64> = sum.iter().map(|s| s / total).collect();
    let std_errors: Vec<f64> = values
        .iter()
        .zip(&sumsq)
        .map(|(m, sq)| ((sq / total - m * m).max(0.0) / total).sqrt())
        .collect();
    for (i, (v, e)) in values.iter().zip(&std_errors).enumerate() {
        if (*v <= 0.0 && !(under && grid[i] == 0.0)) || (*v > 0.0 && e / v > 0.1) {
            return Err(Error::BudgetTooSmall(format!(
                "renewal {:?} at x={}: value {v}, stderr {e}",
                kind, grid[i]
            )));
        }
    }
    let zeta = if fam.is_lattice() { zero_first as f64 / total } else { 0.0 };
    let zeta_error = (zeta * (1.0 - zeta) / total).sqrt();
    let truncation_bound = truncated as f64 / total * values.last().copied().unwrap_or(0.0);
    Ok(RenewalTable {
        kind,
        family: family.label(),
        method: RenewalMethod::MonteCarlo,
        grid: grid.to_vec(),
        values,
        std_errors,
        zeta,
        zeta_error,
        truncation_bound,
        atoms: None,
        tail_exponent: tail_exponent(family, kind),
    })
}

/// Estimate of `P(tau_1^+ > n)` (ascending) or `P(tau_1^- > n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub n: usize,
    pub value: f64,
    pub std_error: f64,
}

/// `P(tau_1^+ > n) = P(S_1 < 0, ..., S_n < 0)`; descending side
/// `P(S_1 > 0, ..., S_n > 0)`. Exact for bounded lattice families.
pub fn ladder_epoch_tail(family: &IncrementFamily, n: usize, ascending: bool, walks: u64, seed: u64, partitions: usize) -> TailEstimate {
    if let Some(pmf) = family.step_pmf() {
        let pmf = if ascending { pmf } else { pmf.reflected() };
        let p = AscendingPassage::run(&pmf, 0, n);
        return TailEstimate { n, value: p.alive_mass(), std_error: 0.0 };
    }
    let sign = if ascending { 1.0 } else { -1.0 };
    let hits: u64 = rng::run_partitioned(seed, partitions, walks, |_, share, r| {
        let mut hits = 0u64;
        for _ in 0..share {
            if stays_below_zero(family, n, sign, r) {
                hits += 1;
            }
        }
        hits
    })
    .into_iter()
    .sum();
    let value = hits as f64 / walks.max(1) as f64;
    TailEstimate { n, value, std_error: (value * (1.0 - value) / walks.max(1) as f64).sqrt() }
}

fn stays_below_zero<R: Rng + ?Sized>(family: &IncrementFamily, n: usize, sign: f64, r: &mut R) -> bool {
    let mut s = 0.0;
    for _ in 0..n {
        s += sign * family.sample_step(r);
        if s >= 0.0 {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::family::{make_family, FamilyKind};

    fn lazy() -> IncrementFamily {
        make_family(FamilyKind::LazyLattice { p: 0.3 }).unwrap()
    }

    #[test]
    fn zeta_skip_free_value() {
        let z = estimate_zeta(&lazy(), 5000);
        assert!((z.value - 0.7).abs() < 1e-6, "{z:?}");
        assert!((z.value - z.truncated_sum).abs() <= z.truncation_bound + 1e-15);
        assert!((z.value - z.dual_value).abs() < 1e-9);
    }

    #[test]
    fn exact_lazy_renewal_is_linear() {
        let f = lazy();
        let grid: Vec<f64> = (0..20).map(f64::from).collect();
        let b = RenewalBudget { exact_horizon: 5000, ..Default::default() };
        let v = estimate_renewal(&f, RenewalKind::VPlus, &grid, &b, RenewalMethod::Exact).unwrap();
        let hat = estimate_renewal(&f, RenewalKind::VHatPlus, &grid, &b, RenewalMethod::Exact).unwrap();
        for (i, &x) in grid.iter().enumerate() {
            assert!((hat.values[i] - (x + 1.0)).abs() < 1e-9);
            assert!((v.values[i] - (x + 1.0) / 0.3).abs() < 1e-3);
        }
        let under = estimate_renewal(&f, RenewalKind::VPlusUnder, &grid, &b, RenewalMethod::Exact).unwrap();
        assert_eq!(under.values[0], 0.0);
        assert!((under.eval(2.5) - v.eval(2.0)).abs() < 1e-12);
        assert!((under.eval(3.0) - v.eval(2.0)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_tail_decreases() {
        let g = make_family(FamilyKind::Gaussian { sigma: 1.0 }).unwrap();
        let a = ladder_epoch_tail(&g, 10, true, 20_000, 4, 2);
        let b = ladder_epoch_tail(&g, 40, true, 20_000, 4, 2);
        assert!(a.value > b.value);
        // Sparre Andersen: P(tau > n) = C(2n, n) / 4^n for symmetric continuous steps
        let exact10 = 184_756.0 / 4f64.powi(10);
        assert!((a.value - exact10).abs() < 4.0 * a.std_error);
    }
}
