//! Local-limit predictions for the killed kernel `q_n(x, y)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bridge::BridgePositivityTable;
use super::meander::MeanderTable;
use crate::error::{Error, Result};
use crate::stable::stable_density;
use crate::walk::family::IncrementFamily;
use crate::walk::kernel::ConditionKernel;
use crate::walk::renewal::{ladder_epoch_tail, RenewalTable};

/// Largest `x / a_n` treated as small.
pub const SMALL_FRACTION: f64 = 0.25;
/// `x / a_n` must lie in `(1 / D, D)` for the both-big case.
pub const BIG_RATIO: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalCase {
    Xsmall,
    Ysmall,
    XYsmall,
    XYbig,
}

/// Backing quantities for the predictions. Lattice families use the
/// renewal tables' `zeta` and the lattice span as `h`.
#[derive(Debug, Clone)]
pub struct LocalContext {
    pub family: IncrementFamily,
    pub v_minus: RenewalTable,
    pub v_plus: RenewalTable,
    pub meander_plus: Option<MeanderTable>,
    pub meander_minus: Option<MeanderTable>,
    pub bridge: Option<BridgePositivityTable>,
    /// `n -> (P(tau+ > n), P(tau- > n))`.
    pub tails: BTreeMap<usize, (f64, f64)>,
}

impl LocalContext {
    pub fn new(family: IncrementFamily, v_minus: RenewalTable, v_plus: RenewalTable) -> Self {
        Self { family, v_minus, v_plus, meander_plus: None, meander_minus: None, bridge: None, tails: BTreeMap::new() }
    }

    /// Estimate and store the ladder-epoch tails at `n`.
    pub fn add_tails(&mut self, n: usize, walks: u64, seed: u64, partitions: usize) {
        let plus = ladder_epoch_tail(&self.family, n, true, walks, seed, partitions).value;
        let minus = ladder_epoch_tail(&self.family, n, false, walks, seed ^ 1, partitions).value;
        self.tails.insert(n, (plus, minus));
    }

    fn span(&self) -> f64 {
        self.family.lattice.map_or(1.0, |l| l.span)
    }

    fn zeta(&self) -> f64 {
        if self.family.is_lattice() {
            self.v_plus.zeta
        } else {
            0.0
        }
    }

    fn tail(&self, n: usize) -> Result<(f64, f64)> {
        self.tails
            .get(&n)
            .copied()
            .ok_or_else(|| Error::DependencyMissing(format!("ladder-epoch tails at n = {n}")))
    }
}

fn check_window(case: LocalCase, a_n: f64, x: f64, y: f64) -> Result<()> {
    let small = |v: f64| v <= SMALL_FRACTION * a_n;
    let big = |v: f64| v > a_n / BIG_RATIO && v < BIG_RATIO * a_n;
    let (ok, detail) = match case {
        LocalCase::Xsmall => (small(x), format!("x = {x} exceeds {SMALL_FRACTION} a_n = {}", SMALL_FRACTION * a_n)),
        LocalCase::Ysmall => (small(y), format!("y = {y} exceeds {SMALL_FRACTION} a_n = {}", SMALL_FRACTION * a_n)),
        LocalCase::XYsmall => (small(x) && small(y), format!("x = {x}, y = {y} not both below {}", SMALL_FRACTION * a_n)),
        LocalCase::XYbig => (
            big(x) && big(y),
            format!("x = {x}, y = {y} not both in ({}, {})", a_n / BIG_RATIO, BIG_RATIO * a_n),
        ),
    };
    if x < 0.0 || y < 0.0 {
        return Err(Error::RegimeMismatch { case: format!("{case:?}"), detail: "negative start or end".into() });
    }
    if ok {
        Ok(())
    } else {
        Err(Error::RegimeMismatch { case: format!("{case:?}"), detail })
    }
}

/// Leading term of `q_n(x, y)` (a point mass on lattices, a density otherwise).
pub fn local_limit_prediction(case: LocalCase, ctx: &LocalContext, n: usize, x: f64, y: f64) -> Result<f64> {
    let law = ctx.family.scaling();
    let a_n = law.a(n as u64);
    check_window(case, a_n, x, y)?;
    let h = ctx.span();
    let params = &ctx.family.stable_target;
    match case {
        LocalCase::Xsmall => {
            let g = ctx.meander_plus.as_ref().ok_or_else(|| Error::DependencyMissing("meander g+".into()))?;
            let (_, minus) = ctx.tail(n)?;
            Ok(h * minus / a_n * ctx.v_minus.eval(x) * g.eval(y / a_n))
        }
        LocalCase::Ysmall => {
            let g = ctx.meander_minus.as_ref().ok_or_else(|| Error::DependencyMissing("meander g-".into()))?;
            let (plus, _) = ctx.tail(n)?;
            Ok(h * plus / a_n * ctx.v_plus.eval(y) * g.eval(x / a_n))
        }
        LocalCase::XYsmall => {
            let g0 = stable_density(params, 0.0)?;
            Ok(h * (1.0 - ctx.zeta()) * g0 / (n as f64 * a_n) * ctx.v_minus.eval(x) * ctx.v_plus.eval(y))
        }
        LocalCase::XYbig => {
            let c = ctx.bridge.as_ref().ok_or_else(|| Error::DependencyMissing("bridge positivity table".into()))?;
            let g = stable_density(params, (y - x) / a_n)?;
            Ok(h / a_n * g * c.eval(x / a_n, y / a_n))
        }
    }
}

/// `C b_n V-(x) V+(y)`, the uniform domination of the killed kernel.
pub fn domination_bound(constant: f64, ctx: &LocalContext, n: usize, x: f64, y: f64) -> f64 {
    constant * ctx.family.scaling().b(n as u64) * ctx.v_minus.eval(x) * ctx.v_plus.eval(y)
}

/// Smallest `C` with `q_k(x, y) <= C b_k V-(x) V+(y)` over the rows
/// `k in 1..=n` of an exact kernel.
pub fn fit_domination_constant(kernel: &ConditionKernel, v_minus: &RenewalTable, v_plus: &RenewalTable) -> f64 {
    let law = kernel.family.scaling();
    let vx = v_minus.eval(kernel.start as f64);
    let mut c: f64 = 0.0;
    for k in 1..=kernel.horizon {
        let b = law.b(k as u64);
        for (y, &q) in kernel.row(k).iter().enumerate() {
            if q > 0.0 {
                c = c.max(q / (b * vx * v_plus.eval(y as f64)));
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::kernel::exact_kernel;
    use crate::walk::renewal::{estimate_renewal, RenewalBudget, RenewalKind, RenewalMethod};
    use crate::walk::{make_family, FamilyKind};

    fn lattice_ctx(top: usize) -> LocalContext {
        let fam = make_family(FamilyKind::LazyLattice { p: 0.3 }).unwrap();
        let grid: Vec<f64> = (0..=top).map(|k| k as f64).collect();
        let b = RenewalBudget::default();
        let vm = estimate_renewal(&fam, RenewalKind::VMinus, &grid, &b, RenewalMethod::Exact).unwrap();
        let vp = estimate_renewal(&fam, RenewalKind::VPlus, &grid, &b, RenewalMethod::Exact).unwrap();
        LocalContext::new(fam, vm, vp)
    }

    #[test]
    fn windows_are_enforced() {
        let ctx = lattice_ctx(10);
        let a_n = ctx.family.scaling().a(2000);
        let e = local_limit_prediction(LocalCase::XYsmall, &ctx, 2000, a_n, 0.0);
        assert!(matches!(e, Err(Error::RegimeMismatch { .. })));
        let e = local_limit_prediction(LocalCase::XYbig, &ctx, 2000, 0.0, a_n);
        assert!(matches!(e, Err(Error::RegimeMismatch { .. })));
        let e = local_limit_prediction(LocalCase::Xsmall, &ctx, 2000, 0.0, 1.0);
        assert!(matches!(e, Err(Error::DependencyMissing(_))));
    }

    #[test]
    fn xy_small_matches_exact_kernel() {
        let ctx = lattice_ctx(10);
        let k = exact_kernel(&ctx.family, 2000, 0).unwrap();
        for y in [0usize, 2] {
            let pred = local_limit_prediction(LocalCase::XYsmall, &ctx, 2000, 0.0, y as f64).unwrap();
            let r = pred / k.q(2000, y as i64);
            assert!((0.85..=1.15).contains(&r), "y={y}: ratio {r}");
        }
        let c = fit_domination_constant(&k, &ctx.v_minus, &ctx.v_plus);
        for n in [200usize, 2000] {
            for y in 0..5 {
                assert!(k.q(n, y) <= domination_bound(c, &ctx, n, 0.0, y as f64) * (1.0 + 1e-12));
            }
        }
    }
}
