//! The constants `C*`, `C**`, `C***` and `C^` by two independent routes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::meander::{MeanderTable, Sign};
use crate::error::{Error, Result};
use crate::walk::{estimate_renewal, estimate_zeta, ladder_epoch_tail, IncrementFamily, RenewalBudget, RenewalKind, RenewalMethod};

/// One constant estimated two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoRoute {
    pub route_i: f64,
    /// Standard error plus the drift between the two largest `n`.
    pub route_i_error: f64,
    pub route_ii: f64,
    pub route_ii_error: f64,
}

impl TwoRoute {
    pub fn combined_error(&self) -> f64 {
        self.route_i_error.hypot(self.route_ii_error)
    }

    pub fn relative_gap(&self) -> f64 {
        (self.route_i - self.route_ii).abs() / self.route_ii.abs()
    }
}

/// Ladder-side quantities at one `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderProducts {
    pub n: usize,
    pub a_n: f64,
    pub tail_plus: f64,
    pub tail_minus: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub c_star: f64,
    pub c_star_star: f64,
    pub c_hat: f64,
    pub c_star3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    pub family: String,
    pub c_star: TwoRoute,
    pub c_star_star: TwoRoute,
    pub c_star3: TwoRoute,
    pub c_hat: TwoRoute,
    pub zeta: f64,
    pub per_n: Vec<LadderProducts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsConfig {
    pub ns: Vec<usize>,
    /// Walks per Monte Carlo ladder tail (continuous families).
    pub tail_walks: u64,
    pub renewal: RenewalBudget,
    /// Allowed disagreement in units of the combined error.
    pub consistency_factor: f64,
    pub seed: u64,
    pub partitions: usize,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            ns: vec![1000, 10_000],
            tail_walks: 200_000,
            renewal: RenewalBudget::default(),
            consistency_factor: 3.0,
            seed: 0,
            partitions: 4,
        }
    }
}

/// Ladder products at each `n` of the config.
pub fn ladder_products(family: &IncrementFamily, config: &ConstantsConfig) -> Result<Vec<LadderProducts>> {
    let scaling = family.scaling();
    let a_max = config.ns.iter().map(|&n| scaling.a(n as u64)).fold(0.0, f64::max);
    let grid = renewal_grid(family, a_max);
    let method = RenewalMethod::Auto;
    let v_plus = estimate_renewal(family, RenewalKind::VPlus, &grid, &config.renewal, method)?;
    let v_minus = estimate_renewal(family, RenewalKind::VMinus, &grid, &config.renewal, method)?;
    let mut out = Vec::new();
    for (i, &n) in config.ns.iter().enumerate() {
        let a_n = scaling.a(n as u64);
        let seed = config.seed.wrapping_add(i as u64);
        let tp = ladder_epoch_tail(family, n, true, config.tail_walks, seed, config.partitions).value;
        let tm = ladder_epoch_tail(family, n, false, config.tail_walks, seed ^ 0x5555, config.partitions).value;
        let vp = v_plus.eval(a_n);
        let vm = v_minus.eval(a_n);
        out.push(LadderProducts {
            n,
            a_n,
            tail_plus: tp,
            tail_minus: tm,
            v_plus: vp,
            v_minus: vm,
            c_star: tp * vp,
            c_star_star: tm * vm,
            c_hat: n as f64 * tp * tm,
            c_star3: vp * vm / n as f64,
        });
    }
    Ok(out)
}

fn renewal_grid(family: &IncrementFamily, top: f64) -> Vec<f64> {
    if family.is_lattice() {
        (0..=top.ceil() as usize).map(|k| k as f64).collect()
    } else {
        let k = 40;
        (0..=k).map(|i| top * i as f64 / k as f64).collect()
    }
}

/// Route (i) from the ladder side, route (ii) from meander moments and the
/// closed form `(1 - zeta) sin(pi rho) / pi` for `C^`. Fails when a pair of
/// routes disagrees beyond the configured multiple of its combined error.
pub fn estimate_constants(
    family: &IncrementFamily,
    meander_minus: &MeanderTable,
    meander_plus: &MeanderTable,
    config: &ConstantsConfig,
) -> Result<LimitConstants> {
    let consts = estimate_constants_unchecked(family, meander_minus, meander_plus, config)?;
    check_consistency(&consts, config.consistency_factor)?;
    Ok(consts)
}

/// Both routes without the agreement check.
pub fn estimate_constants_unchecked(
    family: &IncrementFamily,
    meander_minus: &MeanderTable,
    meander_plus: &MeanderTable,
    config: &ConstantsConfig,
) -> Result<LimitConstants> {
    if meander_minus.sign != Sign::Minus || meander_plus.sign != Sign::Plus {
        return Err(Error::InvalidConfig("meander tables passed with the wrong signs".into()));
    }
    if config.ns.is_empty() {
        return Err(Error::InvalidConfig("constants need at least one n".into()));
    }
    let per_n = ladder_products(family, config)?;
    let zeta = estimate_zeta(family, config.renewal.exact_horizon).value;
    let rho = family.stable_target.rho;

    let route_i = |pick: fn(&LadderProducts) -> f64| {
        let last = pick(per_n.last().unwrap());
        let drift = if per_n.len() > 1 { (last - pick(&per_n[per_n.len() - 2])).abs() } else { 0.0 };
        (last, drift)
    };
    let inverse_moment = |m: &MeanderTable| {
        let v = 1.0 / m.moment.value;
        (v, v * m.moment.std_error / m.moment.value)
    };

    let (cs_i, cs_i_err) = route_i(|p| p.c_star);
    let (cs_ii, cs_ii_err) = inverse_moment(meander_minus);
    let (css_i, css_i_err) = route_i(|p| p.c_star_star);
    let (css_ii, css_ii_err) = inverse_moment(meander_plus);
    let (ch_i, ch_i_err) = route_i(|p| p.c_hat);
    let ch_ii = (1.0 - zeta) * (PI * rho).sin() / PI;
    let (c3_i, c3_i_err) = route_i(|p| p.c_star3);
    let c3_ii = cs_ii * css_ii / ch_ii;
    let c3_ii_err = c3_ii * (cs_ii_err / cs_ii).hypot(css_ii_err / css_ii);

    let consts = LimitConstants {
        family: family.label(),
        c_star: TwoRoute { route_i: cs_i, route_i_error: cs_i_err, route_ii: cs_ii, route_ii_error: cs_ii_err },
        c_star_star: TwoRoute { route_i: css_i, route_i_error: css_i_err, route_ii: css_ii, route_ii_error: css_ii_err },
        c_star3: TwoRoute { route_i: c3_i, route_i_error: c3_i_err, route_ii: c3_ii, route_ii_error: c3_ii_err },
        c_hat: TwoRoute { route_i: ch_i, route_i_error: ch_i_err, route_ii: ch_ii, route_ii_error: 0.0 },
        zeta,
        per_n,
    };
    Ok(consts)
}

pub fn check_consistency(consts: &LimitConstants, factor: f64) -> Result<()> {
    for (name, r) in [
        ("C*", consts.c_star),
        ("C**", consts.c_star_star),
        ("C***", consts.c_star3),
        ("C^", consts.c_hat),
    ] {
        if !(r.route_i > 0.0 && r.route_ii > 0.0) {
            return Err(Error::InconsistentEstimates { name: name.into(), first: r.route_i, second: r.route_ii, error: 0.0 });
        }
        let err = r.combined_error();
        if (r.route_i - r.route_ii).abs() > factor * err {
            return Err(Error::InconsistentEstimates { name: name.into(), first: r.route_i, second: r.route_ii, error: err });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{make_family, FamilyKind};

    #[test]
    fn lattice_ladder_products_near_brownian_values() {
        let fam = make_family(FamilyKind::LazyLattice { p: 0.3 }).unwrap();
        let config = ConstantsConfig { ns: vec![1000, 4000], ..Default::default() };
        let per_n = ladder_products(&fam, &config).unwrap();
        let zeta = estimate_zeta(&fam, 20_000).value;
        let last = per_n.last().unwrap();
        assert!((last.c_hat / ((1.0 - zeta) / PI) - 1.0).abs() < 0.02, "{}", last.c_hat);
        assert!((last.c_star / (2.0 / PI).sqrt() - 1.0).abs() < 0.05, "{}", last.c_star);
        assert!((last.c_star - last.c_star_star).abs() < 1e-9);
    }

    #[test]
    fn consistency_check_flags_gaps() {
        let tr = |a, b| TwoRoute { route_i: a, route_i_error: 0.01, route_ii: b, route_ii_error: 0.01 };
        let mut c = LimitConstants {
            family: "x".into(),
            c_star: tr(1.0, 1.01),
            c_star_star: tr(1.0, 1.0),
            c_star3: tr(1.0, 1.0),
            c_hat: tr(0.3, 0.3),
            zeta: 0.0,
            per_n: vec![],
        };
        assert!(check_consistency(&c, 3.0).is_ok());
        c.c_hat = tr(0.3, 0.5);
        assert!(matches!(check_consistency(&c, 3.0), Err(Error::InconsistentEstimates { .. })));
    }
}
