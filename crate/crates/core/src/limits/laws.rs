//! Quadrature evaluators for the limit laws `A1(z)`, `A2(z, t)` and
//! `B(z, T)`.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::bridge::BridgePositivityTable;
use super::meander::{MeanderTable, Sign};
use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::quad;
use crate::stable::{DensityTable, StableParams};

/// Largest allowed gap between the nested and mixture routes for `B`.
pub const MIXTURE_IDENTITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawKind {
    A1,
    A2,
    B,
}

/// How `C*` is chosen for the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum CStarChoice {
    /// `1 / int w^{alpha rho} g-(w) dw` over the tabulated density.
    TableMoment,
    /// Reciprocal of the sample moment stored with the meander table.
    SampleMoment,
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitLawEval {
    pub params: StableParams,
    /// `alpha rho`.
    pub kappa: f64,
    pub meander_minus: MeanderTable,
    pub bridge: BridgePositivityTable,
    pub density: DensityTable,
    pub c_star: f64,
    pub c_star_choice: CStarChoice,
    pub quad_tol: f64,
    /// Family and norming behind the meander and bridge tables.
    pub provenance: String,
    spline: CubicSpline,
    /// `cum[i] = int_0^{grid[i]} w^kappa g-(w) dw`.
    cum: Vec<f64>,
}

impl LimitLawEval {
    pub fn new(
        meander_minus: MeanderTable,
        bridge: BridgePositivityTable,
        density: DensityTable,
        choice: CStarChoice,
        quad_tol: f64,
    ) -> Result<Self> {
        if meander_minus.sign != Sign::Minus {
            return Err(Error::DependencyMissing("A1 needs the meander of the negated walk".into()));
        }
        let params = meander_minus.params;
        let kappa = params.alpha * params.rho;
        let g = &meander_minus;
        let f = |w: f64| w.powf(kappa) * g.eval(w);
        let mut cum = vec![0.0];
        for c in g.grid.windows(2) {
            let v = quad::gk15(&f, c[0], c[1]).0;
            cum.push(cum.last().unwrap() + v);
        }
        let c_star = match choice {
            CStarChoice::TableMoment => 1.0 / cum.last().unwrap(),
            CStarChoice::SampleMoment => 1.0 / g.moment.value,
            CStarChoice::Fixed(v) => v,
        };
        if !(c_star > 0.0 && c_star.is_finite()) {
            return Err(Error::DependencyMissing(format!("unusable C* = {c_star}")));
        }
        let spline = CubicSpline::new(&density.grid, &density.values);
        let m = &meander_minus.provenance;
        let provenance = format!(
            "meander: {} n={} a_n={}; bridge: {} n={}",
            m.family, m.n_steps, m.a_n, bridge.family, bridge.n_steps
        );
        Ok(Self {
            params,
            kappa,
            meander_minus,
            bridge,
            density,
            c_star,
            c_star_choice: choice,
            quad_tol,
            provenance,
            spline,
            cum,
        })
    }

    /// Stable density from the spline through the table.
    pub fn g(&self, x: f64) -> f64 {
        self.spline.eval(x).max(0.0)
    }

    fn c(&self, a: f64, b: f64) -> f64 {
        self.bridge.eval(a, b)
    }

    /// `int_0^T g(t - w) C(w, t) dt`.
    fn inner_t(&self, w: f64, t_max: f64) -> Result<f64> {
        let pts = quad::breakpoints_within(&self.bridge.b_grid, 0.0, t_max);
        quad::integrate_breakpoints(&|t| self.g(t - w) * self.c(w, t), &pts, 0.1 * self.quad_tol)
    }

    /// `int_0^z w^kappa g(t - w) C(w, t) dw`.
    fn a2_unscaled(&self, z: f64, t: f64) -> Result<f64> {
        let pts = quad::breakpoints_within(&self.bridge.a_grid, 0.0, z);
        let k = self.kappa;
        quad::integrate_breakpoints(&|w| w.powf(k) * self.g(t - w) * self.c(w, t), &pts, 0.1 * self.quad_tol)
    }
}

/// `A1(z) = C* int_0^z w^{alpha rho} g-(w) dw`.
pub fn eval_a1(z: f64, eval: &LimitLawEval) -> Result<f64> {
    if z <= 0.0 {
        return Ok(0.0);
    }
    let grid = &eval.meander_minus.grid;
    let last = *grid.last().unwrap();
    let zc = z.min(last);
    let i = grid.partition_point(|&g| g <= zc).max(1) - 1;
    let mut v = eval.cum[i];
    if zc > grid[i] {
        let k = eval.kappa;
        let g = &eval.meander_minus;
        v += quad::integrate(&|w: f64| w.powf(k) * g.eval(w), grid[i], zc, eval.quad_tol)?;
    }
    Ok(eval.c_star * v)
}

/// `A2(z, t) = t^{-alpha rho} int_0^z w^{alpha rho} g(t - w) C(w, t) dw`.
pub fn eval_a2(z: f64, t: f64, eval: &LimitLawEval) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::InvalidConfig(format!("A2 needs t > 0, got {t}")));
    }
    if z <= 0.0 {
        return Ok(0.0);
    }
    Ok(eval.a2_unscaled(z, t)? / t.powf(eval.kappa))
}

/// `B(z, T)` by nested quadrature, checked against the `A2` mixture form.
pub fn eval_b(z: f64, t_max: f64, eval: &LimitLawEval) -> Result<f64> {
    let (nested, mixture) = eval_b_both(z, t_max, eval)?;
    if (nested - mixture).abs() > MIXTURE_IDENTITY_TOL {
        return Err(Error::QuadratureFailure {
            context: format!("B({z}, {t_max}) nested {nested} vs mixture {mixture}"),
            tol: MIXTURE_IDENTITY_TOL,
            estimate: (nested - mixture).abs(),
        });
    }
    Ok(nested)
}

/// `(nested, mixture)` evaluations of `B(z, T)`:
/// `((k+1)/T^{k+1}) int_0^z w^k int_0^T g(t-w) C(w,t) dt dw` and
/// `((k+1)/T^{k+1}) int_0^T t^k A2(z, t) dt`.
pub fn eval_b_both(z: f64, t_max: f64, eval: &LimitLawEval) -> Result<(f64, f64)> {
    if t_max <= 0.0 {
        return Err(Error::InvalidConfig(format!("B needs T > 0, got {t_max}")));
    }
    if z <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let k = eval.kappa;
    let pre = (k + 1.0) / t_max.powf(k + 1.0);
    let tol = eval.quad_tol;

    let w_pts = quad::breakpoints_within(&eval.bridge.a_grid, 0.0, z);
    let err = RefCell::new(None);
    let nested = quad::integrate_breakpoints(
        &|w| match eval.inner_t(w, t_max) {
            Ok(v) => w.powf(k) * v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &w_pts,
        tol,
    )?;
    let t_pts = quad::breakpoints_within(&eval.bridge.b_grid, 0.0, t_max);
    let mixture = quad::integrate_breakpoints(
        &|t| match eval.a2_unscaled(z, t) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &t_pts,
        tol,
    )?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok((pre * nested, pre * mixture))
}

/// `B(z, T)` on an increasing list of `z` by one cumulative nested pass;
/// the mixture identity is checked at up to `checks` of the points.
pub fn eval_b_curve(zs: &[f64], t_max: f64, eval: &LimitLawEval, checks: usize) -> Result<Vec<f64>> {
    if zs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("B curve needs increasing z".into()));
    }
    let k = eval.kappa;
    let pre = (k + 1.0) / t_max.powf(k + 1.0);
    let mut out = Vec::with_capacity(zs.len());
    let mut acc = 0.0;
    let mut at = 0.0f64;
    let per = eval.quad_tol / zs.len().max(1) as f64;
    for &z in zs {
        if z <= 0.0 {
            out.push(0.0);
            continue;
        }
        let pts = quad::breakpoints_within(&eval.bridge.a_grid, at, z);
        let err = RefCell::new(None);
        acc += quad::integrate_breakpoints(
            &|w| match eval.inner_t(w, t_max) {
                Ok(v) => w.powf(k) * v,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            &pts,
            per,
        )?;
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        at = z;
        out.push(pre * acc);
    }
    if checks > 0 && !zs.is_empty() {
        let step = (zs.len() / checks).max(1);
        for i in (step - 1..zs.len()).step_by(step).take(checks) {
            let direct = eval_b(zs[i], t_max, eval)?;
            if (direct - out[i]).abs() > MIXTURE_IDENTITY_TOL {
                return Err(Error::QuadratureFailure {
                    context: format!("B curve at z = {}", zs[i]),
                    tol: MIXTURE_IDENTITY_TOL,
                    estimate: (direct - out[i]).abs(),
                });
            }
        }
    }
    Ok(out)
}

/// Evaluate one of the laws on a grid, for export.
pub fn law_curve(kind: LawKind, zs: &[f64], param: f64, eval: &LimitLawEval) -> Result<Vec<f64>> {
    match kind {
        LawKind::A1 => zs.iter().map(|&z| eval_a1(z, eval)).collect(),
        LawKind::A2 => zs.iter().map(|&z| eval_a2(z, param, eval)).collect(),
        LawKind::B => eval_b_curve(zs, param, eval, 3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::meander::{MeanderProvenance, MomentEstimate};
    use crate::stable::make_params;
    use proptest::prelude::*;
    use statrs::function::erf::erf;
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    /// Brownian tables: N(0,1) time-one law, Rayleigh meander and the
    /// reflection formula for the bridge.
    fn brownian() -> &'static LimitLawEval {
        static EVAL: OnceLock<LimitLawEval> = OnceLock::new();
        EVAL.get_or_init(|| {
            let params = make_params(2.0, 0.0, 0.5).unwrap();
            let mg = grid(0.0, 8.0, 0.005);
            let mv: Vec<f64> = mg.iter().map(|w| w * (-w * w / 2.0).exp()).collect();
            let meander = MeanderTable {
                sign: Sign::Minus,
                params,
                std_errors: vec![0.0; mg.len()],
                grid: mg,
                values: mv,
                provenance: MeanderProvenance {
                    family: "brownian".into(),
                    n_steps: 0,
                    a_n: 1.0,
                    samples: 0,
                    attempts: 0,
                    bandwidth: 0.0,
                    seed: 0,
                    partitions: 1,
                },
                moment: MomentEstimate { power: 1.0, value: (PI / 2.0).sqrt(), std_error: 0.0 },
            };
            let ag = grid(0.0, 8.0, 0.02);
            let values: Vec<Vec<f64>> =
                ag.iter().map(|a| ag.iter().map(|b| 1.0 - (-2.0 * a * b).exp()).collect()).collect();
            let bridge = BridgePositivityTable {
                params,
                family: "brownian".into(),
                n_steps: 0,
                bin_width: 0.0,
                a_grid: ag.clone(),
                b_grid: ag.clone(),
                std_errors: vec![vec![0.0; ag.len()]; ag.len()],
                values,
                binning_bias: None,
            };
            let dg = grid(-10.0, 10.0, 0.01);
            let dv: Vec<f64> = dg.iter().map(|x| (-x * x / 2.0).exp() / (2.0 * PI).sqrt()).collect();
            let density = DensityTable { grid: dg, values: dv, params, quad_tol: 1e-10 };
            LimitLawEval::new(meander, bridge, density, CStarChoice::TableMoment, 1e-9).unwrap()
        })
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn zero_at_origin() {
        let e = brownian();
        assert_eq!(eval_a1(0.0, e).unwrap(), 0.0);
        assert_eq!(eval_a2(0.0, 1.3, e).unwrap(), 0.0);
        assert_eq!(eval_b(0.0, 2.0, e).unwrap(), 0.0);
    }

    #[test]
    fn c_star_matches_rayleigh_moment() {
        assert!((brownian().c_star - (2.0 / PI).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn a1_brownian_closed_form() {
        let e = brownian();
        let inner = -(-0.5f64).exp() + (2.0 * PI).sqrt() * 0.5 * erf(1.0 / 2f64.sqrt());
        let want = (2.0 / PI).sqrt() * inner;
        let got = eval_a1(1.0, e).unwrap();
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        assert!((eval_a1(9.0, e).unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn a2_brownian_fine_grid_oracle() {
        let e = brownian();
        let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
        let want = simpson(|w| w * phi(1.0 - w) * (1.0 - (-2.0 * w).exp()), 0.0, 1.0, 20_000);
        let got = eval_a2(1.0, 1.0, e).unwrap();
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }

    #[test]
    fn b_mixture_identity_and_mass() {
        let e = brownian();
        for z in [0.5, 1.0, 2.5] {
            let (nested, mixture) = eval_b_both(z, 1.0, e).unwrap();
            assert!((nested - mixture).abs() < MIXTURE_IDENTITY_TOL, "z={z}: {nested} vs {mixture}");
        }
        let top = eval_b(7.5, 1.0, e).unwrap();
        assert!((top - 1.0).abs() < 0.05, "B(7.5, 1) = {top}");
    }

    #[test]
    fn b_curve_matches_pointwise() {
        let e = brownian();
        let zs = [0.25, 0.5, 1.0, 1.5, 2.0];
        let curve = eval_b_curve(&zs, 1.0, e, 2).unwrap();
        for (z, c) in zs.iter().zip(&curve) {
            assert!((eval_b(*z, 1.0, e).unwrap() - c).abs() < 1e-6);
        }
        assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn laws_nondecreasing_and_bounded(z in 0.0f64..5.0, dz in 0.0f64..1.0, t in 0.2f64..3.0) {
            let e = brownian();
            let tol = 1e-6;
            let a1 = (eval_a1(z, e).unwrap(), eval_a1(z + dz, e).unwrap());
            prop_assert!(a1.1 >= a1.0 - tol && a1.1 <= 1.0 + tol);
            let a2 = (eval_a2(z, t, e).unwrap(), eval_a2(z + dz, t, e).unwrap());
            prop_assert!(a2.1 >= a2.0 - tol && a2.1 <= 1.0 + tol);
        }
    }
}
