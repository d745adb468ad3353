//! Strictly stable laws: admissible parameters, density and CDF by
//! characteristic-function inversion, exact sampling and the positivity
//! parameter.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng;

/// Default absolute tolerance for density and CDF evaluation.
pub const DEFAULT_QUAD_TOL: f64 = 1e-8;

/// Parameters of the stable law with characteristic function
/// `exp(-c|w|^a (1 - i b sgn(w) tan(pi a / 2)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub beta: f64,
    pub scale: f64,
    pub rho: f64,
}

/// Validate `(alpha, beta, scale)` and fill in the positivity parameter.
///
/// `rho` is set from the closed-form arctangent expression; use
/// [`positivity_parameter`] for the Monte Carlo value.
pub fn make_params(alpha: f64, beta: f64, scale: f64) -> Result<StableParams> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NonpositiveScale(scale));
    }
    let pair_ok = alpha.is_finite()
        && beta.is_finite()
        && ((alpha > 0.0 && alpha < 2.0 && alpha != 1.0 && beta.abs() < 1.0)
            || ((alpha == 1.0 || alpha == 2.0) && beta == 0.0));
    if !pair_ok {
        return Err(Error::InadmissiblePair { alpha, beta });
    }
    let mut p = StableParams { alpha, beta, scale, rho: 0.5 };
    p.rho = p.closed_form_rho();
    Ok(p)
}

impl StableParams {
    /// `beta * tan(pi alpha / 2)`, zero whenever beta is.
    fn skew_term(&self) -> f64 {
        if self.beta == 0.0 {
            0.0
        } else {
            self.beta * (FRAC_PI_2 * self.alpha).tan()
        }
    }

    pub fn closed_form_rho(&self) -> f64 {
        if self.beta == 0.0 {
            0.5
        } else {
            0.5 + self.skew_term().atan() / (PI * self.alpha)
        }
    }

    /// Natural length unit `c^{1/alpha}`.
    pub fn unit(&self) -> f64 {
        self.scale.powf(1.0 / self.alpha)
    }

    /// `G(w)` as `(re, im)`.
    pub fn char_fn(&self, w: f64) -> (f64, f64) {
        let aw = w.abs().powf(self.alpha);
        let modulus = (-self.scale * aw).exp();
        let phase = self.scale * self.skew_term() * aw * w.signum();
        (modulus * phase.cos(), modulus * phase.sin())
    }

    fn phase(&self, w: f64) -> f64 {
        self.scale * self.skew_term() * w.powf(self.alpha)
    }

    /// Frequency beyond which `exp(-c w^alpha)` is negligible.
    fn cutoff(&self) -> f64 {
        (40.0 / self.scale).powf(1.0 / self.alpha)
    }

    /// Breakpoints on `[0, cutoff]`: panels of at most one natural unit and
    /// at most half a period of `cos(w x)`.
    fn panels(&self, x: f64) -> Vec<f64> {
        let top = self.cutoff();
        let unit = 1.0 / self.unit();
        let width = unit.min(PI / x.abs().max(1e-300));
        let count = (top / width).ceil().max(1.0) as usize;
        (0..=count).map(|i| top * i as f64 / count as f64).collect()
    }

    /// Integrate `h(w)` over `[0, cutoff]` panel by panel. On the first panel
    /// the substitution `w = u^{1/alpha}` removes the `w^{alpha-1}` behaviour
    /// at the origin when `alpha < 1`.
    fn invert<F: Fn(f64) -> f64>(&self, h: F, x: f64, tol: f64, what: &str) -> Result<f64> {
        let pts = self.panels(x);
        let per = tol / pts.len() as f64;
        let mut total = 0.0;
        let mut err = 0.0;
        for (i, w) in pts.windows(2).enumerate() {
            let (v, e) = if i == 0 && self.alpha < 1.0 {
                let a = self.alpha;
                let top = w[1].powf(a);
                quad::integrate_with_error(
                    &|u: f64| {
                        let ww = u.powf(1.0 / a);
                        h(ww) * ww / (a * u)
                    },
                    0.0,
                    top,
                    per,
                )
            } else {
                quad::integrate_with_error(&h, w[0], w[1], per)
            }
            .map_err(|_| Error::QuadratureFailure {
                context: format!("{what} at {x}"),
                tol,
                estimate: f64::NAN,
            })?;
            total += v;
            err += e;
        }
        if err > tol {
            return Err(Error::QuadratureFailure { context: format!("{what} at {x}"), tol, estimate: err });
        }
        Ok(total)
    }
}

/// Monte Carlo estimate of `P(Y_1 > 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    /// Arctangent expression, for comparison.
    pub closed_form: f64,
}

/// Fraction of positive draws. Symmetric laws short-circuit to exactly 1/2.
pub fn positivity_parameter(params: &StableParams, budget: u64, seed: u64, partitions: usize) -> RhoEstimate {
    let closed_form = params.closed_form_rho();
    if params.beta == 0.0 {
        return RhoEstimate { value: 0.5, std_error: 0.0, samples: 0, closed_form };
    }
    let positives: u64 = rng::run_partitioned(seed, partitions, budget, |_, share, r| {
        (0..share).filter(|_| sample_stable(params, r) > 0.0).count() as u64
    })
    .into_iter()
    .sum();
    let n = budget.max(1) as f64;
    let value = positives as f64 / n;
    RhoEstimate { value, std_error: (value * (1.0 - value) / n).sqrt(), samples: budget, closed_form }
}

pub fn stable_density(params: &StableParams, x: f64) -> Result<f64> {
    stable_density_tol(params, x, DEFAULT_QUAD_TOL)
}

/// `g(x) = (1/pi) int_0^inf exp(-c w^a) cos(theta(w) - w x) dw`.
pub fn stable_density_tol(params: &StableParams, x: f64, tol: f64) -> Result<f64> {
    let c = params.scale;
    let a = params.alpha;
    let v = params.invert(
        |w| (-c * w.powf(a)).exp() * (params.phase(w) - w * x).cos(),
        x,
        tol * PI,
        "density",
    )?;
    Ok((v / PI).max(0.0))
}

pub fn stable_cdf(params: &StableParams, z: f64) -> Result<f64> {
    stable_cdf_tol(params, z, DEFAULT_QUAD_TOL)
}

/// Gil-Pelaez inversion:
/// `F(z) = 1/2 - (1/pi) int_0^inf exp(-c w^a) sin(theta(w) - w z) / w dw`.
pub fn stable_cdf_tol(params: &StableParams, z: f64, tol: f64) -> Result<f64> {
    let c = params.scale;
    let a = params.alpha;
    let v = params.invert(
        |w| {
            if w == 0.0 {
                return 0.0;
            }
            (-c * w.powf(a)).exp() * (params.phase(w) - w * z).sin() / w
        },
        z,
        tol * PI,
        "cdf",
    )?;
    Ok((0.5 - v / PI).clamp(0.0, 1.0))
}

/// Chambers–Mallows–Stuck draw from the law with parameters `params`.
pub fn sample_stable<R: Rng + ?Sized>(params: &StableParams, rng: &mut R) -> f64 {
    let a = params.alpha;
    if a == 2.0 {
        let z: f64 = rng.sample(StandardNormal);
        return (2.0 * params.scale).sqrt() * z;
    }
    let v = PI * (rng.random::<f64>() - 0.5);
    if a == 1.0 {
        return params.scale * v.tan();
    }
    let w: f64 = rng.sample(Exp1);
    let t = params.skew_term();
    let b = t.atan() / a;
    let s = (1.0 + t * t).powf(1.0 / (2.0 * a));
    let x = s * (a * (v + b)).sin() / v.cos().powf(1.0 / a)
        * ((v - a * (v + b)).cos() / w).powf((1.0 - a) / a);
    params.unit() * x
}

/// Tabulated density for fast repeated evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityTable {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub params: StableParams,
    pub quad_tol: f64,
}

impl DensityTable {
    pub fn build(params: &StableParams, grid: Vec<f64>, quad_tol: f64) -> Result<Self> {
        let values = grid
            .iter()
            .map(|&x| stable_density_tol(params, x, quad_tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, values, params: *params, quad_tol })
    }

    /// Uniform grid on `[-half_width, half_width]` in natural units.
    pub fn symmetric(params: &StableParams, half_width: f64, step: f64, quad_tol: f64) -> Result<Self> {
        let u = params.unit();
        let n = (half_width / step).ceil() as i64;
        let grid = (-n..=n).map(|i| i as f64 * step * u).collect();
        Self::build(params, grid, quad_tol)
    }

    /// Linear interpolation; zero off the grid.
    pub fn eval(&self, x: f64) -> f64 {
        interp_linear(&self.grid, &self.values, x).unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        quad::trapezoid(&self.grid, &self.values)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,g")?;
        for (x, g) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{x},{g}")?;
        }
        Ok(())
    }
}

/// Piecewise-linear interpolation on an increasing grid; `None` off the grid.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] || x.is_nan() {
        return None;
    }
    let i = xs.partition_point(|&g| g <= x);
    if i == n {
        return Some(ys[n - 1]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    Some(ys[i - 1] + t * (ys[i] - ys[i - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admissible_set() {
        assert_eq!(make_params(2.0, 0.0, 0.5).unwrap().rho, 0.5);
        assert!(matches!(make_params(1.0, 0.3, 1.0), Err(Error::InadmissiblePair { .. })));
        assert!(matches!(make_params(0.5, 1.0, 1.0), Err(Error::InadmissiblePair { .. })));
        assert!(matches!(make_params(1.5, -1.0, 1.0), Err(Error::InadmissiblePair { .. })));
        assert!(matches!(make_params(2.0, 0.1, 1.0), Err(Error::InadmissiblePair { .. })));
        assert!(matches!(make_params(2.5, 0.0, 1.0), Err(Error::InadmissiblePair { .. })));
        assert!(matches!(make_params(1.5, 0.0, 0.0), Err(Error::NonpositiveScale(_))));
        assert!(make_params(0.7, -0.9, 3.0).is_ok());
    }

    #[test]
    fn closed_form_rho_skewed() {
        let p = make_params(1.5, 0.5, 1.0).unwrap();
        let expected = 0.5 + (-0.5f64).atan() / (1.5 * PI);
        assert!((p.rho - expected).abs() < 1e-12);
        // positive skew pushes mass left when alpha > 1
        assert!(p.rho < 0.5);
        let q = make_params(0.5, 0.5, 1.0).unwrap();
        assert!(q.rho > 0.5);
    }

    #[test]
    fn cauchy_density_and_cdf() {
        let p = make_params(1.0, 0.0, 1.0).unwrap();
        for x in [0.0, 0.3, 1.0, 4.0, -7.5] {
            let g = stable_density(&p, x).unwrap();
            assert!((g - 1.0 / (PI * (1.0 + x * x))).abs() < 1e-8, "x={x}");
            let f = stable_cdf(&p, x).unwrap();
            assert!((f - (0.5 + x.atan() / PI)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn gaussian_density() {
        let p = make_params(2.0, 0.0, 0.5).unwrap();
        for x in [0.0, 0.5, 1.7, -2.2, 6.0] {
            let g = stable_density(&p, x).unwrap();
            let exact = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            assert!((g - exact).abs() < 1e-8, "x={x}");
        }
        assert!((stable_cdf(&p, 0.0).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn levy_like_small_alpha_is_finite() {
        let p = make_params(0.5, 0.3, 1.0).unwrap();
        let g = stable_density(&p, 0.7).unwrap();
        assert!(g.is_finite() && g > 0.0);
        let f = stable_cdf(&p, 0.7).unwrap();
        assert!(f > 0.0 && f < 1.0);
    }

    #[test]
    fn cdf_increment_matches_density_integral() {
        let p = make_params(1.5, 0.5, 1.0).unwrap();
        let (z1, z2) = (-0.8, 1.3);
        let mass = quad::integrate(&|x| stable_density(&p, x).unwrap(), z1, z2, 1e-9).unwrap();
        let diff = stable_cdf(&p, z2).unwrap() - stable_cdf(&p, z1).unwrap();
        assert!((mass - diff).abs() < 1e-6);
    }

    #[test]
    fn cdf_at_zero_is_one_minus_rho() {
        let p = make_params(1.5, 0.5, 1.0).unwrap();
        assert!((stable_cdf(&p, 0.0).unwrap() - (1.0 - p.rho)).abs() < 1e-7);
        let q = make_params(0.6, -0.4, 2.0).unwrap();
        assert!((stable_cdf(&q, 0.0).unwrap() - (1.0 - q.rho)).abs() < 1e-7);
    }

    #[test]
    fn symmetric_shortcut_is_exact() {
        let p = make_params(1.2, 0.0, 1.0).unwrap();
        let est = positivity_parameter(&p, 10, 1, 2);
        assert_eq!(est.value, 0.5);
        assert_eq!(est.samples, 0);
    }

    #[test]
    fn interpolation() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [0.0, 2.0, 4.0];
        assert_eq!(interp_linear(&xs, &ys, 2.0), Some(3.0));
        assert_eq!(interp_linear(&xs, &ys, 3.0), Some(4.0));
        assert_eq!(interp_linear(&xs, &ys, 0.0), Some(0.0));
        assert_eq!(interp_linear(&xs, &ys, 3.5), None);
    }

    #[test]
    fn table_csv_has_header() {
        let p = make_params(2.0, 0.0, 0.5).unwrap();
        let t = DensityTable::build(&p, vec![-1.0, 0.0, 1.0], 1e-8).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,g\n"));
        assert_eq!(s.lines().count(), 4);
    }
}
