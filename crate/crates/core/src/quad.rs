//! Adaptive Gauss–Kronrod quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod rule with its embedded 7-point Gauss estimate.
/// Returns `(kronrod, |kronrod - gauss|)`.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive bisection on `[a, b]` until the summed error is below `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    integrate_with_error(f, a, b, tol).map(|(v, _)| v)
}

pub fn integrate_with_error<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    let mut total_err = e;
    while total_err > tol {
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureFailure {
                context: format!("[{a}, {b}]"),
                tol,
                estimate: total_err,
            });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, e_old) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval collapsed to machine resolution
            return Err(Error::QuadratureFailure {
                context: format!("[{a}, {b}] near {mid}"),
                tol,
                estimate: total_err,
            });
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        total_err += e1 + e2 - e_old;
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
    let value = pieces.iter().map(|p| p.2).sum();
    Ok((value, total_err))
}

/// Integrate piece by piece over consecutive breakpoints, splitting the
/// tolerance evenly. Useful when the integrand has kinks at known places.
pub fn integrate_breakpoints<F: Fn(f64) -> f64>(f: &F, points: &[f64], tol: f64) -> Result<f64> {
    if points.len() < 2 {
        return Ok(0.0);
    }
    let per = tol / (points.len() - 1) as f64;
    let mut sum = 0.0;
    for w in points.windows(2) {
        sum += integrate(f, w[0], w[1], per)?;
    }
    Ok(sum)
}

/// Breakpoints of `grid` strictly inside `(a, b)`, bracketed by `a` and `b`.
pub fn breakpoints_within(grid: &[f64], a: f64, b: f64) -> Vec<f64> {
    let mut pts = vec![a];
    pts.extend(grid.iter().copied().filter(|&g| g > a && g < b));
    pts.push(b);
    pts
}

/// Trapezoid rule over tabulated values.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}
