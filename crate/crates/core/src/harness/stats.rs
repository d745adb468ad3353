//! Empirical distribution functions and goodness-of-fit statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Right-continuous step function through `(xs[i], values[i])`, zero left
/// of `xs[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCdf {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepCdf {
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|&g| g <= x);
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    /// Left limit at `x`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|&g| g < x);
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W, reference: Option<&dyn Fn(f64) -> f64>) -> std::io::Result<()> {
        writeln!(out, "z,empirical,reference")?;
        for (x, v) in self.xs.iter().zip(&self.values) {
            let r = reference.map_or(f64::NAN, |f| f(*x));
            writeln!(out, "{x},{v},{r}")?;
        }
        Ok(())
    }
}

/// Weighted empirical CDF; ties are merged.
pub fn empirical_cdf(samples: &[f64], weights: Option<&[f64]>) -> Result<StepCdf> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(w) = weights {
        if w.len() != samples.len() {
            return Err(Error::InvalidConfig("weights and samples differ in length".into()));
        }
        if w.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..samples.len()).map(weight).sum();
    if total <= 0.0 {
        return Err(Error::EmptySample);
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
    let mut xs: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    let mut acc = 0.0;
    for i in idx {
        acc += weight(i);
        if xs.last() == Some(&samples[i]) {
            *values.last_mut().unwrap() = acc / total;
        } else {
            xs.push(samples[i]);
            values.push(acc / total);
        }
    }
    *values.last_mut().unwrap() = 1.0;
    Ok(StepCdf { xs, values })
}

/// `sup |F - G|` for a continuous reference `G`, checked on both sides of
/// every jump of `F`.
pub fn ks_statistic(empirical: &StepCdf, reference: impl Fn(f64) -> f64) -> f64 {
    let mut d: f64 = 0.0;
    let mut prev = 0.0;
    for (x, v) in empirical.xs.iter().zip(&empirical.values) {
        let g = reference(*x);
        d = d.max((v - g).abs()).max((prev - g).abs());
        prev = *v;
    }
    d
}

/// `sup |F - G|` between two step functions.
pub fn ks_between(a: &StepCdf, b: &StepCdf) -> f64 {
    let mut d: f64 = 0.0;
    for x in a.xs.iter().chain(&b.xs) {
        d = d.max((a.eval(*x) - b.eval(*x)).abs());
        d = d.max((a.eval_left(*x) - b.eval_left(*x)).abs());
    }
    d
}

/// KS restricted to a set of evaluation points, both CDFs given as closures.
pub fn ks_on_points(points: &[f64], f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    points.iter().map(|&z| (f(z) - g(z)).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of counts against expected counts. Adjacent cells are
/// pooled until each expects at least `min_expected`.
pub fn chi_square_test(observed: &[f64], expected: &[f64], min_expected: f64) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::InvalidConfig("chi-square needs matching nonempty cells".into()));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (ob, ex) in observed.iter().zip(expected) {
        o += ob;
        e += ex;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::BudgetTooSmall("fewer than two chi-square cells after pooling".into()));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(ChiSquareResult { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

/// Two-sample Pearson chi-square (a 2 x K contingency table). Cells are
/// pooled left to right until the smaller sample expects `min_expected`.
pub fn chi_square_two_sample(a: &[f64], b: &[f64], min_expected: f64) -> Result<ChiSquareResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidConfig("chi-square needs matching nonempty cells".into()));
    }
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::EmptySample);
    }
    let small = na.min(nb) / (na + nb);
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut x, mut y) = (0.0, 0.0);
    for (u, v) in a.iter().zip(b) {
        x += u;
        y += v;
        if (x + y) * small >= min_expected {
            cells.push((x, y));
            x = 0.0;
            y = 0.0;
        }
    }
    if x + y > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += x;
                last.1 += y;
            }
            None => cells.push((x, y)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::BudgetTooSmall("fewer than two chi-square cells after pooling".into()));
    }
    let total = na + nb;
    let mut statistic = 0.0;
    for (x, y) in &cells {
        let col = x + y;
        let (ea, eb) = (col * na / total, col * nb / total);
        statistic += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(ChiSquareResult { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

/// Quantile of a sample by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

pub fn interquartile_range(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(quantile(&s, 0.75) - quantile(&s, 0.25))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_weights() {
        let f = empirical_cdf(&[2.0, 1.0, 3.0], None).unwrap();
        assert_eq!(f.xs, vec![1.0, 2.0, 3.0]);
        let want = [1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (v, w) in f.values.iter().zip(want) {
            assert!((v - w).abs() < 1e-15);
        }
        assert!(matches!(empirical_cdf(&[], None), Err(Error::EmptySample)));
    }

    #[test]
    fn single_weight_is_unit_step() {
        let f = empirical_cdf(&[1.0, 2.0, 3.0], Some(&[0.0, 5.0, 0.0])).unwrap();
        assert_eq!(f.eval(1.5), 0.0);
        assert_eq!(f.eval(2.0), 1.0);
    }

    #[test]
    fn ks_simple_cases() {
        let f = empirical_cdf(&[0.5], None).unwrap();
        assert!((ks_statistic(&f, |x: f64| x.clamp(0.0, 1.0)) - 0.5).abs() < 1e-15);
        let g = empirical_cdf(&[0.1, 0.4, 0.4, 0.9], None).unwrap();
        assert_eq!(ks_between(&g, &g.clone()), 0.0);
    }

    #[test]
    fn chi_square_uniform_counts() {
        let r = chi_square_test(&[25.0, 25.0, 25.0, 25.0], &[25.0; 4], 5.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 3);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_sample_contingency_by_hand() {
        // 2 x 2 table [[10, 20], [30, 40]]: the textbook statistic is
        // N (ad - bc)^2 / (row and column products)
        let r = chi_square_two_sample(&[10.0, 30.0], &[20.0, 40.0], 1.0).unwrap();
        let want = 100.0 * (10.0 * 40.0 - 30.0 * 20.0f64).powi(2) / (40.0 * 60.0 * 30.0 * 70.0);
        assert!((r.statistic - want).abs() < 1e-12, "{} vs {want}", r.statistic);
        assert_eq!(r.dof, 1);
        let same = chi_square_two_sample(&[5.0, 10.0, 15.0], &[10.0, 20.0, 30.0], 1.0).unwrap();
        assert!(same.statistic.abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weighted_matches_resampled(xs in proptest::collection::vec(-5.0f64..5.0, 1..20),
                                      ws in proptest::collection::vec(1u32..4, 20)) {
            let w: Vec<f64> = xs.iter().zip(&ws).map(|(_, &k)| k as f64).collect();
            let weighted = empirical_cdf(&xs, Some(&w)).unwrap();
            let mut multi = Vec::new();
            for (x, &k) in xs.iter().zip(&ws) {
                for _ in 0..k {
                    multi.push(*x);
                }
            }
            let plain = empirical_cdf(&multi, None).unwrap();
            prop_assert!(ks_between(&weighted, &plain) < 1e-12);
        }

        #[test]
        fn ks_matches_refined_grid(xs in proptest::collection::vec(0.0f64..1.0, 1..15)) {
            let f = empirical_cdf(&xs, None).unwrap();
            let g = |x: f64| x.clamp(0.0, 1.0).powi(2);
            let ks = ks_statistic(&f, g);
            // brute force on a refined grid including points just left of each jump
            let mut grid: Vec<f64> = (0..=10_000).map(|i| i as f64 / 10_000.0).collect();
            for x in &f.xs {
                grid.push(*x);
                grid.push(x - 1e-13);
            }
            let brute = grid.iter().map(|&x| (f.eval(x) - g(x)).abs()).fold(0.0, f64::max);
            prop_assert!((ks - brute).abs() < 1e-12, "{} vs {}", ks, brute);
        }
    }
}
