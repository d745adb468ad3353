use rand::Rng;
use serde::{Deserialize, Serialize};

use super::family::IncrementFamily;

/// A realised walk `S_0 = x0, S_k = S_{k-1} + X_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    pub x0: f64,
    pub steps: Vec<f64>,
    pub positions: Vec<f64>,
    /// `min_from_1[k] = min(S_1..S_k)`; `+inf` at `k = 0`.
    pub min_from_1: Vec<f64>,
    /// `min_from_0[k] = min(S_0..S_k)`.
    pub min_from_0: Vec<f64>,
}

impl WalkPath {
    pub fn from_steps(x0: f64, steps: Vec<f64>) -> Self {
        let mut positions = Vec::with_capacity(steps.len() + 1);
        let mut min_from_1 = Vec::with_capacity(steps.len() + 1);
        let mut min_from_0 = Vec::with_capacity(steps.len() + 1);
        positions.push(x0);
        min_from_1.push(f64::INFINITY);
        min_from_0.push(x0);
        let mut s = x0;
        for &x in &steps {
            s += x;
            positions.push(s);
            min_from_1.push(min_from_1.last().unwrap().min(s));
            min_from_0.push(min_from_0.last().unwrap().min(s));
        }
        Self { x0, steps, positions, min_from_1, min_from_0 }
    }

    pub fn from_positions(positions: &[f64]) -> Self {
        assert!(!positions.is_empty(), "a path needs a starting point");
        let steps = positions.windows(2).map(|w| w[1] - w[0]).collect();
        let mut p = Self::from_steps(positions[0], steps);
        // keep the caller's values exactly rather than re-summed ones
        p.positions = positions.to_vec();
        p
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn end(&self) -> f64 {
        *self.positions.last().unwrap()
    }

    /// `L_n = min(S_1..S_n)`.
    pub fn min(&self) -> f64 {
        *self.min_from_1.last().unwrap()
    }

    /// Time-reversed increments: positions `S_n - S_{n-k}`, started at 0.
    pub fn reversed(&self) -> WalkPath {
        WalkPath::from_steps(0.0, self.steps.iter().rev().copied().collect())
    }
}

pub fn simulate_path<R: Rng + ?Sized>(family: &IncrementFamily, n: usize, x0: f64, rng: &mut R) -> WalkPath {
    let steps = (0..n).map(|_| family.sample_step(rng)).collect();
    WalkPath::from_steps(x0, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::walk::family::{make_family, FamilyKind};

    #[test]
    fn shape_and_minima() {
        let f = make_family(FamilyKind::LazyLattice { p: 0.3 }).unwrap();
        let p = simulate_path(&f, 5, 0.0, &mut substream(1, 0));
        assert_eq!(p.positions.len(), 6);
        assert_eq!(p.positions[0], 0.0);
        for k in 1..=5 {
            assert_eq!(p.positions[k], p.positions[k - 1] + p.steps[k - 1]);
            assert_eq!(p.min_from_0[k], p.x0.min(p.min_from_1[k]));
        }
    }

    #[test]
    fn reversal_preserves_endpoint() {
        let p = WalkPath::from_positions(&[0.0, 1.0, 0.0, -1.0, 1.0]);
        let r = p.reversed();
        assert_eq!(r.positions, vec![0.0, 2.0, 1.0, 0.0, 1.0]);
        assert_eq!(r.end(), p.end());
        assert_eq!(p.min(), -1.0);
    }
}
