//! Exact dynamic programming for bounded integer-valued steps.

use serde::{Deserialize, Serialize};

/// Entries below this are dropped from the far tail of DP vectors.
const TAIL_CUTOFF: f64 = 1e-40;

/// `P(X = min + i) = probs[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPmf {
    pub min: i64,
    pub probs: Vec<f64>,
}

impl StepPmf {
    pub fn max(&self) -> i64 {
        self.min + self.probs.len() as i64 - 1
    }

    pub fn prob(&self, s: i64) -> f64 {
        let i = s - self.min;
        if i < 0 || i >= self.probs.len() as i64 {
            0.0
        } else {
            self.probs[i as usize]
        }
    }

    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (self.min + i as i64, p)).filter(|&(_, p)| p > 0.0)
    }

    pub fn reflected(&self) -> StepPmf {
        StepPmf { min: -self.max(), probs: self.probs.iter().rev().copied().collect() }
    }

    /// Largest downward and upward jump sizes, as nonnegative numbers.
    pub fn reach(&self) -> (usize, usize) {
        ((-self.min).max(0) as usize, self.max().max(0) as usize)
    }
}

/// One step of the walk killed on entering `(-inf, 0)`; `dist[y]` is the
/// mass at height `y`.
pub fn step_killed(pmf: &StepPmf, dist: &[f64]) -> Vec<f64> {
    let (_, up) = pmf.reach();
    let mut next = vec![0.0; dist.len() + up];
    for (y, &m) in dist.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for (s, p) in pmf.support() {
            let t = y as i64 + s;
            if t >= 0 {
                next[t as usize] += m * p;
            }
        }
    }
    next
}

/// Distribution of the free walk after `steps` steps from `x`, as
/// `(offset, masses)` with `masses[i]` at height `offset + i`.
pub fn free_distribution(pmf: &StepPmf, x: i64, steps: usize) -> (i64, Vec<f64>) {
    let mut offset = x;
    let mut dist = vec![1.0];
    let (down, up) = pmf.reach();
    for _ in 0..steps {
        let mut next = vec![0.0; dist.len() + down + up];
        for (i, &m) in dist.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (s, p) in pmf.support() {
                next[(i as i64 + s + down as i64) as usize] += m * p;
            }
        }
        offset -= down as i64;
        let lead = next.iter().take_while(|&&m| m < TAIL_CUTOFF).count();
        let trail = next.iter().rev().take_while(|&&m| m < TAIL_CUTOFF).count();
        if lead + trail < next.len() {
            next.truncate(next.len() - trail);
            next.drain(..lead);
            offset += lead as i64;
        }
        dist = next;
    }
    (offset, dist)
}

/// Final distribution of the walk from `x` killed on entering `(-inf, 0)`,
/// keeping only the latest row.
pub fn killed_distribution(pmf: &StepPmf, x: usize, steps: usize) -> Vec<f64> {
    let mut dist = vec![0.0; x + 1];
    dist[x] = 1.0;
    for _ in 0..steps {
        dist = step_killed(pmf, &dist);
        while dist.len() > x + 1 && *dist.last().unwrap() < TAIL_CUTOFF {
            dist.pop();
        }
    }
    dist
}

/// `r(u) = P_u(S_1..S_steps >= 0, S_steps in [lo, hi])` for `u` in `0..=cap`
/// where `cap` is the highest start that can still reach `hi`.
pub fn backward_to_end(pmf: &StepPmf, lo: usize, hi: usize, steps: usize) -> Vec<f64> {
    let (down, _) = pmf.reach();
    let cap = hi + steps * down;
    let mut r: Vec<f64> = (0..=cap).map(|u| if u >= lo && u <= hi { 1.0 } else { 0.0 }).collect();
    for _ in 0..steps {
        let mut next = vec![0.0; cap + 1];
        for (u, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (s, p) in pmf.support() {
                let t = u as i64 + s;
                if t >= 0 && (t as usize) <= cap {
                    acc += p * r[t as usize];
                }
            }
            *slot = acc;
        }
        r = next;
    }
    r
}

/// Walk started at `start`, kept alive while `S_k < 0` for `k >= 1` and
/// absorbed the first time `S_k >= 0`. Advanced one step at a time.
#[derive(Debug, Clone)]
pub struct AscendingPassage {
    pmf: StepPmf,
    /// `alive[d]` is the mass at `S = -1 - d`.
    alive: Vec<f64>,
    steps: usize,
    /// Cumulative absorbed mass by level `S_tau`.
    pub level_mass: Vec<f64>,
    /// Absorbed mass by level at the latest step.
    pub last_levels: Vec<f64>,
    /// Mass absorbed exactly at level 0, per step (index `n - 1`).
    pub level0_by_step: Vec<f64>,
    /// `P(tau > n)` for `n = 0, 1, ...`.
    pub alive_by_step: Vec<f64>,
    /// Mass discarded by tail trimming.
    pub dropped: f64,
    start: i64,
}

impl AscendingPassage {
    pub fn new(pmf: &StepPmf, start: i64) -> Self {
        Self {
            pmf: pmf.clone(),
            alive: Vec::new(),
            steps: 0,
            level_mass: vec![0.0; pmf.max().max(0) as usize + 1 + start.max(0) as usize],
            last_levels: Vec::new(),
            level0_by_step: Vec::new(),
            alive_by_step: vec![1.0],
            dropped: 0.0,
            start,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Mass still alive at `S = -d` (for `d >= 1`).
    pub fn alive_at_depth(&self, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            self.alive.get(d - 1).copied().unwrap_or(0.0)
        }
    }

    /// Alive masses indexed by `d - 1` where `S = -d`.
    pub fn alive(&self) -> &[f64] {
        &self.alive
    }

    pub fn alive_mass(&self) -> f64 {
        *self.alive_by_step.last().unwrap()
    }

    pub fn advance(&mut self) {
        let (down, _) = self.pmf.reach();
        let mut levels = vec![0.0; self.level_mass.len()];
        let mut next = vec![0.0; self.alive.len() + down + 1];
        let absorb = |level: i64, m: f64, levels: &mut Vec<f64>| {
            let l = level as usize;
            if l >= levels.len() {
                levels.resize(l + 1, 0.0);
            }
            levels[l] += m;
        };
        if self.steps == 0 {
            for (s, p) in self.pmf.support() {
                let t = self.start + s;
                if t >= 0 {
                    absorb(t, p, &mut levels);
                } else {
                    let d = (-1 - t) as usize;
                    if d >= next.len() {
                        next.resize(d + 1, 0.0);
                    }
                    next[d] += p;
                }
            }
        } else {
            for (d, &m) in self.alive.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for (s, p) in self.pmf.support() {
                    let nd = d as i64 - s;
                    if nd >= 0 {
                        next[nd as usize] += m * p;
                    } else {
                        absorb(-nd - 1, m * p, &mut levels);
                    }
                }
            }
        }
        while let Some(&last) = next.last() {
            if last < TAIL_CUTOFF && next.len() > 1 {
                self.dropped += last;
                next.pop();
            } else {
                break;
            }
        }
        if self.level_mass.len() < levels.len() {
            self.level_mass.resize(levels.len(), 0.0);
        }
        for (acc, m) in self.level_mass.iter_mut().zip(&levels) {
            *acc += m;
        }
        self.level0_by_step.push(levels.first().copied().unwrap_or(0.0));
        self.alive = next;
        self.alive_by_step.push(self.alive.iter().sum());
        self.last_levels = levels;
        self.steps += 1;
    }

    pub fn run(pmf: &StepPmf, start: i64, horizon: usize) -> Self {
        let mut p = Self::new(pmf, start);
        for _ in 0..horizon {
            p.advance();
        }
        p
    }
}
