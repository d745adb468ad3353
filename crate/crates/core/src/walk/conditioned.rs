//! Walks conditioned to stay nonnegative: bridges/meanders by exact backward
//! sampling or rejection, and the h-transformed walk.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::family::IncrementFamily;
use super::kernel::{exact_kernel, EndSpec};
use super::path::WalkPath;
use super::renewal::RenewalTable;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SampleMode {
    /// Exact kernel tables, bounded lattice families only.
    DpBackward,
    Rejection { max_attempts: u64 },
}

/// Draw from `P_x(. | L_n >= 0, S_n in end)`.
///
/// The backward mode rebuilds the kernel on every call; reuse a
/// [`ConditionKernel`](super::kernel::ConditionKernel) when drawing many paths.
pub fn sample_conditioned<R: Rng + ?Sized>(
    family: &IncrementFamily,
    n: usize,
    x: f64,
    end: EndSpec,
    mode: SampleMode,
    rng: &mut R,
) -> Result<WalkPath> {
    if x < 0.0 {
        return Err(Error::InvalidConfig(format!("start {x} is negative")));
    }
    if matches!(end, EndSpec::Exact(_)) && !family.is_lattice() {
        return Err(Error::InvalidConfig("exact endpoints need a lattice family".into()));
    }
    match mode {
        SampleMode::DpBackward => {
            if x.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!("lattice start {x} is not an integer")));
            }
            let kernel = exact_kernel(family, n, x as usize)?;
            kernel.sample_path(n, end, rng)
        }
        SampleMode::Rejection { max_attempts } => {
            let mut s = RejectionSampler::new(family, n, x, Some(end), max_attempts);
            s.sample(rng).map(|(p, _)| p)
        }
    }
}

/// Reusable rejection sampler for `{L_n >= 0}` and an optional end
/// condition. Attempts stop at the first negative position.
#[derive(Debug, Clone)]
pub struct RejectionSampler<'a> {
    family: &'a IncrementFamily,
    n: usize,
    x: f64,
    end: Option<EndSpec>,
    max_attempts: u64,
    buf: Vec<f64>,
    /// Attempts used so far, over every call.
    pub attempts: u64,
    pub accepted: u64,
}

impl<'a> RejectionSampler<'a> {
    pub fn new(family: &'a IncrementFamily, n: usize, x: f64, end: Option<EndSpec>, max_attempts: u64) -> Self {
        Self { family, n, x, end, max_attempts, buf: Vec::with_capacity(n), attempts: 0, accepted: 0 }
    }

    /// Next accepted positions `S_0..S_n` written into an internal buffer.
    /// Returns the attempts spent on this draw.
    pub fn next_positions<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(&[f64], u64)> {
        let mut spent = 0u64;
        'attempt: loop {
            if spent >= self.max_attempts {
                self.attempts += spent;
                return Err(Error::RejectionBudgetExceeded(spent));
            }
            spent += 1;
            self.buf.clear();
            self.buf.push(self.x);
            let mut s = self.x;
            for _ in 0..self.n {
                s += self.family.sample_step(rng);
                if s < 0.0 {
                    continue 'attempt;
                }
                self.buf.push(s);
            }
            if let Some(end) = self.end {
                if !end.holds(s) {
                    continue;
                }
            }
            self.attempts += spent;
            self.accepted += 1;
            return Ok((&self.buf, spent));
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(WalkPath, u64)> {
        let (pos, spent) = self.next_positions(rng)?;
        Ok((WalkPath::from_positions(pos), spent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HMode {
    /// Rejection on `{L_n >= 0}` with weight `V(S_n) / V(x)`.
    RejectionWeighted { max_attempts: u64 },
    /// Markov chain with kernel `p(s) V(h + s) / V(h)`; weight one.
    /// Bounded lattice families only.
    DoobChain,
}

/// One path of the walk conditioned to stay nonnegative forever, observed
/// up to time `n`, with its importance weight. `v_minus` must be the weak
/// descending renewal function (any positive multiple works).
pub fn sample_h_transform<R: Rng + ?Sized>(
    family: &IncrementFamily,
    n: usize,
    x: f64,
    v_minus: &RenewalTable,
    mode: HMode,
    rng: &mut R,
) -> Result<(WalkPath, f64)> {
    if x < 0.0 {
        return Err(Error::InvalidConfig(format!("start {x} is negative")));
    }
    match mode {
        HMode::RejectionWeighted { max_attempts } => {
            let mut s = RejectionSampler::new(family, n, x, None, max_attempts);
            let (path, _) = s.sample(rng)?;
            let w = v_minus.eval(path.end()) / v_minus.eval(x);
            Ok((path, w))
        }
        HMode::DoobChain => {
            let pmf = family
                .step_pmf()
                .ok_or_else(|| Error::InvalidConfig("Doob chain needs a bounded lattice family".into()))?;
            let mut h = x;
            let mut positions = Vec::with_capacity(n + 1);
            positions.push(h);
            let mut opts: Vec<(f64, f64)> = Vec::with_capacity(pmf.probs.len());
            for _ in 0..n {
                opts.clear();
                let mut total = 0.0;
                for (s, p) in pmf.support() {
                    let t = h + s as f64;
                    if t >= 0.0 {
                        let w = p * v_minus.eval(t);
                        opts.push((t, w));
                        total += w;
                    }
                }
                let mut u = rng.random::<f64>() * total;
                let mut next = opts[opts.len() - 1].0;
                for &(t, w) in &opts {
                    u -= w;
                    if u < 0.0 {
                        next = t;
                        break;
                    }
                }
                h = next;
                positions.push(h);
            }
            Ok((WalkPath::from_positions(&positions), 1.0))
        }
    }
}
