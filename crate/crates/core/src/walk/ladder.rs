use serde::{Deserialize, Serialize};

use super::path::WalkPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub epoch: usize,
    pub height: f64,
}

/// Weak and strict ladder sequences of one path, excluding the trivial
/// epoch 0. Heights are measured from the starting point, so they equal
/// `±S_tau` for paths started at 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LadderStats {
    pub weak_desc: Vec<LadderPoint>,
    pub weak_asc: Vec<LadderPoint>,
    pub strict_desc: Vec<LadderPoint>,
    pub strict_asc: Vec<LadderPoint>,
}

pub fn ladder_stats(path: &WalkPath) -> LadderStats {
    let s = &path.positions;
    let x0 = s[0];
    let mut out = LadderStats::default();
    let (mut wd, mut wa, mut sd, mut sa) = (x0, x0, x0, x0);
    for (n, &v) in s.iter().enumerate().skip(1) {
        if v <= wd {
            wd = v;
            out.weak_desc.push(LadderPoint { epoch: n, height: x0 - v });
        }
        if v >= wa {
            wa = v;
            out.weak_asc.push(LadderPoint { epoch: n, height: v - x0 });
        }
        if v < sd {
            sd = v;
            out.strict_desc.push(LadderPoint { epoch: n, height: x0 - v });
        }
        if v > sa {
            sa = v;
            out.strict_asc.push(LadderPoint { epoch: n, height: v - x0 });
        }
    }
    out
}
