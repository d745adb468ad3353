//! The acceptance criteria as experiment configurations. A criterion
//! passes when every experiment it runs passes all of its checks.

use std::path::Path;
use std::time::Instant;

use super::config::{
    B2Case, B2Params, BpreRegimeParams, Experiment, ExperimentConfig, LimitCheck, SmallDeviationParams, StableCheck,
    TcondParams, WalkCheck,
};
use super::report::ExperimentReport;
use super::run::run_and_write;
use crate::bpre::{OffspringKind, Regime, SamplerKind, Verdict};
use crate::walk::FamilyKind;

const LATTICE: FamilyKind = FamilyKind::LazyLattice { p: 0.3 };
const PARETO: FamilyKind = FamilyKind::TwoSidedPareto { alpha: 1.5, balance: 0.5 };

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub experiments: Vec<(&'static str, ExperimentConfig)>,
}

pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub seconds: f64,
    /// Report, or the error that stopped the experiment, by label.
    pub runs: Vec<(&'static str, Result<ExperimentReport, String>)>,
}

impl CriterionOutcome {
    /// `name=statistic (bound)` for every check, failed ones marked.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        for (label, run) in &self.runs {
            match run {
                Ok(r) => {
                    for c in &r.checks {
                        let mark = if c.pass { "" } else { " !" };
                        parts.push(format!("{label}.{}={:.4} ({}){mark}", c.name, c.statistic, c.bound));
                    }
                }
                Err(e) => parts.push(format!("{label}: error: {e}")),
            }
        }
        parts.join("; ")
    }

    pub fn line(&self) -> String {
        format!(
            "AC{:<2} {} {:<40} [{:.1}s] {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.summary()
        )
    }
}

fn cfg(experiment: Experiment, seed: u64, partitions: usize) -> ExperimentConfig {
    ExperimentConfig::new(experiment, seed, partitions)
}

/// The ten criteria at their stated sizes and tolerances.
pub fn criteria(seed: u64, partitions: usize) -> Vec<Criterion> {
    let c = |e| cfg(e, seed, partitions);
    vec![
        Criterion {
            id: 1,
            title: "C* routes and moment identity",
            experiments: vec![("constants", c(Experiment::LimitLaw(LimitCheck::Constants { family: LATTICE, ns: vec![1000, 10_000] })))],
        },
        Criterion {
            id: 2,
            title: "Brownian closed forms",
            experiments: vec![
                ("meander", c(Experiment::LimitLaw(LimitCheck::Meander { family: LATTICE, n_steps: 10_000, samples: 20_000 }))),
                ("bridge", c(Experiment::LimitLaw(LimitCheck::Bridge { family: LATTICE, n_steps: 10_000, points: vec![0.5, 1.0, 2.0] }))),
            ],
        },
        Criterion {
            id: 3,
            title: "local limit q_2000(0,0)",
            experiments: vec![("kernel", c(Experiment::WalkCheck(WalkCheck::Kernel { family: LATTICE, n: 2000, y: 0 })))],
        },
        Criterion {
            id: 4,
            title: "regime laws on exact kernels",
            experiments: vec![(
                "regimes",
                c(Experiment::LimitLaw(LimitCheck::RegimeLaws {
                    family: LATTICE,
                    n: 2000,
                    m: 100,
                    y_small: 3.0,
                    t: 1.0,
                    big_factor: 4.0,
                    points: vec![0.5, 1.0, 2.0],
                })),
            )],
        },
        Criterion {
            id: 5,
            title: "Gaussian rejection against A1",
            experiments: vec![(
                "continuous",
                c(Experiment::LimitLaw(LimitCheck::Continuous {
                    family: FamilyKind::Gaussian { sigma: 1.0 },
                    n: 1000,
                    m: 50,
                    y: 3.0,
                    accepted: 6000,
                    max_attempts: 2_000_000_000,
                })),
            )],
        },
        Criterion {
            id: 6,
            title: "BPRE regime 1 (env importance)",
            experiments: vec![(
                "regime",
                c(Experiment::BpreRegime(BpreRegimeParams {
                    family: LATTICE,
                    offspring: OffspringKind::Hybrid,
                    n: 300,
                    m: 30,
                    phi: 2.0,
                    regime: Regime::Small,
                    sampler: SamplerKind::EnvImportance,
                    replicas: 20_000,
                    floor: 1000,
                })),
            )],
        },
        Criterion {
            id: 7,
            title: "BPRE small deviation",
            experiments: vec![(
                "smalldev",
                c(Experiment::SmallDeviation(SmallDeviationParams {
                    family: LATTICE,
                    offspring: OffspringKind::Hybrid,
                    n: 300,
                    phi: 3.0,
                    sampler: SamplerKind::EnvImportance,
                    replicas: 20_000,
                    floor: 1000,
                })),
            )],
        },
        Criterion {
            id: 8,
            title: "conditioned survival identity",
            experiments: vec![(
                "tcond",
                c(Experiment::Tcond(TcondParams {
                    family: LATTICE,
                    offspring: OffspringKind::Hybrid,
                    n: 400,
                    m: 40,
                    phi: 2.0,
                    z: 1.0,
                    k: 1,
                    replicas: 20_000,
                })),
            )],
        },
        Criterion {
            id: 9,
            title: "structural identities",
            experiments: vec![
                ("renewal", c(Experiment::WalkCheck(WalkCheck::Renewal { family: LATTICE, top: 50 }))),
                ("mixture", c(Experiment::LimitLaw(LimitCheck::Mixture { family: LATTICE, points: vec![0.5, 1.0, 2.5], t: 1.0 }))),
                (
                    "samplers",
                    c(Experiment::WalkCheck(WalkCheck::Conditioned {
                        family: LATTICE,
                        n: 50,
                        end: 5.0,
                        samples: 20_000,
                        max_attempts: 1_000_000_000,
                    })),
                ),
                (
                    "cf_gauss",
                    c(Experiment::StableCheck(StableCheck {
                        alpha: 2.0,
                        beta: 0.0,
                        scale: 0.5,
                        samples: 200_000,
                        cf_points: vec![0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0],
                    })),
                ),
                (
                    "cf_skewed",
                    c(Experiment::StableCheck(StableCheck {
                        alpha: 1.5,
                        beta: 0.5,
                        scale: 1.0,
                        samples: 200_000,
                        cf_points: vec![0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0],
                    })),
                ),
            ],
        },
        Criterion {
            id: 10,
            title: "condition B2 verdicts",
            experiments: vec![(
                "b2",
                c(Experiment::B2Check(B2Params {
                    cases: vec![
                        B2Case { family: LATTICE, offspring: OffspringKind::Hybrid, b: 2, expected: Verdict::Pass },
                        B2Case { family: PARETO, offspring: OffspringKind::Hybrid, b: 2, expected: Verdict::Pass },
                        B2Case { family: PARETO, offspring: OffspringKind::Geometric, b: 1, expected: Verdict::Fail },
                    ],
                    eps: 0.1,
                    base: 20_000,
                    doublings: 2,
                })),
            )],
        },
    ]
}

/// Runs one criterion. Reports go to `out/ac<id>/<label>` when `out` is set.
pub fn run_criterion(c: &Criterion, cache: Option<&Path>, out: Option<&Path>) -> CriterionOutcome {
    let start = Instant::now();
    let mut runs = Vec::new();
    for (label, config) in &c.experiments {
        let dir = out.map(|o| o.join(format!("ac{}", c.id)).join(label));
        let r = run_and_write(config, cache, dir.as_deref()).map_err(|e| e.to_string());
        runs.push((*label, r));
    }
    let pass = runs.iter().all(|(_, r)| matches!(r, Ok(rep) if rep.pass));
    CriterionOutcome { id: c.id, title: c.title, pass, seconds: start.elapsed().as_secs_f64(), runs }
}

/// Default configuration behind a command-line subcommand such as
/// `("walk", "kernel")`: the matching acceptance experiment.
pub fn preset(group: &str, command: &str, seed: u64, partitions: usize) -> Option<ExperimentConfig> {
    let (id, label) = match (group, command) {
        ("stable", "check") => (9, "cf_skewed"),
        ("walk", "renewal") => (9, "renewal"),
        ("walk", "kernel") => (3, "kernel"),
        ("walk", "conditioned") => (9, "samplers"),
        ("limits", "meander") => (2, "meander"),
        ("limits", "bridge") => (2, "bridge"),
        ("limits", "constants") => (1, "constants"),
        ("limits", "laws") => (4, "regimes"),
        ("bpre", "regime") => (6, "regime"),
        ("bpre", "smalldev") => (7, "smalldev"),
        ("bpre", "tcond") => (8, "tcond"),
        ("bpre", "b2check") => (10, "b2"),
        _ => return None,
    };
    criteria(seed, partitions)
        .into_iter()
        .find(|c| c.id == id)?
        .experiments
        .into_iter()
        .find(|(l, _)| *l == label)
        .map(|(_, c)| c)
}

/// Whether `config` is something the subcommand may run.
pub fn matches_command(config: &ExperimentConfig, group: &str, command: &str) -> bool {
    use super::config::{LimitCheck as L, WalkCheck as W};
    match (&config.experiment, group, command) {
        (Experiment::StableCheck(_), "stable", "check") => true,
        (Experiment::WalkCheck(W::Renewal { .. }), "walk", "renewal") => true,
        (Experiment::WalkCheck(W::Kernel { .. }), "walk", "kernel") => true,
        (Experiment::WalkCheck(W::Conditioned { .. }), "walk", "conditioned") => true,
        (Experiment::LimitLaw(L::Meander { .. }), "limits", "meander") => true,
        (Experiment::LimitLaw(L::Bridge { .. }), "limits", "bridge") => true,
        (Experiment::LimitLaw(L::Constants { .. }), "limits", "constants") => true,
        (Experiment::LimitLaw(L::RegimeLaws { .. } | L::Continuous { .. } | L::Mixture { .. }), "limits", "laws") => true,
        (Experiment::BpreRegime(_), "bpre", "regime") => true,
        (Experiment::SmallDeviation(_), "bpre", "smalldev") => true,
        (Experiment::Tcond(_), "bpre", "tcond") => true,
        (Experiment::B2Check(_), "bpre", "b2check") => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_criterion_config_is_valid_and_presets_resolve() {
        let all = criteria(1, 2);
        assert_eq!(all.iter().map(|c| c.id).collect::<Vec<_>>(), (1..=10).collect::<Vec<u8>>());
        for c in &all {
            for (_, e) in &c.experiments {
                e.validate().unwrap();
            }
        }
        for (g, cmd) in [
            ("stable", "check"),
            ("walk", "renewal"),
            ("walk", "kernel"),
            ("walk", "conditioned"),
            ("limits", "meander"),
            ("limits", "bridge"),
            ("limits", "constants"),
            ("limits", "laws"),
            ("bpre", "regime"),
            ("bpre", "smalldev"),
            ("bpre", "tcond"),
            ("bpre", "b2check"),
        ] {
            let p = preset(g, cmd, 1, 2).unwrap();
            assert!(matches_command(&p, g, cmd), "{g} {cmd}");
            assert!(!matches_command(&p, "verify", "all"));
        }
        assert!(preset("walk", "nonsense", 1, 2).is_none());
    }
}
