//! `run_experiment`: dispatch on the configured kind, build result tables
//! and evaluate every check from those tables.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use super::config::{
    B2Params, BpreRegimeParams, Experiment, ExperimentConfig, LimitCheck, SmallDeviationParams, StableCheck,
    TcondParams, WalkCheck,
};
use super::lab::{Lab, MEANDER_SAMPLES, MEANDER_STEPS};
use super::report::{write_report, Bound, Check, ExperimentReport, Source, Table};
use super::stats::empirical_cdf;
use crate::bpre::regime::RegimeReport;
use crate::bpre::{
    check_condition_b2, run_regime_experiment, small_deviation_experiment, verify_tcond, AsymInputs, B2Budget,
    EnvironmentModel, ReferenceLaw, Regime, RegimeBudget, Verdict,
};
use crate::error::{Error, Result};
use crate::limits::constants::estimate_constants_unchecked;
use crate::limits::{
    eval_a1, eval_b_both, eval_b_curve, estimate_bridge_positivity, local_limit_prediction, BridgeConfig,
    ConstantsConfig, LocalCase, LocalContext, Sign,
};
use crate::rng;
use crate::stable::{make_params, positivity_parameter, sample_stable, stable_cdf};
use crate::walk::{exact_kernel, make_family, EndSpec, IncrementFamily, RejectionSampler, RenewalKind};

/// Tables, checks and bookkeeping collected while an experiment runs.
struct Outcome {
    tables: Vec<Table>,
    checks: Vec<Check>,
    replicas: u64,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { tables: Vec::new(), checks: Vec::new(), replicas: 0, notes: Vec::new() }
    }

    fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    fn check(&mut self, name: &str, source: Source, bound: Bound) -> Result<()> {
        let c = Check::from_tables(name, source, bound, &self.tables)?;
        self.checks.push(c);
        Ok(())
    }
}

fn at_most(value: f64) -> Bound {
    Bound::AtMost { value }
}

fn pairs(p: &[(&str, &str)]) -> Vec<(String, String)> {
    p.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn sup(table: &str, a: &str, b: &str) -> Source {
    Source::SupAbsDiff { table: table.into(), pairs: pairs(&[(a, b)]) }
}

/// Runs the experiment without writing anything. `cache` holds reusable
/// tables between runs.
pub fn run_experiment(config: &ExperimentConfig, cache: Option<&Path>) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let mut lab = Lab::new(config.seed, config.partitions, cache);
    let outcome = match &config.experiment {
        Experiment::StableCheck(p) => stable_check(config, p, &mut lab)?,
        Experiment::WalkCheck(c) => walk_check(config, c, &mut lab)?,
        Experiment::LimitLaw(c) => limit_check(config, c, &mut lab)?,
        Experiment::BpreRegime(p) => bpre_regime(config, p, &mut lab)?,
        Experiment::SmallDeviation(p) => small_deviation(config, p, &mut lab)?,
        Experiment::Tcond(p) => tcond(config, p, &mut lab)?,
        Experiment::B2Check(p) => b2_check(config, p, &mut lab)?,
    };
    let pass = outcome.checks.iter().all(|c| c.pass);
    Ok(ExperimentReport {
        config: serde_json::to_value(config)?,
        tables: outcome.tables,
        checks: outcome.checks,
        pass,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        replicas: outcome.replicas,
        provenance: lab.provenance,
        notes: outcome.notes,
    })
}

/// Runs the experiment and writes its report to `out`, or to the
/// directory named in the config.
pub fn run_and_write(config: &ExperimentConfig, cache: Option<&Path>, out: Option<&Path>) -> Result<ExperimentReport> {
    let report = run_experiment(config, cache)?;
    if let Some(dir) = out.or(config.out.as_deref()) {
        write_report(&report, dir)?;
    }
    Ok(report)
}

fn stable_check(cfg: &ExperimentConfig, p: &StableCheck, lab: &mut Lab) -> Result<Outcome> {
    let params = make_params(p.alpha, p.beta, p.scale)?;
    let pts = &p.cf_points;
    let parts = rng::run_partitioned(lab.run_seed("stable samples"), cfg.partitions, p.samples, |_, share, r| {
        let mut sums = vec![(0.0, 0.0); pts.len()];
        for _ in 0..share {
            let x = sample_stable(&params, r);
            for (s, w) in sums.iter_mut().zip(pts) {
                s.0 += (w * x).cos();
                s.1 += (w * x).sin();
            }
        }
        sums
    });
    let mut sums = vec![(0.0, 0.0); pts.len()];
    for part in &parts {
        for (s, v) in sums.iter_mut().zip(part) {
            s.0 += v.0;
            s.1 += v.1;
        }
    }
    let n = p.samples as f64;
    let mut o = Outcome::new();
    let mut t = Table::new("cf", &["w", "re", "re_exact", "im", "im_exact"]);
    for (w, s) in pts.iter().zip(&sums) {
        let (re, im) = params.char_fn(*w);
        t.push(vec![*w, s.0 / n, re, s.1 / n, im]);
    }
    o.table(t);
    o.check(
        "cf",
        Source::SupAbsDiff { table: "cf".into(), pairs: pairs(&[("re", "re_exact"), ("im", "im_exact")]) },
        at_most(cfg.tolerance("cf")?),
    )?;
    let rho = positivity_parameter(&params, p.samples, lab.run_seed("rho"), cfg.partitions);
    let mut t = Table::new("rho", &["monte_carlo", "closed_form", "std_error", "samples"]);
    t.push(vec![rho.value, rho.closed_form, rho.std_error, rho.samples as f64]);
    o.table(t);
    o.check("rho", Source::CellGap { table: "rho".into(), a: "monte_carlo".into(), b: "closed_form".into(), row: 0 }, at_most(cfg.tolerance("rho")?))?;
    o.replicas = p.samples + rho.samples;
    Ok(o)
}

fn walk_check(cfg: &ExperimentConfig, c: &WalkCheck, lab: &mut Lab) -> Result<Outcome> {
    let mut o = Outcome::new();
    match c {
        WalkCheck::Renewal { family, top } => {
            let fam = make_family(*family)?;
            let vp = lab.renewal(&fam, RenewalKind::VPlus, *top)?;
            let vm = lab.renewal(&fam, RenewalKind::VMinus, *top)?;
            let hp = lab.renewal(&fam, RenewalKind::VHatPlus, *top)?;
            let hm = lab.renewal(&fam, RenewalKind::VHatMinus, *top)?;
            let sig = cfg.tolerance("origin_sigmas")?;
            let mut origin = Table::new("origin", &["ascending", "value", "target", "allowance"]);
            for (asc, v) in [(1.0, &vp), (0.0, &vm)] {
                let target = 1.0 / (1.0 - v.zeta);
                let target_err = v.zeta_error / (1.0 - v.zeta).powi(2);
                origin.push(vec![asc, v.values[0], target, sig * (v.std_errors[0] + target_err) + 1e-9]);
            }
            o.table(origin);
            o.check(
                "origin",
                Source::GapBeyond { table: "origin".into(), a: "value".into(), b: "target".into(), allowance: "allowance".into() },
                at_most(0.0),
            )?;
            let mut hat = Table::new("hat", &["x", "v_plus", "v_hat_plus", "scaled_plus", "v_minus", "v_hat_minus", "scaled_minus"]);
            for i in 0..vp.grid.len() {
                hat.push(vec![
                    vp.grid[i],
                    vp.values[i],
                    hp.values[i],
                    (1.0 - vp.zeta) * vp.values[i],
                    vm.values[i],
                    hm.values[i],
                    (1.0 - vm.zeta) * vm.values[i],
                ]);
            }
            o.table(hat);
            let tol = cfg.tolerance("hat_relative")?;
            for (name, a, b) in [("hat_plus", "v_hat_plus", "scaled_plus"), ("hat_minus", "v_hat_minus", "scaled_minus")] {
                o.check(name, Source::SupRelDiff { table: "hat".into(), a: a.into(), b: b.into() }, at_most(tol))?;
            }
        }
        WalkCheck::Kernel { family, n, y } => {
            let fam = make_family(*family)?;
            let top = (*y).max(10);
            let vm = lab.renewal(&fam, RenewalKind::VMinus, top)?;
            let vp = lab.renewal(&fam, RenewalKind::VPlus, top)?;
            let ctx = LocalContext::new(fam, vm, vp);
            let kernel = exact_kernel(&fam, *n, 0)?;
            let exact = kernel.q(*n, *y as i64);
            let prediction = local_limit_prediction(LocalCase::XYsmall, &ctx, *n, 0.0, *y as f64)?;
            let mut t = Table::new("local", &["n", "y", "exact", "prediction"]);
            t.push(vec![*n as f64, *y as f64, exact, prediction]);
            o.table(t);
            o.check(
                "local_relative",
                Source::SupRelDiff { table: "local".into(), a: "exact".into(), b: "prediction".into() },
                at_most(cfg.tolerance("local_relative")?),
            )?;
        }
        WalkCheck::Conditioned { family, n, end, samples, max_attempts } => {
            let fam = make_family(*family)?;
            let kernel = exact_kernel(&fam, *n, 0)?;
            let end = EndSpec::AtMost(*end);
            let k = n / 2;
            let exact = kernel.marginal(k, *n, end)?;
            let cells = exact.len();
            let hist = |label: &str, dp: bool| -> Result<Vec<f64>> {
                let parts = rng::run_partitioned(lab.run_seed(label), cfg.partitions, *samples, |_, share, r| {
                    let mut h = vec![0.0; cells];
                    let mut rej = RejectionSampler::new(&fam, *n, 0.0, Some(end), *max_attempts);
                    for _ in 0..share {
                        let s = if dp {
                            kernel.sample_path(*n, end, r)?.positions[k]
                        } else {
                            rej.next_positions(r)?.0[k]
                        };
                        h[s as usize] += 1.0;
                    }
                    Ok::<_, Error>(h)
                });
                let mut h = vec![0.0; cells];
                for p in parts {
                    for (a, b) in h.iter_mut().zip(p?) {
                        *a += b;
                    }
                }
                Ok(h)
            };
            let dp = hist("dp sampler", true)?;
            let rej = hist("rejection sampler", false)?;
            let mut t = Table::new("midpoint", &["height", "dp", "rejection", "exact"]);
            for h in 0..cells {
                t.push(vec![h as f64, dp[h], rej[h], exact[h] * *samples as f64]);
            }
            o.table(t);
            o.check(
                "dp_vs_rejection",
                Source::ChiSquareP { table: "midpoint".into(), a: "dp".into(), b: "rejection".into(), min_expected: 5.0 },
                Bound::AtLeast { value: cfg.tolerance("p_value")? },
            )?;
            o.replicas = 2 * samples;
        }
    }
    Ok(o)
}

/// Conditional CDF of a lattice statistic at `points`, where height `k`
/// maps to `(k + shift) / scale`.
fn cdf_at_points(masses: &[(f64, f64)], points: &[f64]) -> Vec<f64> {
    points.iter().map(|&z| masses.iter().filter(|(x, _)| *x <= z).map(|m| m.1).sum::<f64>().min(1.0)).collect()
}

fn limit_check(cfg: &ExperimentConfig, c: &LimitCheck, lab: &mut Lab) -> Result<Outcome> {
    let mut o = Outcome::new();
    match c {
        LimitCheck::Meander { family, n_steps, samples } => {
            let fam = make_family(*family)?;
            let plus = lab.meander(&fam, Sign::Plus, *n_steps, *samples)?;
            let minus = lab.meander(&fam, Sign::Minus, *n_steps, *samples)?;
            let mut t = Table::new("meander_plus", &["w", "estimate", "rayleigh"]);
            for (w, v) in plus.grid.iter().zip(&plus.values) {
                if (0.1..=3.0 + 1e-12).contains(w) {
                    t.push(vec![*w, *v, w * (-w * w / 2.0).exp()]);
                }
            }
            o.table(t);
            o.check("rayleigh", sup("meander_plus", "estimate", "rayleigh"), at_most(cfg.tolerance("rayleigh")?))?;
            let kappa = minus.params.alpha * minus.params.rho;
            let mut t = Table::new("c_star", &["estimate", "brownian"]);
            t.push(vec![1.0 / minus.table_moment(kappa), (2.0 / PI).sqrt()]);
            o.table(t);
            o.check(
                "c_star_relative",
                Source::SupRelDiff { table: "c_star".into(), a: "estimate".into(), b: "brownian".into() },
                at_most(cfg.tolerance("c_star_relative")?),
            )?;
            o.replicas = 2 * samples;
        }
        LimitCheck::Bridge { family, n_steps, points } => {
            let fam = make_family(*family)?;
            let bc = BridgeConfig { n_steps: *n_steps, seed: lab.run_seed("bridge check"), partitions: cfg.partitions, ..Default::default() };
            let table = lab.cached("bridge_check", &(fam, bc, points), || estimate_bridge_positivity(&fam, points, points, &bc))?;
            let mut t = Table::new("bridge", &["a", "b", "estimate", "closed_form"]);
            for (i, a) in points.iter().enumerate() {
                for (j, b) in points.iter().enumerate() {
                    t.push(vec![*a, *b, table.values[i][j], 1.0 - (-2.0 * a * b).exp()]);
                }
            }
            o.table(t);
            o.check("bridge", sup("bridge", "estimate", "closed_form"), at_most(cfg.tolerance("bridge")?))?;
        }
        LimitCheck::Constants { family, ns } => {
            let fam = make_family(*family)?;
            let minus = lab.meander(&fam, Sign::Minus, MEANDER_STEPS, MEANDER_SAMPLES)?;
            let plus = lab.meander(&fam, Sign::Plus, MEANDER_STEPS, MEANDER_SAMPLES)?;
            let cc = ConstantsConfig { ns: ns.clone(), seed: lab.run_seed("constants"), partitions: cfg.partitions, ..Default::default() };
            let consts = lab.cached("constants", &(fam, &cc), || estimate_constants_unchecked(&fam, &minus, &plus, &cc))?;
            let cs = consts.c_star;
            let moment = minus.table_moment(minus.params.alpha * minus.params.rho);
            let mut t = Table::new("c_star", &["route_i", "route_i_error", "route_ii", "route_ii_error", "table_moment", "product", "one"]);
            t.push(vec![cs.route_i, cs.route_i_error, cs.route_ii, cs.route_ii_error, moment, cs.route_i * moment, 1.0]);
            o.table(t);
            let mut t = Table::new("ladder", &["n", "a_n", "tail_plus", "v_plus", "c_star"]);
            for p in &consts.per_n {
                t.push(vec![p.n as f64, p.a_n, p.tail_plus, p.v_plus, p.c_star]);
            }
            o.table(t);
            o.check(
                "route_gap",
                Source::SupRelDiff { table: "c_star".into(), a: "route_i".into(), b: "route_ii".into() },
                at_most(cfg.tolerance("route_gap")?),
            )?;
            o.check(
                "identity",
                Source::CellGap { table: "c_star".into(), a: "product".into(), b: "one".into(), row: 0 },
                at_most(cfg.tolerance("identity")?),
            )?;
        }
        LimitCheck::RegimeLaws { family, n, m, y_small, t, big_factor, points } => {
            let fam = make_family(*family)?;
            let eval = lab.law_eval(&fam)?;
            let a_m = fam.scaling().a(*m as u64);
            let kernel = exact_kernel(&fam, *n, 0)?;
            let k = n - m;
            // heights k sit at (k + 1) / a_m: the renewal function grows like x + 1
            let law = |y: f64, shift: f64| -> Result<Vec<(f64, f64)>> {
                let p = kernel.marginal(k, *n, EndSpec::AtMost(y))?;
                Ok(p.iter().enumerate().map(|(h, q)| ((h as f64 + shift) / a_m, *q)).collect())
            };
            let small = law(*y_small, 1.0)?;
            let small_raw = law(*y_small, 0.0)?;
            let mut tab = Table::new("small", &["z", "exact", "exact_unshifted", "reference"]);
            let (e, r) = (cdf_at_points(&small, points), cdf_at_points(&small_raw, points));
            for (i, z) in points.iter().enumerate() {
                tab.push(vec![*z, e[i], r[i], eval_a1(*z, &eval)?]);
            }
            o.table(tab);
            o.check("small", sup("small", "exact", "reference"), at_most(cfg.tolerance("small")?))?;

            let y2 = (t * a_m).ceil();
            let prop = law(y2, 1.0)?;
            let prop_raw = law(y2, 0.0)?;
            let mut sorted = points.clone();
            sorted.sort_by(f64::total_cmp);
            let b = eval_b_curve(&sorted, *t, &eval, 2)?;
            let mut tab = Table::new("proportional", &["z", "exact", "exact_unshifted", "reference"]);
            let (e, r) = (cdf_at_points(&prop, &sorted), cdf_at_points(&prop_raw, &sorted));
            for (i, z) in sorted.iter().enumerate() {
                tab.push(vec![*z, e[i], r[i], b[i]]);
            }
            o.table(tab);
            o.check("proportional", sup("proportional", "exact", "reference"), at_most(cfg.tolerance("proportional")?))?;

            // (S_{n-m} - S_n) / a_m against the law of -Y
            let y3 = (big_factor * a_m).ceil();
            let joint = kernel.two_time_law(k, *n, EndSpec::AtMost(y3))?;
            let mut diffs: Vec<(f64, f64)> = joint.iter().map(|&(u, v, p)| ((u as f64 - v as f64 + 0.5) / a_m, p)).collect();
            diffs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let xs: Vec<f64> = diffs.iter().map(|d| d.0).collect();
            let ws: Vec<f64> = diffs.iter().map(|d| d.1).collect();
            let ecdf = empirical_cdf(&xs, Some(&ws))?;
            let mut tab = Table::new("large", &["z", "exact", "reference"]);
            for (z, f) in ecdf.xs.iter().zip(&ecdf.values) {
                tab.push(vec![*z, *f, 1.0 - stable_cdf(&fam.stable_target, -z)?]);
            }
            o.table(tab);
            o.check(
                "large",
                Source::KsSteps { table: "large".into(), empirical: "exact".into(), reference: "reference".into() },
                at_most(cfg.tolerance("large")?),
            )?;
            o.notes.push(format!("end bounds y = {y_small}, {y2}, {y3}; a_m = {a_m}"));
        }
        LimitCheck::Continuous { family, n, m, y, accepted, max_attempts } => {
            let fam = make_family(*family)?;
            let eval = lab.law_eval(&fam)?;
            let a_m = fam.scaling().a(*m as u64);
            let end = EndSpec::AtMost(*y);
            let parts = rng::run_partitioned(lab.run_seed("continuous"), cfg.partitions, *accepted, |_, share, r| {
                let mut s = RejectionSampler::new(&fam, *n, 0.0, Some(end), *max_attempts);
                let mut out = Vec::with_capacity(share as usize);
                for _ in 0..share {
                    out.push(s.next_positions(r)?.0[n - m] / a_m);
                }
                Ok::<_, Error>((out, s.attempts))
            });
            let mut values = Vec::new();
            let mut attempts = 0;
            for p in parts {
                let (v, a) = p?;
                values.extend(v);
                attempts += a;
            }
            let ecdf = empirical_cdf(&values, None)?;
            let mut tab = Table::new("cdf", &["z", "empirical", "reference"]);
            for (z, f) in ecdf.xs.iter().zip(&ecdf.values) {
                tab.push(vec![*z, *f, eval_a1(*z, &eval)?]);
            }
            o.table(tab);
            let mut tab = Table::new("counts", &["accepted", "attempts"]);
            tab.push(vec![values.len() as f64, attempts as f64]);
            o.table(tab);
            o.check("ks", Source::KsSteps { table: "cdf".into(), empirical: "empirical".into(), reference: "reference".into() }, at_most(cfg.tolerance("ks")?))?;
            o.check(
                "accepted",
                Source::Cell { table: "counts".into(), column: "accepted".into(), row: 0 },
                Bound::AtLeast { value: cfg.tolerance("accepted")? },
            )?;
            o.replicas = values.len() as u64;
            o.notes.push(format!("A1 evaluator: {}", eval.provenance));
        }
        LimitCheck::Mixture { family, points, t } => {
            let fam = make_family(*family)?;
            let eval = lab.law_eval(&fam)?;
            let mut tab = Table::new("mixture", &["z", "nested", "mixture"]);
            for z in points {
                let (a, b) = eval_b_both(*z, *t, &eval)?;
                tab.push(vec![*z, a, b]);
            }
            o.table(tab);
            o.check("identity", sup("mixture", "nested", "mixture"), at_most(cfg.tolerance("identity")?))?;
        }
    }
    Ok(o)
}

fn regime_budget(cfg: &ExperimentConfig, replicas: u64, floor: u64, lab: &Lab) -> RegimeBudget {
    RegimeBudget { replicas, floor, seed: lab.run_seed("regime"), partitions: cfg.partitions, ..Default::default() }
}

/// CDF table, counts and frequency table of a regime report.
fn regime_tables(o: &mut Outcome, r: &RegimeReport) {
    let mut t = Table::new("cdf", &["z", "empirical", "reference"]);
    for ((z, e), g) in r.ecdf.xs.iter().zip(&r.ecdf.values).zip(&r.reference) {
        t.push(vec![*z, *e, *g]);
    }
    o.table(t);
    let mut t = Table::new("counts", &["replicas", "accepted", "saturated_excluded", "effective_sample_size"]);
    t.push(vec![r.replicas as f64, r.accepted as f64, r.saturated_excluded as f64, r.effective_sample_size]);
    o.table(t);
    o.replicas = r.replicas;
    o.notes.push(format!("statistic {}; reference {}", r.statistic, r.reference_provenance));
}

fn too_few(o: &mut Outcome, accepted: u64, floor: u64, tol: f64) -> Result<()> {
    let mut t = Table::new("counts", &["accepted", "floor"]);
    t.push(vec![accepted as f64, floor as f64]);
    o.table(t);
    o.check("accepted", Source::Cell { table: "counts".into(), column: "accepted".into(), row: 0 }, Bound::AtLeast { value: tol })
}

fn bpre_regime(cfg: &ExperimentConfig, p: &BpreRegimeParams, lab: &mut Lab) -> Result<Outcome> {
    let fam = make_family(p.family)?;
    let model = EnvironmentModel::new(fam, p.offspring);
    let eval;
    let reference = match p.regime {
        Regime::Small => {
            eval = lab.law_eval(&fam)?;
            ReferenceLaw::A1(&eval)
        }
        Regime::Proportional { t } => {
            eval = lab.law_eval(&fam)?;
            ReferenceLaw::B { eval: &eval, t }
        }
        Regime::Large => ReferenceLaw::Stable(fam.stable_target),
    };
    let pool = lab.pool(&model)?;
    let theta = lab.theta(&model, &pool)?;
    let vp = lab.renewal(&fam, RenewalKind::VPlus, 1000)?;
    let asym = AsymInputs { theta: theta.value, theta_error: theta.std_error, v_plus: &vp };
    let budget = regime_budget(cfg, p.replicas, p.floor, lab);
    let mut o = Outcome::new();
    let accepted_tol = cfg.tolerance("accepted")?;
    let r = match run_regime_experiment(&model, p.n, p.m, p.phi, p.regime, &budget, p.sampler, &reference, Some(&asym)) {
        Err(Error::TooFewAccepted { accepted, floor }) => {
            too_few(&mut o, accepted, floor, accepted_tol)?;
            o.replicas = p.replicas;
            return Ok(o);
        }
        r => r?,
    };
    regime_tables(&mut o, &r);
    let mut t = Table::new("frequency", &["frequency", "frequency_error", "prediction", "ratio", "theta", "theta_error", "residual_bound"]);
    let nan = f64::NAN;
    t.push(vec![
        r.frequency,
        r.frequency_error,
        r.prediction.unwrap_or(nan),
        r.prediction_ratio.unwrap_or(nan),
        theta.value,
        theta.std_error,
        r.residual_bound,
    ]);
    o.table(t);
    o.check("ks", Source::KsSteps { table: "cdf".into(), empirical: "empirical".into(), reference: "reference".into() }, at_most(cfg.tolerance("ks")?))?;
    o.check("accepted", Source::Cell { table: "counts".into(), column: "accepted".into(), row: 0 }, Bound::AtLeast { value: accepted_tol })?;
    let f = cfg.tolerance("frequency_factor")?;
    o.check(
        "frequency_ratio",
        Source::Cell { table: "frequency".into(), column: "ratio".into(), row: 0 },
        Bound::Between { lo: 1.0 / f, hi: f },
    )?;
    Ok(o)
}

fn small_deviation(cfg: &ExperimentConfig, p: &SmallDeviationParams, lab: &mut Lab) -> Result<Outcome> {
    let model = EnvironmentModel::new(make_family(p.family)?, p.offspring);
    let budget = regime_budget(cfg, p.replicas, p.floor, lab);
    let mut o = Outcome::new();
    let accepted_tol = cfg.tolerance("accepted")?;
    let r = match small_deviation_experiment(&model, p.n, p.phi, &budget, p.sampler) {
        Err(Error::TooFewAccepted { accepted, floor }) => {
            too_few(&mut o, accepted, floor, accepted_tol)?;
            o.replicas = p.replicas;
            return Ok(o);
        }
        r => r?,
    };
    regime_tables(&mut o, &r);
    o.check("ks", Source::KsSteps { table: "cdf".into(), empirical: "empirical".into(), reference: "reference".into() }, at_most(cfg.tolerance("ks")?))?;
    o.check("accepted", Source::Cell { table: "counts".into(), column: "accepted".into(), row: 0 }, Bound::AtLeast { value: accepted_tol })?;
    Ok(o)
}

fn tcond(cfg: &ExperimentConfig, p: &TcondParams, lab: &mut Lab) -> Result<Outcome> {
    let fam = make_family(p.family)?;
    let model = EnvironmentModel::new(fam, p.offspring);
    let eval = lab.law_eval(&fam)?;
    let pool = lab.pool(&model)?;
    let budget = RegimeBudget { floor: 1, ..regime_budget(cfg, p.replicas, 1, lab) };
    let r = verify_tcond(&model, p.n, p.m, p.phi, p.z, p.k, &budget, &eval, &pool)?;
    let mut o = Outcome::new();
    let mut t = Table::new(
        "tcond",
        &["z", "k", "lhs", "lhs_error", "rhs", "rhs_error", "a1", "e_up", "e_up_error", "event_prob", "min_h", "max_h"],
    );
    t.push(vec![r.z, r.k as f64, r.lhs, r.lhs_error, r.rhs, r.rhs_error, r.a1, r.e_up, r.e_up_error, r.event_prob, r.min_h, r.max_h]);
    o.table(t);
    o.check("gap", Source::CellGap { table: "tcond".into(), a: "lhs".into(), b: "rhs".into(), row: 0 }, at_most(cfg.tolerance("gap")?))?;
    o.replicas = r.replicas;
    Ok(o)
}

fn verdict_code(v: Verdict) -> f64 {
    match v {
        Verdict::Pass => 1.0,
        Verdict::Fail => 0.0,
    }
}

fn b2_check(cfg: &ExperimentConfig, p: &B2Params, lab: &mut Lab) -> Result<Outcome> {
    let mut o = Outcome::new();
    let mut t = Table::new("b2", &["case", "b", "alpha", "moment", "max_relative_change", "sup_gamma", "analytic", "verdict", "expected"]);
    let mut total = 0;
    for (i, c) in p.cases.iter().enumerate() {
        let fam: IncrementFamily = make_family(c.family)?;
        let model = EnvironmentModel::new(fam, c.offspring);
        let budget = B2Budget {
            base: p.base,
            doublings: p.doublings,
            seed: lab.run_seed(&format!("b2 case {i}")),
            partitions: cfg.partitions,
            ..Default::default()
        };
        let r = check_condition_b2(&model, c.b, p.eps, &budget)?;
        total += r.moments.iter().map(|m| m.0).sum::<u64>();
        t.push(vec![
            i as f64,
            c.b as f64,
            fam.stable_target.alpha,
            r.moments.last().map(|m| m.1).unwrap_or(f64::NAN),
            r.max_relative_change,
            r.sup_gamma,
            verdict_code(r.analytic),
            verdict_code(r.verdict),
            verdict_code(c.expected),
        ]);
        o.notes.push(format!("case {i}: {} {:?} b={}", r.family, c.offspring, c.b));
    }
    o.table(t);
    for i in 0..p.cases.len() {
        o.check(
            &format!("case_{i}"),
            Source::CellGap { table: "b2".into(), a: "verdict".into(), b: "expected".into(), row: i },
            at_most(0.0),
        )?;
    }
    o.replicas = total;
    Ok(o)
}
