//! Expansion of a config into an ordered list of independent checks.

use crate::config::{ExteriorPreset, SuiteConfig, SuiteName};
use stable_bregman::divergence::{
    increment_lower_constant, increment_ratio, increment_ratio_sup, moment_scan, quadratic_comparison_bounds,
    quadratic_comparison_ratio, sample_pairs, scan_comparison_ratio, PExponent,
};
use stable_bregman::forms::{
    douglas_refinement_verify, energy_comparison_verify, energy_form_p, full_space_douglas_verify, harmonicity_verify,
    poisson_extension, remainder_ad, smooth_energy_identity, trace_comparison_verify, w_constant_verify,
};
use stable_bregman::functions::Bump;
use stable_bregman::kernels::{expected_exit_time, BallDomain, StableKernel};
use stable_bregman::quadrature::QuadratureConfig;
use stable_bregman::report::VerificationReport;
use stable_bregman::stochastic::{hardy_stein_verify, mc_exit_time, WalkConfig};
use stable_bregman::variational::{
    discrete_energy, discretize, minimize_energy, nonminimizer_search, quasiminimizer_bound, quasiminimizer_ratio,
    refinement_divergence_check, MinimizeOptions,
};
use std::sync::Arc;

/// Points at which harmonicity of the extension is probed.
pub const HARMONIC_POINTS: usize = 10;
/// `|L P_D[g]|` allowed relative to the exterior pull.
pub const HARMONIC_TOLERANCE: f64 = 1e-2;
/// Slack on the quasiminimizer constant.
pub const QUASI_SLACK: f64 = 5e-2;
/// `|A_D(P_D[g])|` allowed relative to `E^p_D[P_D[g]]`.
pub const REMAINDER_TOLERANCE: f64 = 1e-2;
/// Distributions drawn per exponent for the moment identities.
pub const MOMENT_DRAWS: usize = 1000;
pub const MOMENT_TOLERANCE: f64 = 1e-10;
/// Halton pairs for the comparison scan.
pub const COMPARISON_PAIRS: usize = 10_000;
/// Distance allowed between the same-sign limit of the ratio and its lower bound.
pub const ATTAINMENT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckOutput {
    pub reports: Vec<VerificationReport>,
    pub tables: Vec<Table>,
}

impl CheckOutput {
    fn one(r: VerificationReport) -> Self {
        Self { reports: vec![r], tables: Vec::new() }
    }
}

type Job = Box<dyn Fn() -> stable_bregman::Result<CheckOutput> + Send + Sync>;

pub struct Check {
    pub suite: SuiteName,
    pub label: String,
    job: Job,
}

impl Check {
    /// Runs the check; library errors become a single failed report.
    pub fn run(&self) -> CheckOutput {
        match (self.job)() {
            Ok(out) => out,
            Err(e) => CheckOutput::one(
                VerificationReport::compare("error", "none", f64::NAN, f64::NAN, 0.0)
                    .with_pass(false)
                    .with_note(e.to_string()),
            ),
        }
    }
}

impl std::fmt::Debug for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Check({}: {})", self.suite, self.label)
    }
}

struct Context {
    cfg: SuiteConfig,
    q: QuadratureConfig,
}

impl Context {
    fn kernel(&self, alpha: f64) -> stable_bregman::Result<StableKernel> {
        self.cfg.kernel(alpha)
    }

    fn domain(&self) -> stable_bregman::Result<BallDomain> {
        self.cfg.domain()
    }

    fn center(&self) -> f64 {
        self.cfg.domain.center
    }
}

struct Planner {
    ctx: Arc<Context>,
    suite: SuiteName,
    checks: Vec<Check>,
}

impl Planner {
    fn add(&mut self, label: String, f: impl Fn(&Context) -> stable_bregman::Result<CheckOutput> + Send + Sync + 'static) {
        let ctx = self.ctx.clone();
        self.checks.push(Check { suite: self.suite, label, job: Box::new(move || f(&ctx)) });
    }
}

fn cell(v: f64) -> String {
    format!("{v:e}")
}

fn label(alpha: f64, p: Option<PExponent>, g: Option<&ExteriorPreset>) -> String {
    let mut s = format!("alpha={alpha}");
    if let Some(p) = p {
        s += &format!(" p={}", p.get());
    }
    if let Some(g) = g {
        s += &format!(" g={}", g.name());
    }
    s
}

/// Checks for `suites` in config order: suite, then `alpha`, `p`, preset.
pub fn plan(cfg: &SuiteConfig, suites: &[SuiteName]) -> Vec<Check> {
    let ctx = Arc::new(Context { cfg: cfg.clone(), q: cfg.quadrature() });
    let mut out = Vec::new();
    for &suite in suites.iter().flat_map(|s| s.expand()).collect::<Vec<_>>().iter() {
        let mut pl = Planner { ctx: ctx.clone(), suite, checks: Vec::new() };
        match suite {
            SuiteName::Douglas => douglas(&mut pl),
            SuiteName::HardyStein => hardy_stein(&mut pl),
            SuiteName::Inequalities => inequalities(&mut pl),
            SuiteName::Minimize => minimize(&mut pl),
            SuiteName::Nonminimizer => nonminimizer(&mut pl),
            SuiteName::Divergence => divergence(&mut pl),
            SuiteName::All => unreachable!("expanded above"),
        }
        out.extend(pl.checks);
    }
    out
}

fn douglas(pl: &mut Planner) {
    let cfg = pl.ctx.cfg.clone();
    for a in cfg.alphas() {
        for p in cfg.exponents() {
            for g in cfg.g.iter().cloned() {
                let gc = g.clone();
                pl.add(label(a, Some(p), Some(&g)), move |c| {
                    let (k, dom, data) = (c.kernel(a)?, c.domain()?, gc.build(c.center())?);
                    Ok(CheckOutput::one(douglas_refinement_verify(&k, &dom, &data, p, &c.q)?))
                });
                if p.get() >= 2.0 {
                    pl.add(label(a, Some(p), Some(&g)), move |c| {
                        let (k, dom, data) = (c.kernel(a)?, c.domain()?, g.build(c.center())?);
                        Ok(CheckOutput::one(full_space_douglas_verify(&k, &dom, &data, p, &c.q)?))
                    });
                }
            }
        }
        for g in cfg.g.iter().cloned() {
            pl.add(label(a, None, Some(&g)), move |c| {
                let (k, dom, data) = (c.kernel(a)?, c.domain()?, g.build(c.center())?);
                Ok(CheckOutput::one(harmonicity_verify(&k, &dom, &data, HARMONIC_POINTS, HARMONIC_TOLERANCE, &c.q)?))
            });
        }
        for p in cfg.exponents().into_iter().filter(|p| p.get() >= 2.0) {
            pl.add(label(a, Some(p), None), move |c| {
                let k = c.kernel(a)?;
                let bump = Bump { center: c.center(), radius: 0.5 * c.cfg.domain.radius, power: 3 };
                Ok(CheckOutput::one(smooth_energy_identity(&k, &bump, p, &c.q)?))
            });
        }
    }
}

fn hardy_stein(pl: &mut Planner) {
    let cfg = pl.ctx.cfg.clone();
    for a in cfg.alphas() {
        for p in cfg.exponents() {
            for g in cfg.g.iter().cloned() {
                pl.add(label(a, Some(p), Some(&g)), move |c| {
                    let (k, dom, data) = (c.kernel(a)?, c.domain()?, g.build(c.center())?);
                    let x = c.center() + c.cfg.mc.x;
                    Ok(CheckOutput::one(hardy_stein_verify(&k, &dom, &data, p, x, c.cfg.mc.n, c.cfg.mc.seed, &c.q)?))
                });
            }
        }
        pl.add(label(a, None, None), move |c| {
            let start = std::time::Instant::now();
            let (k, dom) = (c.kernel(a)?, c.domain()?);
            let x = [c.center() + c.cfg.mc.x];
            let mc = mc_exit_time(&k, &dom, &x, c.cfg.mc.n, &WalkConfig { seed: c.cfg.mc.seed, ..Default::default() })?;
            let exact = expected_exit_time(&k, &dom, &x, &c.q)?;
            let budget = 3.0 * mc.std_error + exact.error_estimate + 1e-3 * exact.value.abs();
            let r = VerificationReport::compare("exit-time", "mean-exit-time", mc.mean, exact.value, budget / exact.value.abs())
                .with_pass((mc.mean - exact.value).abs() <= budget)
                .with_seed(c.cfg.mc.seed)
                .with_budget(&c.q)
                .with_note(format!("n={} std_error={:e}", mc.n, mc.std_error));
            Ok(CheckOutput::one(r.timed(start)))
        });
    }
}

fn ratio_grid(p: PExponent) -> Vec<Vec<String>> {
    let pts: Vec<f64> = (0..=32).map(|i| -4.0 + 0.25 * i as f64).collect();
    let mut rows = Vec::new();
    for &a in &pts {
        for &b in &pts {
            if a != b {
                rows.push(vec![p.get().to_string(), a.to_string(), b.to_string(), cell(quadratic_comparison_ratio(p, a, b))]);
            }
        }
    }
    rows
}

fn inequalities(pl: &mut Planner) {
    let cfg = pl.ctx.cfg.clone();
    for p in cfg.exponents() {
        pl.add(format!("p={}", p.get()), move |_| {
            let start = std::time::Instant::now();
            let pairs = sample_pairs(COMPARISON_PAIRS);
            let mut scan = scan_comparison_ratio(p, &pairs);
            let (lo, hi) = quadratic_comparison_bounds(p);
            let mut grid = Table::new("inequality_ratio_grid", &["p", "a", "b", "ratio"]);
            grid.rows = ratio_grid(p);
            for row in &grid.rows {
                let r: f64 = row[3].parse().unwrap_or(f64::NAN);
                scan.min = scan.min.min(r);
                scan.max = scan.max.max(r);
            }
            let limit = quadratic_comparison_ratio(p, 1.0, 1.0 + 1e-4);
            let attained = (limit - lo).abs() <= ATTAINMENT_TOLERANCE;
            let mut range = Table::new(
                "inequality_ratio_range",
                &["p", "pairs", "min", "max", "lower_bound", "upper_bound", "violations"],
            );
            range.push(vec![
                p.get().to_string(),
                scan.pairs.to_string(),
                cell(scan.min),
                cell(scan.max),
                cell(lo),
                cell(hi),
                scan.violations.to_string(),
            ]);
            let r = VerificationReport::compare("comparison-scan", "quadratic-comparison", scan.min, scan.max, f64::INFINITY)
                .with_pass(scan.violations == 0 && scan.min >= lo * (1.0 - 1e-12) && scan.max <= hi * (1.0 + 1e-12) && attained)
                .with_note(format!("bracket [{lo:.6}, {hi}], {} pairs, same-sign limit {limit:.6}", scan.pairs));
            Ok(CheckOutput { reports: vec![r.timed(start)], tables: vec![range, grid] })
        });
    }
    for a in cfg.alphas() {
        for p in cfg.exponents() {
            for g in cfg.g.iter().cloned() {
                pl.add(label(a, Some(p), Some(&g)), move |c| {
                    let (k, dom, data) = (c.kernel(a)?, c.domain()?, g.build(c.center())?);
                    let ext = poisson_extension(&k, &dom, &data, &c.q)?;
                    let e = energy_comparison_verify(&k, &dom, &ext.handle(), p, &c.q)?;
                    let t = trace_comparison_verify(&k, &dom, &data, p, &c.q)?;
                    Ok(CheckOutput { reports: vec![e, t], tables: Vec::new() })
                });
            }
        }
        for p in cfg.exponents().into_iter().filter(|p| p.get() >= 2.0) {
            for g in cfg.g.iter().cloned() {
                pl.add(label(a, Some(p), Some(&g)), move |c| {
                    let (k, dom, data) = (c.kernel(a)?, c.domain()?, g.build(c.center())?);
                    Ok(CheckOutput::one(w_constant_verify(&k, &dom, &data, p, &c.q)?))
                });
            }
        }
    }
}

fn minimize(pl: &mut Planner) {
    let cfg = pl.ctx.cfg.clone();
    for a in cfg.alphas() {
        for p in cfg.exponents() {
            for g in cfg.g.iter().cloned() {
                let name = g.name();
                pl.add(label(a, Some(p), Some(&g)), move |c| {
                    let start = std::time::Instant::now();
                    let (k, dom, data) = (c.kernel(a)?, c.domain()?, g.build(c.center())?);
                    let prob = discretize(&k, &dom, &data, p, c.cfg.grid.resolution, c.cfg.grid_box(), &c.q)?;
                    let ext = poisson_extension(&k, &dom, &data, &c.q)?;
                    let u = prob.sample(&ext);
                    let opts = MinimizeOptions::default();
                    let base = discrete_energy(&prob, &u)?;
                    let m = minimize_energy(&prob, &u, &opts)?;
                    let bound = quasiminimizer_bound(p);
                    let best = m.energy();
                    let min_ok = m.converged && best <= base * (1.0 + 1e-9) && bound * best >= base * (1.0 - 1e-9);
                    let r_min = VerificationReport::compare("discrete-minimum", "extension-quasiminimal", best, base, f64::INFINITY)
                        .with_pass(min_ok)
                        .with_budget(&c.q)
                        .with_note(format!("resolution {}, sweeps {}", c.cfg.grid.resolution, m.energy_trace.len()))
                        .timed(start);
                    let start = std::time::Instant::now();
                    let seed = c.cfg.mc.seed;
                    let qm = quasiminimizer_ratio(&prob, &u, c.cfg.grid.trials, seed, &opts)?;
                    let mut pass = qm.max_ratio <= qm.k_bound + QUASI_SLACK;
                    if p.get() == 2.0 {
                        pass &= qm.max_ratio <= 1.0 + QUASI_SLACK;
                    }
                    let r_qm = VerificationReport::compare("quasiminimizer", "extension-quasiminimal", qm.max_ratio, qm.k_bound, f64::INFINITY)
                        .with_pass(pass)
                        .with_seed(seed)
                        .with_budget(&c.q)
                        .with_note(format!("{} sub-intervals", qm.trials.len()))
                        .timed(start);
                    let mut t = Table::new("quasiminimizer_trials", &["alpha", "p", "g", "first_cell", "cells", "ratio"]);
                    for &(first, count, ratio) in &qm.trials {
                        t.push(vec![a.to_string(), p.get().to_string(), name.into(), first.to_string(), count.to_string(), cell(ratio)]);
                    }
                    Ok(CheckOutput { reports: vec![r_min, r_qm], tables: vec![t] })
                });
            }
        }
        // the W form degenerates only when p ≤ α
        for p in cfg.exponents().into_iter().filter(|p| p.get() <= a) {
            pl.add(label(a, Some(p), None), move |c| {
                let k = c.kernel(a)?;
                let out = refinement_divergence_check(&k, p, &c.cfg.grid.refinement, &c.q)?;
                let mut t = Table::new("w_refinement", &["alpha", "p", "resolution", "w_form", "energy"]);
                for r in &out.rows {
                    t.push(vec![a.to_string(), p.get().to_string(), r.resolution.to_string(), cell(r.w_form), cell(r.energy)]);
                }
                Ok(CheckOutput { reports: vec![out.report], tables: vec![t] })
            });
        }
    }
}

fn nonminimizer(pl: &mut Planner) {
    let cfg = pl.ctx.cfg.clone();
    for a in cfg.alphas() {
        for p in cfg.exponents().into_iter().filter(|p| p.get() != 2.0) {
            pl.add(label(a, Some(p), None), move |c| {
                let (k, dom) = (c.kernel(a)?, c.domain()?);
                let nm = &c.cfg.nonminimizer;
                let out = nonminimizer_search(&k, &dom, p, nm.inner, nm.outer, &nm.n, &c.q)?;
                let mut t = Table::new(
                    "nonminimizer_energy_gap",
                    &["alpha", "p", "n", "energy_gap", "energy_gap_error", "exterior_moment"],
                );
                for r in &out.rows {
                    t.push(vec![
                        a.to_string(),
                        p.get().to_string(),
                        r.n.to_string(),
                        cell(r.remainder),
                        cell(r.remainder_error),
                        cell(r.drive),
                    ]);
                }
                Ok(CheckOutput { reports: vec![out.report], tables: vec![t] })
            });
        }
        for p in cfg.exponents() {
            for g in cfg.g.iter().cloned() {
                pl.add(label(a, Some(p), Some(&g)), move |c| {
                    let start = std::time::Instant::now();
                    let (k, dom, data) = (c.kernel(a)?, c.domain()?, g.build(c.center())?);
                    let ext = poisson_extension(&k, &dom, &data, &c.q)?;
                    let rem = remainder_ad(&k, &dom, &ext.handle(), p, &c.q)?;
                    let scale = energy_form_p(&k, &dom, &ext, p, &c.q)?.value.abs();
                    let mut r = VerificationReport::compare(
                        "remainder-control",
                        "douglas-identity-with-remainder",
                        rem.value,
                        0.0,
                        REMAINDER_TOLERANCE,
                    );
                    r.rel_err = if scale > 0.0 { rem.value.abs() / scale } else { rem.value.abs() };
                    let pass = r.rel_err <= REMAINDER_TOLERANCE;
                    Ok(CheckOutput::one(
                        r.with_pass(pass).with_budget(&c.q).with_note(format!("scale {scale:.6e}")).timed(start),
                    ))
                });
            }
        }
    }
}

fn divergence(pl: &mut Planner) {
    let cfg = pl.ctx.cfg.clone();
    for p in cfg.exponents() {
        pl.add(format!("p={}", p.get()), move |c| {
            let start = std::time::Instant::now();
            let seed = c.cfg.mc.seed;
            let s = moment_scan(p, MOMENT_DRAWS, seed);
            let r = VerificationReport::compare("moment-identities", "bregman-moment-identities", s.max_identity_gap, 0.0, MOMENT_TOLERANCE)
                .with_pass(s.max_identity_gap <= MOMENT_TOLERANCE && s.bound_violations == 0 && s.distributions == MOMENT_DRAWS)
                .with_seed(seed)
                .with_note(format!("{} distributions, {} p-moment bound violations", s.distributions, s.bound_violations));
            Ok(CheckOutput::one(r.timed(start)))
        });
        pl.add(format!("p={}", p.get()), move |_| {
            let start = std::time::Instant::now();
            let pairs = sample_pairs(COMPARISON_PAIRS);
            let ratios: Vec<f64> = pairs.iter().filter(|(a, b)| a != b).map(|&(a, b)| increment_ratio(p, a, b)).collect();
            let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lower = increment_lower_constant(p);
            let mut pass = lower.map_or(true, |k| min >= k * (1.0 - 1e-12));
            let mut note = format!("min {min:.6}, max {max:.6}");
            if p.get() <= 2.0 {
                let sup = increment_ratio_sup(p);
                pass &= max <= sup * (1.0 + 1e-9);
                note += &format!(", sup {sup:.6}");
            }
            let r = VerificationReport::compare("increment-bounds", "increment-comparison", min, lower.unwrap_or(0.0), f64::INFINITY)
                .with_pass(pass)
                .with_note(note);
            Ok(CheckOutput::one(r.timed(start)))
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_follows_config_order() {
        let cfg = SuiteConfig { p: vec![2.0, 3.0], ..Default::default() };
        let checks = plan(&cfg, &[SuiteName::Divergence]);
        let labels: Vec<&str> = checks.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, vec!["p=2", "p=2", "p=3", "p=3"]);
        let all = plan(&cfg, &[SuiteName::All]);
        let mut suites: Vec<SuiteName> = all.iter().map(|c| c.suite).collect();
        suites.dedup();
        assert_eq!(suites, SuiteName::EVERY[..6].to_vec());
    }

    #[test]
    fn divergence_checks_pass() {
        let cfg = SuiteConfig { p: vec![1.1, 2.0, 4.0], ..Default::default() };
        for c in plan(&cfg, &[SuiteName::Divergence]) {
            for r in c.run().reports {
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn errors_become_failed_reports() {
        let cfg = SuiteConfig { p: vec![2.0], ..Default::default() };
        let mut pl = Planner { ctx: Arc::new(Context { q: cfg.quadrature(), cfg }), suite: SuiteName::Douglas, checks: Vec::new() };
        pl.add("broken".into(), |c| Ok(CheckOutput::one(douglas_refinement_verify(&c.kernel(3.0)?, &c.domain()?, &ExteriorPreset::AnnulusBump { inner: 2.0, outer: 3.0 }.build(0.0)?, PExponent::new(2.0)?, &c.q)?)));
        let out = pl.checks[0].run();
        assert!(!out.reports[0].pass && out.reports[0].check == "error");
    }
}
