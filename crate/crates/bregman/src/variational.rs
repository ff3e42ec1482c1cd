//! Grid discretization of `E^p_D` with fixed exterior data, exact coordinate
//! descent, quasiminimizer ratios on sub-intervals, the non-minimizer
//! construction and the refinement contrast between the `W` and `E^p` forms.
//!
//! Cells are uniform with the domain ends on cell edges. The pair weight of
//! cells `k` apart is `c h^{1−α} m(k) / k²`, where `m(k)` is the second
//! difference of `t^{3−α} / ((2−α)(3−α))`, so that quadratic increments
//! `(x − y)²` are integrated exactly over each pair of cells; the self-cell
//! moment is split between the two nearest neighbours. Mass beyond the box is
//! lumped into exact one-body terms.

use crate::divergence::{bregman_hp, french_power, PExponent};
use crate::error::{Error, Result};
use crate::forms::{energy_form_p, poisson_extension, remainder_ad, ExteriorData, MeanExitTime};
use crate::functions::{handle, AnnulusSupport, Combination, FunctionHandle, RealFunction, TruncatedPower};
use crate::kernels::{BallDomain, StableKernel};
use crate::quadrature::{integrate_pieces, pairwise_sum, QuadratureConfig};
use crate::report::VerificationReport;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Largest number of cells in a box.
pub const MAX_CELLS: usize = 1 << 16;

/// Minimum number of cells across the domain.
pub const MIN_RESOLUTION: usize = 8;

/// Uniform cells `[lo + i h, lo + (i+1) h]`, `i < n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub h: f64,
    pub n: usize,
}

impl Grid {
    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.h
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.lo + i as f64 * self.h, self.lo + (i + 1) as f64 * self.h)
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.n as f64 * self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    kernel: StableKernel,
    domain: BallDomain,
    grid: Grid,
    p: PExponent,
    /// Values on fixed cells; entries of free cells are unused.
    fixed_values: Vec<f64>,
    free: Vec<usize>,
    is_free: Vec<bool>,
    /// `weights[k]` couples cells `k` apart; `weights[0] = 0`.
    weights: Vec<f64>,
    /// One-body masses `ν(cell_i, (−∞, box_lo))` and `ν(cell_i, (box_hi, ∞))`.
    tail_left: Vec<f64>,
    tail_right: Vec<f64>,
    /// Exterior values beyond the box on each side.
    outside: [f64; 2],
    /// First cell of the domain and number of domain cells.
    domain_cells: (usize, usize),
}

/// Second difference `m(k)` of `t^{β+2} / ((β+1)(β+2))`, `β = 1 − α`.
fn moment(k: usize, beta: f64) -> f64 {
    let f2 = |t: f64| t.abs().powf(beta + 2.0) / ((beta + 1.0) * (beta + 2.0));
    let t = k as f64;
    if k >= 20 {
        // central-difference series, avoids cancellation
        let b = beta;
        let d4 = b * (b - 1.0) / t.powi(2);
        let d6 = b * (b - 1.0) * (b - 2.0) * (b - 3.0) / t.powi(4);
        t.powf(b) * (1.0 + d4 / 12.0 + d6 / 360.0)
    } else {
        f2(t + 1.0) - 2.0 * f2(t) + f2(t - 1.0)
    }
}

fn check_line(k: &StableKernel, dom: &BallDomain) -> Result<()> {
    if k.d() != 1 || dom.dim() != 1 {
        return Err(Error::Unsupported("grids are implemented for d = 1".into()));
    }
    Ok(())
}

/// Builds the discrete problem for `E^p_D` with exterior data `g`.
///
/// `bbox` is widened to whole cells and must contain every point where `g`
/// is not constant; `g` is taken constant beyond it.
pub fn discretize(
    k: &StableKernel,
    dom: &BallDomain,
    g: &ExteriorData,
    p: PExponent,
    resolution: usize,
    bbox: (f64, f64),
    q: &QuadratureConfig,
) -> Result<DiscreteProblem> {
    check_line(k, dom)?;
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidParameter(format!("resolution {resolution} is below {MIN_RESOLUTION}")));
    }
    let (lo, hi) = (dom.lo(), dom.hi());
    if !(bbox.0 < lo && bbox.1 > hi) {
        return Err(Error::InvalidParameter("the box must contain the closed domain".into()));
    }
    let h = (hi - lo) / resolution as f64;
    let left = (((lo - bbox.0) / h) - 1e-9).ceil().max(1.0) as usize;
    let right = (((bbox.1 - hi) / h) - 1e-9).ceil().max(1.0) as usize;
    let n = left + resolution + right;
    if n > MAX_CELLS {
        return Err(Error::GridTooLarge { cells: n, limit: MAX_CELLS });
    }
    let grid = Grid { lo: lo - left as f64 * h, h, n };
    let gf = g.function();
    let outside_left = gf
        .constant_on(f64::NEG_INFINITY, grid.lo)
        .ok_or_else(|| Error::InvalidParameter("exterior data must be constant left of the box".into()))?;
    let outside_right = gf
        .constant_on(grid.hi(), f64::INFINITY)
        .ok_or_else(|| Error::InvalidParameter("exterior data must be constant right of the box".into()))?;
    let breaks = gf.breakpoints();
    let is_free: Vec<bool> = (0..n).map(|i| i >= left && i < left + resolution).collect();
    let fixed_values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            if is_free[i] {
                return 0.0;
            }
            let (a, b) = grid.cell(i);
            match gf.constant_on(a, b) {
                Some(v) => v,
                None => integrate_pieces(&|x: f64| gf.eval(x), a, b, &breaks, q).value / h,
            }
        })
        .collect();
    let beta = 1.0 - k.alpha();
    let scale = k.c() * h.powf(beta);
    let mut weights: Vec<f64> = (0..n).map(|j| if j == 0 { 0.0 } else { scale * moment(j, beta) / (j * j) as f64 }).collect();
    if n > 1 {
        weights[1] += 0.5 * scale * moment(0, beta);
    }
    let (tail_left, tail_right): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| {
            let (a, b) = grid.cell(i);
            (k.interval_pair_mass(f64::NEG_INFINITY, grid.lo, a, b), k.interval_pair_mass(a, b, grid.hi(), f64::INFINITY))
        })
        .unzip();
    let prob = DiscreteProblem {
        kernel: *k,
        domain: dom.clone(),
        grid,
        p,
        fixed_values,
        free: (left..left + resolution).collect(),
        is_free,
        weights,
        tail_left,
        tail_right,
        outside: [outside_left, outside_right],
        domain_cells: (left, resolution),
    };
    prob.check_weights()?;
    Ok(prob)
}

impl DiscreteProblem {
    fn check_weights(&self) -> Result<()> {
        let ok = self.weights[1..].iter().all(|w| w.is_finite() && *w > 0.0)
            && self.free.iter().all(|&i| self.tail_left[i].is_finite() && self.tail_right[i].is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("pair weights must be positive and finite".into()))
        }
    }

    pub fn kernel(&self) -> &StableKernel {
        &self.kernel
    }

    pub fn domain(&self) -> &BallDomain {
        &self.domain
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn p(&self) -> PExponent {
        self.p
    }

    pub fn free_cells(&self) -> &[usize] {
        &self.free
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.is_free[i]
    }

    /// Cells of the domain as `(first, count)`.
    pub fn domain_cells(&self) -> (usize, usize) {
        self.domain_cells
    }

    /// Pair weight `w_ij`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i.abs_diff(j)]
    }

    pub fn fixed_value(&self, i: usize) -> Option<f64> {
        (!self.is_free[i]).then_some(self.fixed_values[i])
    }

    /// Same problem at another exponent.
    pub fn with_p(&self, p: PExponent) -> Self {
        Self { p, ..self.clone() }
    }

    /// Fixed values, with `f` at the centers of the free cells.
    pub fn sample(&self, f: &dyn RealFunction) -> GridFunction {
        self.fill(|i| f.eval(self.grid.center(i)))
    }

    /// Fixed values, with `value(i)` on the free cells.
    pub fn fill(&self, value: impl Fn(usize) -> f64) -> GridFunction {
        let values = (0..self.grid.n).map(|i| if self.is_free[i] { value(i) } else { self.fixed_values[i] }).collect();
        GridFunction { values }
    }

    pub fn conforms(&self, v: &GridFunction) -> bool {
        v.values.len() == self.grid.n && (0..self.grid.n).all(|i| self.is_free[i] || v.values[i] == self.fixed_values[i])
    }

    /// The problem on the cells `first..first+count` only, all other cells
    /// fixed to the values of `outside`.
    pub fn restricted(&self, first: usize, count: usize, outside: &GridFunction) -> Result<Self> {
        if !self.conforms(outside) {
            return Err(Error::InvalidParameter("exterior values do not conform to the problem".into()));
        }
        if count == 0 || first + count > self.grid.n || !(first..first + count).all(|i| self.is_free[i]) {
            return Err(Error::InvalidParameter("sub-interval must consist of free cells".into()));
        }
        let is_free: Vec<bool> = (0..self.grid.n).map(|i| i >= first && i < first + count).collect();
        Ok(Self { fixed_values: outside.values.clone(), free: (first..first + count).collect(), is_free, ..self.clone() })
    }

    /// `Σ_{i free} [Σ_{j free, j≠i} φ w_ij + 2 Σ_{j fixed} φ w_ij + 2 (tails)]`.
    fn pair_sum(&self, v: &GridFunction, phi: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
        let rows: Vec<f64> = self
            .free
            .par_iter()
            .map(|&i| {
                let vi = v.values[i];
                let mut terms = Vec::with_capacity(self.grid.n + 2);
                for (j, &vj) in v.values.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let m = if self.is_free[j] { 1.0 } else { 2.0 };
                    terms.push(m * phi(vi, vj) * self.weight(i, j));
                }
                terms.push(2.0 * phi(vi, self.outside[0]) * self.tail_left[i]);
                terms.push(2.0 * phi(vi, self.outside[1]) * self.tail_right[i]);
                pairwise_sum(&terms)
            })
            .collect();
        pairwise_sum(&rows)
    }

    /// Sums `(W, S0, S1, T)` = `Σ w`, `Σ w b`, `Σ w b^⟨p−1⟩`, `Σ w |b|^p` over the
    /// neighbours `b` of cell `i`, tails included.
    fn neighbour_sums(&self, v: &GridFunction, i: usize) -> [f64; 4] {
        let pm1 = self.p.get() - 1.0;
        let pv = self.p.get();
        let mut s = [0.0; 4];
        let mut add = |w: f64, b: f64| {
            s[0] += w;
            s[1] += w * b;
            s[2] += w * french_power(b, pm1);
            s[3] += w * b.abs().powf(pv);
        };
        for (j, &b) in v.values.iter().enumerate() {
            if j != i {
                add(self.weight(i, j), b);
            }
        }
        add(self.tail_left[i], self.outside[0]);
        add(self.tail_right[i], self.outside[1]);
        s
    }
}

/// `(1/p) Σ H_p(v_i, v_j) w_ij` over the pairs with a free cell, tails included.
pub fn discrete_energy(prob: &DiscreteProblem, v: &GridFunction) -> Result<f64> {
    if !prob.conforms(v) {
        return Err(Error::InvalidParameter("grid function does not match the fixed values".into()));
    }
    let p = prob.p;
    Ok(prob.pair_sum(v, |a, b| bregman_hp(p, a, b)) / p.get())
}

/// `Σ |v_i − v_j|^p w_ij` over the same pairs as [`discrete_energy`].
pub fn discrete_w_energy(prob: &DiscreteProblem, v: &GridFunction) -> Result<f64> {
    if !prob.conforms(v) {
        return Err(Error::InvalidParameter("grid function does not match the fixed values".into()));
    }
    let pv = prob.p.get();
    Ok(prob.pair_sum(v, |a, b| (a - b).abs().powf(pv)))
}

/// `φ(a) = W|a|^p − a S1 − a^⟨p−1⟩ S0 + T`: the part of the discrete energy
/// that depends on one free value.
fn coordinate_objective(s: &[f64; 4], p: f64, a: f64) -> f64 {
    s[0] * a.abs().powf(p) - a * s[2] - french_power(a, p - 1.0) * s[1] + s[3]
}

/// Global minimizer of [`coordinate_objective`] on `[lo, hi]`.
///
/// On each half-line `φ''` changes sign at most once, so the derivative is
/// monotone on at most four pieces; each piece is searched for a root and the
/// best candidate wins.
fn minimize_coordinate(s: &[f64; 4], p: f64, lo: f64, hi: f64) -> f64 {
    let (w, s0, s1) = (s[0], s[1], s[2]);
    let deriv = |a: f64| {
        if a == 0.0 && p < 2.0 {
            // |a|^{p−2} S0 dominates
            return if s0 > 0.0 { f64::NEG_INFINITY } else if s0 < 0.0 { f64::INFINITY } else { -s1 };
        }
        p * w * french_power(a, p - 1.0) - s1 - (p - 1.0) * a.abs().powf(p - 2.0) * s0
    };
    let mut cuts = vec![lo, hi];
    if lo < 0.0 && hi > 0.0 {
        cuts.push(0.0);
    }
    if w > 0.0 {
        for t in [(p - 2.0) * s0 / (p * w), -(p - 2.0) * s0 / (p * w)] {
            if t > lo && t < hi && t != 0.0 {
                cuts.push(t);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut candidates = cuts.clone();
    for piece in cuts.windows(2) {
        let (mut a, mut b) = (piece[0], piece[1]);
        let (da, db) = (deriv(a), deriv(b));
        if !(da < 0.0 && db > 0.0) {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if deriv(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        candidates.push(0.5 * (a + b));
    }
    candidates
        .into_iter()
        .map(|a| (coordinate_objective(s, p, a), a))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .map(|x| x.1)
        .unwrap_or(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Stop when a sweep lowers the energy by at most `tol` relative.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_sweeps: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimization {
    pub minimizer: GridFunction,
    /// Energy before the first sweep and after each sweep.
    pub energy_trace: Vec<f64>,
    pub converged: bool,
}

impl Minimization {
    pub fn energy(&self) -> f64 {
        *self.energy_trace.last().expect("trace holds the initial energy")
    }
}

/// Coordinate descent with exact one-dimensional minimization, in cell order.
pub fn minimize_energy(prob: &DiscreteProblem, init: &GridFunction, opts: &MinimizeOptions) -> Result<Minimization> {
    let mut v = init.clone();
    let mut trace = vec![discrete_energy(prob, &v)?];
    let p = prob.p.get();
    let mut converged = false;
    for _ in 0..opts.max_sweeps {
        for &i in &prob.free {
            let s = prob.neighbour_sums(&v, i);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (j, &b) in v.values.iter().enumerate() {
                if j != i {
                    lo = lo.min(b);
                    hi = hi.max(b);
                }
            }
            for (t, b) in [(prob.tail_left[i], prob.outside[0]), (prob.tail_right[i], prob.outside[1])] {
                if t > 0.0 {
                    lo = lo.min(b);
                    hi = hi.max(b);
                }
            }
            let cur = v.values[i];
            let a = minimize_coordinate(&s, p, lo, hi);
            if coordinate_objective(&s, p, a) < coordinate_objective(&s, p, cur) {
                v.values[i] = a;
            }
        }
        let e = discrete_energy(prob, &v)?;
        let prev = *trace.last().unwrap();
        // rounding in the full sum may undo a vanishing decrease
        trace.push(e.min(prev));
        if prev - e <= opts.tol * e.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(Minimization { minimizer: v, energy_trace: trace, converged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiminimizerRatio {
    pub max_ratio: f64,
    /// `p² / (2(p−1))`.
    pub k_bound: f64,
    /// `(first cell, cell count, ratio)` per trial.
    pub trials: Vec<(usize, usize, f64)>,
}

/// `p² / (2(p−1))`: the upper comparison constant 2 divided by the lower
/// one `4(p−1)/p²`.
pub fn quasiminimizer_bound(p: PExponent) -> f64 {
    let p = p.get();
    p * p / (2.0 * (p - 1.0))
}

/// Ratios `E^p_U[u] / E^p_U[v*]` over random dyadic sub-intervals `U` at
/// least two cells from the domain ends, `v*` minimizing with `u` fixed off `U`.
pub fn quasiminimizer_ratio(
    prob: &DiscreteProblem,
    u: &GridFunction,
    trials: usize,
    seed: u64,
    opts: &MinimizeOptions,
) -> Result<QuasiminimizerRatio> {
    let (first, count) = prob.domain_cells();
    if count < 8 {
        return Err(Error::InvalidParameter("need at least 8 domain cells for sub-intervals".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let usable = count - 4;
    let max_level = usable.ilog2().max(1);
    let boxes: Vec<(usize, usize)> = (0..trials)
        .map(|_| {
            let len = 1usize << rng.gen_range(1..=max_level);
            let lo = first + 2;
            let slots = (usable - len) / len + 1;
            (lo + len * rng.gen_range(0..slots), len)
        })
        .collect();
    let ratios: Vec<(usize, usize, f64)> = boxes
        .par_iter()
        .map(|&(a, len)| {
            let sub = prob.restricted(a, len, u)?;
            let base = discrete_energy(&sub, u)?;
            let best = minimize_energy(&sub, u, opts)?.energy();
            let ratio = if best > 0.0 { base / best } else { 1.0 };
            Ok((a, len, ratio))
        })
        .collect::<Result<_>>()?;
    let max_ratio = ratios.iter().map(|r| r.2).fold(1.0, f64::max);
    Ok(QuasiminimizerRatio { max_ratio, k_bound: quasiminimizer_bound(prob.p), trials: ratios })
}

/// `u_n`: `G_D[1] + P_D[g_n]` for `p > 2` and `P_D[g_n] − G_D[1]` for
/// `p < 2`, where `g_n = min((|z|−R)^{−e}, n)` on `R < |z| < R1` with
/// `e = 1/(p−1)` or `1` respectively.
pub fn nonminimizer_candidate(
    k: &StableKernel,
    dom: &BallDomain,
    p: PExponent,
    big_r: f64,
    r1: f64,
    n: f64,
    q: &QuadratureConfig,
) -> Result<(FunctionHandle, TruncatedPower)> {
    check_line(k, dom)?;
    let pv = p.get();
    if pv == 2.0 {
        return Err(Error::InvalidParameter("the Poisson extension minimizes for p = 2".into()));
    }
    if dom.center[0].abs() + dom.radius >= big_r {
        return Err(Error::InvalidParameter("the domain must lie well inside the ball of radius R".into()));
    }
    let exponent = if pv > 2.0 { 1.0 / (pv - 1.0) } else { 1.0 };
    let g = TruncatedPower { center: 0.0, annulus: AnnulusSupport::new(big_r, r1)?, exponent, cap: n };
    let ext = poisson_extension(k, dom, &ExteriorData::new(handle(g)), q)?;
    let sign = if pv > 2.0 { 1.0 } else { -1.0 };
    let u = Combination { terms: vec![(sign, handle(MeanExitTime::new(k, dom)?)), (1.0, ext.handle())] };
    Ok((handle(u), g))
}

/// `∫_{D^c} g_n^{p−1}` in closed form.
pub fn truncated_power_moment(g: &TruncatedPower, p: PExponent) -> f64 {
    let e = g.exponent * (p.get() - 1.0);
    let len = g.annulus.outer - g.annulus.inner;
    let w = g.cap_width().min(len);
    let capped = g.cap.powf(p.get() - 1.0) * w;
    let rest = if (e - 1.0).abs() < 1e-14 { (len / w).ln() } else { (len.powf(1.0 - e) - w.powf(1.0 - e)) / (1.0 - e) };
    2.0 * (capped + rest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonminimizerRow {
    pub n: f64,
    pub remainder: f64,
    pub remainder_error: f64,
    pub drive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonminimizerOutcome {
    pub report: VerificationReport,
    pub rows: Vec<NonminimizerRow>,
    /// Smallest `n` with a positive remainder.
    pub threshold: Option<f64>,
}

/// Looks for `u_n` with `A_D(u_n) > 0` and confirms `E^p_D[P_D[u_n]] > E^p_D[u_n]`.
#[allow(clippy::too_many_arguments)]
pub fn nonminimizer_search(
    k: &StableKernel,
    dom: &BallDomain,
    p: PExponent,
    big_r: f64,
    r1: f64,
    n_list: &[f64],
    q: &QuadratureConfig,
) -> Result<NonminimizerOutcome> {
    let start = Instant::now();
    let rows: Vec<NonminimizerRow> = n_list
        .par_iter()
        .map(|&n| {
            let (u, g) = nonminimizer_candidate(k, dom, p, big_r, r1, n, q)?;
            let a = remainder_ad(k, dom, &u, p, q)?;
            Ok(NonminimizerRow { n, remainder: a.value, remainder_error: a.error_estimate, drive: truncated_power_moment(&g, p) })
        })
        .collect::<Result<_>>()?;
    let threshold = rows.iter().find(|r| r.remainder > r.remainder_error).map(|r| r.n);
    let drive_grows = rows.windows(2).all(|w| w[1].drive > w[0].drive);
    let listing = rows.iter().map(|r| format!("n={} A={:.4e}", r.n, r.remainder)).collect::<Vec<_>>().join(", ");
    let report = match threshold {
        Some(n) => {
            let (u, _) = nonminimizer_candidate(k, dom, p, big_r, r1, n, q)?;
            let ext = poisson_extension(k, dom, &ExteriorData::new(u.clone()), q)?;
            let (harmonic, own) = rayon::join(|| energy_form_p(k, dom, &ext, p, q), || energy_form_p(k, dom, u.as_ref(), p, q));
            let (harmonic, own) = (harmonic?, own?);
            let pass = harmonic.value > own.value && !harmonic.divergent && !own.divergent;
            VerificationReport::compare("nonminimizer", "poisson-extension-not-minimizer", harmonic.value, own.value, 0.0)
                .with_pass(pass && drive_grows)
                .with_note(format!("threshold n={n}; {listing}"))
        }
        None => VerificationReport::compare("nonminimizer", "poisson-extension-not-minimizer", f64::NAN, f64::NAN, 0.0)
            .with_pass(false)
            .with_note(format!("inconclusive: no positive remainder; {listing}")),
    };
    let report = if drive_grows { report } else { report.with_note("exterior moment not increasing") };
    Ok(NonminimizerOutcome { report: report.with_budget(q).timed(start), rows, threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub resolution: usize,
    pub w_form: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    pub report: VerificationReport,
    pub rows: Vec<RefinementRow>,
}

/// Minimum growth of the `W` form per doubling.
pub const W_GROWTH: f64 = 1.5;
/// Maximum relative change of `E^p` per doubling.
pub const ENERGY_DRIFT: f64 = 0.1;

/// Discrete `W` and `E^p` forms of the hat `(1 − 2|x|)₊` on `D = (−1, 1)`
/// under grid refinement.
pub fn refinement_divergence_check(k: &StableKernel, p: PExponent, resolutions: &[usize], q: &QuadratureConfig) -> Result<RefinementOutcome> {
    let start = Instant::now();
    let dom = BallDomain::interval(0.0, 1.0)?;
    let zero = ExteriorData::new(handle(crate::functions::Constant(0.0)));
    let hat = crate::functions::Hat { center: 0.0, half_width: 0.5 };
    let rows: Vec<RefinementRow> = resolutions
        .par_iter()
        .map(|&n| {
            let prob = discretize(k, &dom, &zero, p, n, (-2.0, 2.0), q)?;
            let v = prob.sample(&hat);
            Ok(RefinementRow { resolution: n, w_form: discrete_w_energy(&prob, &v)?, energy: discrete_energy(&prob, &v)? })
        })
        .collect::<Result<_>>()?;
    let growth: Vec<f64> = rows.windows(2).map(|w| w[1].w_form / w[0].w_form).collect();
    let drift: Vec<f64> = rows.windows(2).map(|w| (w[1].energy - w[0].energy).abs() / w[0].energy.abs()).collect();
    let min_growth = growth.iter().copied().fold(f64::INFINITY, f64::min);
    let max_drift = drift.iter().copied().fold(0.0, f64::max);
    let pass = min_growth >= W_GROWTH && max_drift <= ENERGY_DRIFT;
    let first = rows.first().map(|r| r.w_form).unwrap_or(f64::NAN);
    let last = rows.last().map(|r| r.w_form).unwrap_or(f64::NAN);
    let report = VerificationReport::compare("w-refinement", "w-space-degeneracy", last, first, 0.0)
        .with_pass(pass)
        .with_note(format!(
            "W growth per doubling {:?} (need >= {W_GROWTH}); E drift {:?} (need <= {ENERGY_DRIFT})",
            growth.iter().map(|g| (g * 1e4).round() / 1e4).collect::<Vec<_>>(),
            drift.iter().map(|g| (g * 1e4).round() / 1e4).collect::<Vec<_>>()
        ))
        .with_budget(q)
        .timed(start);
    Ok(RefinementOutcome { report, rows })
}
