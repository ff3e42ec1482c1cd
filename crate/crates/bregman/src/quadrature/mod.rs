//! Adaptive Gauss–Kronrod integration, dyadic endpoint shells for integrable
//! singularities (with a divergence test), off-diagonal pair integrals and
//! power-law tails.

pub mod chebyshev;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Truncation radius for unbounded integrals.
    pub tail_cut: f64,
    /// Exponent `η` of the assumed `|z|^{-d-η}` decay beyond `tail_cut`.
    pub tail_exponent_hint: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-7, abs_tol: 1e-11, max_subdivisions: 400, tail_cut: 1e4, tail_exponent_hint: 1.0 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("quadrature tolerances must be positive".into()));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::InvalidParameter("max_subdivisions must be at least 1".into()));
        }
        if !(self.tail_cut > 0.0) {
            return Err(Error::InvalidParameter("tail_cut must be positive".into()));
        }
        Ok(())
    }

    /// Same budget with both tolerances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { rel_tol: self.rel_tol * factor, abs_tol: self.abs_tol * factor, ..*self }
    }

    pub fn halved(&self) -> Self {
        self.scaled(0.5)
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationResult {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions_used: usize,
    pub converged: bool,
    pub divergent: bool,
}

impl IntegrationResult {
    pub fn zero() -> Self {
        Self { value: 0.0, error_estimate: 0.0, subdivisions_used: 0, converged: true, divergent: false }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, ..Self::zero() }
    }

    /// Sum of two independent pieces.
    pub fn plus(self, other: Self) -> Self {
        Self {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            subdivisions_used: self.subdivisions_used + other.subdivisions_used,
            converged: self.converged && other.converged,
            divergent: self.divergent || other.divergent,
        }
    }

    pub fn scale(self, s: f64) -> Self {
        Self { value: self.value * s, error_estimate: self.error_estimate * s.abs(), ..self }
    }

    pub fn sum(parts: impl IntoIterator<Item = Self>) -> Self {
        let parts: Vec<Self> = parts.into_iter().collect();
        let values: Vec<f64> = parts.iter().map(|r| r.value).collect();
        let errors: Vec<f64> = parts.iter().map(|r| r.error_estimate).collect();
        Self {
            value: pairwise_sum(&values),
            error_estimate: pairwise_sum(&errors),
            subdivisions_used: parts.iter().map(|r| r.subdivisions_used).sum(),
            converged: parts.iter().all(|r| r.converged),
            divergent: parts.iter().any(|r| r.divergent),
        }
    }
}

/// Pairwise (cascade) summation over a fixed tree, so the result depends only
/// on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

/// One 21-point Kronrod panel with the QUADPACK error heuristic.
pub fn gauss_kronrod_21<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[10] * fc;
    let mut gauss = 0.0;
    let mut abs_sum = WGK[10] * fc.abs();
    let mut fv = [0.0f64; 20];
    for j in 0..10 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        kron += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let value = kron * h;
    let resabs = abs_sum * h.abs();
    let resasc = asc * h.abs();
    let mut err = ((kron - gauss) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

#[derive(PartialEq)]
struct HeapKey {
    error: f64,
    index: usize,
}

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then_with(|| other.index.cmp(&self.index))
    }
}

/// Globally adaptive bisection with 21-point Kronrod panels on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, cfg: &QuadratureConfig) -> IntegrationResult {
    if a == b {
        return IntegrationResult::zero();
    }
    if a > b {
        let r = integrate(f, b, a, cfg);
        return IntegrationResult { value: -r.value, ..r };
    }
    let (v0, e0) = gauss_kronrod_21(f, a, b);
    let mut panels = vec![Panel { a, b, value: v0, error: e0 }];
    let mut heap = BinaryHeap::new();
    heap.push(HeapKey { error: e0, index: 0 });
    let (mut total, mut total_err) = (v0, e0);
    let mut splits = 0;
    let min_width = 64.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    while total_err > cfg.target(total) && splits < cfg.max_subdivisions && total.is_finite() {
        let Some(top) = heap.pop() else { break };
        let (pa, pb, pv, pe) = {
            let p = &panels[top.index];
            (p.a, p.b, p.value, p.error)
        };
        if pb - pa <= min_width {
            // Cannot be refined further; keep it out of the queue.
            continue;
        }
        let m = 0.5 * (pa + pb);
        let (v1, e1) = gauss_kronrod_21(f, pa, m);
        let (v2, e2) = gauss_kronrod_21(f, m, pb);
        total += v1 + v2 - pv;
        total_err += e1 + e2 - pe;
        panels[top.index] = Panel { a: pa, b: m, value: v1, error: e1 };
        heap.push(HeapKey { error: e1, index: top.index });
        panels.push(Panel { a: m, b: pb, value: v2, error: e2 });
        heap.push(HeapKey { error: e2, index: panels.len() - 1 });
        splits += 1;
    }
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let values: Vec<f64> = panels.iter().map(|p| p.value).collect();
    let errors: Vec<f64> = panels.iter().map(|p| p.error).collect();
    let value = pairwise_sum(&values);
    let error_estimate = pairwise_sum(&errors);
    IntegrationResult {
        value,
        error_estimate,
        subdivisions_used: splits,
        converged: value.is_finite() && error_estimate <= cfg.target(value),
        divergent: false,
    }
}

/// Which endpoints of an interval carry an integrable (or suspected) singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Singular {
    None,
    Lo,
    Hi,
    Both,
}

impl Singular {
    pub fn from_flags(lo: bool, hi: bool) -> Self {
        match (lo, hi) {
            (false, false) => Singular::None,
            (true, false) => Singular::Lo,
            (false, true) => Singular::Hi,
            (true, true) => Singular::Both,
        }
    }

    fn lo(self) -> bool {
        matches!(self, Singular::Lo | Singular::Both)
    }

    fn hi(self) -> bool {
        matches!(self, Singular::Hi | Singular::Both)
    }
}

const RATIO_WINDOW: usize = 6;
/// Distance to the diagonal, relative to the piece length, below which pair
/// integrands use their leading power.
const DIAGONAL_CUT: f64 = 1e-7;
/// Cap on that distance relative to the distance from the piece ends.
const DIAGONAL_CUT_LOCAL: f64 = 1e-3;
const DIVERGENT_RATIO: f64 = 0.97;
/// Thinnest shell, relative to the distance of the singular point from 0.
const SHELL_RESOLUTION: f64 = 1e3 * f64::EPSILON;
const MAX_SHELLS: usize = 400;
/// Fraction of the running target granted to each shell.
const SHELL_SHARE: f64 = 0.02;

/// Remainder of a shell sequence whose last two ratios agree and are below 1,
/// with an error bound from the drift between those ratios.
fn geometric_tail(shells: &[f64]) -> Option<(f64, f64)> {
    let n = shells.len();
    if n < 4 || shells[n - 2] == 0.0 || shells[n - 3] == 0.0 {
        return None;
    }
    let r1 = shells[n - 2] / shells[n - 3];
    let r2 = shells[n - 1] / shells[n - 2];
    let stable = r1 > 0.0 && r2 > 0.0 && r2 < DIVERGENT_RATIO && (r2 - r1).abs() <= 0.02 * r1.max(r2);
    let last = shells[n - 1];
    stable.then(|| (last * r2 / (1.0 - r2), (last * (r2 - r1)).abs() / ((1.0 - r2) * (1.0 - r2))))
}

/// Integrates over the segment between `s` (singular end) and `e`, using
/// dyadic shells that shrink towards `s`.
///
/// Shells may grow for a while when the integrand has a feature close to `s`;
/// the integral is declared divergent only if the shell contributions are
/// still not decaying when the floating-point resolution at `s` (or the shell
/// cap) is reached.
fn shells_toward<F: Fn(f64) -> f64 + ?Sized>(f: &F, s: f64, e: f64, cfg: &QuadratureConfig) -> IntegrationResult {
    let len = e - s;
    let mut shells: Vec<f64> = Vec::new();
    let mut acc = IntegrationResult::zero();
    let mut sum = 0.0f64;
    let mut width = 1.0f64;
    let mut high_ratio_run = 0usize;
    let mut exhausted = true;
    for k in 0..MAX_SHELLS {
        let outer = s + len * width;
        let inner = s + len * width * 0.5;
        // shells thinner than this are dominated by rounding in `s + t`
        if inner == outer || inner == s || (outer - s).abs() <= SHELL_RESOLUTION * s.abs() {
            break;
        }
        // a shell only needs a share of the target for the whole sum; asking
        // each tiny shell for full relative accuracy chases rounding noise
        let share = SHELL_SHARE * cfg.rel_tol * sum.abs();
        let shell_cfg = QuadratureConfig { abs_tol: (cfg.abs_tol * SHELL_SHARE).max(share), ..*cfg };
        let r = integrate(f, inner.min(outer), inner.max(outer), &shell_cfg);
        if !r.value.is_finite() {
            acc.value = r.value;
            acc.converged = false;
            acc.divergent = true;
            return acc;
        }
        acc = acc.plus(IntegrationResult { value: 0.0, ..r });
        sum += r.value;
        shells.push(r.value);
        width *= 0.5;
        if k == 0 {
            continue;
        }
        let cur = r.value;
        let prev = shells[k - 1];
        let ratio = if prev != 0.0 { cur / prev } else if cur == 0.0 { 0.0 } else { f64::INFINITY };
        if ratio >= DIVERGENT_RATIO && cur.abs() > cfg.abs_tol * 1e-3 {
            high_ratio_run += 1;
        } else {
            high_ratio_run = 0;
        }
        let small = 0.1 * cfg.target(sum);
        if cur.abs() <= small && k >= 2 {
            if (0.0..0.9).contains(&ratio) {
                let rem = cur * ratio / (1.0 - ratio);
                sum += rem;
                acc.error_estimate += 0.5 * rem.abs();
                exhausted = false;
                break;
            }
            if prev.abs() <= small {
                acc.error_estimate += cur.abs();
                exhausted = false;
                break;
            }
        }
        if let Some((rem, err)) = geometric_tail(&shells) {
            if rem.abs() <= small {
                sum += rem;
                acc.error_estimate += err;
                exhausted = false;
                break;
            }
        }
    }
    if exhausted {
        if high_ratio_run >= RATIO_WINDOW {
            acc.value = sum;
            acc.converged = false;
            acc.divergent = true;
            return acc;
        }
        match geometric_tail(&shells) {
            Some((rem, err)) => {
                sum += rem;
                acc.error_estimate += err;
            }
            // whatever is left lies below the shell resolution
            None => acc.error_estimate += shells.last().copied().unwrap_or(0.0).abs(),
        }
    }
    acc.value = sum;
    // shell errors are already in the estimate
    acc.converged = acc.error_estimate <= cfg.target(sum);
    acc
}

/// Integral over `[a, b]` where the flagged endpoints may be singular.
/// Divergence is reported when shell contributions stop decaying.
pub fn integrate_singular<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    singular: Singular,
    cfg: &QuadratureConfig,
) -> IntegrationResult {
    if a == b {
        return IntegrationResult::zero();
    }
    if a > b {
        let flipped = Singular::from_flags(singular.hi(), singular.lo());
        let r = integrate_singular(f, b, a, flipped, cfg);
        return IntegrationResult { value: -r.value, ..r };
    }
    match singular {
        Singular::None => integrate(f, a, b, cfg),
        Singular::Lo => shells_toward(f, a, b, cfg),
        Singular::Hi => shells_toward(f, b, a, cfg),
        Singular::Both => {
            let m = 0.5 * (a + b);
            shells_toward(f, a, m, cfg).plus(shells_toward(f, b, m, cfg))
        }
    }
}

/// Integral over `[a, b]` split at the interior `breaks`; every piece endpoint
/// is treated as potentially singular.
pub fn integrate_pieces<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> IntegrationResult {
    let knots = knots_between(a, b, breaks);
    IntegrationResult::sum(knots.windows(2).map(|w| integrate_singular(f, w[0], w[1], Singular::Both, cfg)))
}

/// Sorted, deduplicated `a`, interior breaks, `b`.
pub fn knots_between(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut k = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    k.extend(inner);
    k.push(b);
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub singular: Singular,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi, singular: Singular::None }
    }

    pub fn with_singular(lo: f64, hi: f64, singular: Singular) -> Self {
        Self { lo, hi, singular }
    }
}

/// Axis-aligned integration region in one or two dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Line(Interval),
    Rect(Interval, Interval),
}

/// Nested adaptive integration over a line or rectangle; the inner integral
/// runs at a tenth of the outer tolerance.
pub fn integrate_adaptive<F: Fn(&[f64]) -> f64 + ?Sized>(
    f: &F,
    region: &Region,
    cfg: &QuadratureConfig,
) -> IntegrationResult {
    match *region {
        Region::Line(iv) => integrate_singular(&|x: f64| f(&[x]), iv.lo, iv.hi, iv.singular, cfg),
        Region::Rect(xi, yi) => {
            let inner_cfg = cfg.scaled(0.1);
            let status = std::cell::Cell::new(IntegrationResult::zero());
            let outer = |x: f64| {
                let r = integrate_singular(&|y: f64| f(&[x, y]), yi.lo, yi.hi, yi.singular, &inner_cfg);
                let s = status.get();
                status.set(IntegrationResult {
                    converged: s.converged && r.converged,
                    divergent: s.divergent || r.divergent,
                    ..s
                });
                r.value
            };
            let r = integrate_singular(&outer, xi.lo, xi.hi, xi.singular, cfg);
            let s = status.get();
            IntegrationResult { converged: r.converged && s.converged, divergent: r.divergent || s.divergent, ..r }
        }
    }
}

/// `∬_{X×Y} F(x,y) dx dy` for integrands with an integrable singularity on
/// the diagonal, `|F| ≲ |x−y|^{2−order}`. Inner integrals are split at `y = x`
/// and refined in dyadic shells towards it.
pub fn integrate_offdiagonal_pair<F: Fn(f64, f64) -> f64 + ?Sized>(
    f: &F,
    x: Interval,
    y: Interval,
    singularity_order: f64,
    cfg: &QuadratureConfig,
) -> Result<IntegrationResult> {
    if !(2.0 - singularity_order > -1.0) {
        return Err(Error::InvalidParameter(format!(
            "diagonal singularity of order {singularity_order} is not integrable"
        )));
    }
    let inner_cfg = cfg.scaled(0.1);
    let flags = std::cell::Cell::new((true, false));
    let beta = 2.0 - singularity_order;
    let inner = |xv: f64| {
        // near a piece end the integrand is only self-similar on the scale of
        // the distance to that end
        let len = y.hi - y.lo;
        let local = if xv > y.lo && xv < y.hi { (xv - y.lo).min(y.hi - xv) } else { len };
        let cut = (DIAGONAL_CUT * len).min(DIAGONAL_CUT_LOCAL * local);
        let breaks = [xv];
        let knots = knots_between(y.lo, y.hi, &breaks);
        let n = knots.len() - 1;
        let r = IntegrationResult::sum(knots.windows(2).enumerate().map(|(i, w)| {
            let (mut a, mut b) = (w[0], w[1]);
            let mut near = IntegrationResult::zero();
            // Within `cut` of the diagonal the integrand is replaced by its
            // leading power; closer in, roundoff in `f` would dominate.
            if a == xv && b - a > 4.0 * cut {
                a += cut;
                near = IntegrationResult::exact(f(xv, a) * cut / (beta + 1.0));
            }
            if b == xv && b - a > 4.0 * cut {
                b -= cut;
                near = IntegrationResult::exact(f(xv, b) * cut / (beta + 1.0));
            }
            let lo_sing = (i == 0 && y.singular.lo()) || w[0] == xv;
            let hi_sing = (i == n - 1 && y.singular.hi()) || w[1] == xv;
            integrate_singular(&|yv: f64| f(xv, yv), a, b, Singular::from_flags(lo_sing, hi_sing), &inner_cfg).plus(near)
        }));
        let (c, d) = flags.get();
        flags.set((c && r.converged, d || r.divergent));
        r.value
    };
    let knots = knots_between(x.lo, x.hi, &[y.lo, y.hi]);
    let n = knots.len() - 1;
    let r = IntegrationResult::sum(knots.windows(2).enumerate().map(|(i, w)| {
        let lo_sing = i > 0 || x.singular.lo() || w[0] == y.lo || w[0] == y.hi;
        let hi_sing = i < n - 1 || x.singular.hi() || w[1] == y.lo || w[1] == y.hi;
        integrate_singular(&inner, w[0], w[1], Singular::from_flags(lo_sing, hi_sing), cfg)
    }));
    let (c, d) = flags.get();
    Ok(IntegrationResult { converged: r.converged && c, divergent: r.divergent || d, ..r })
}

/// `∫_{|z| ≥ inner_radius} f(z) dz` in dimension 1 or 2: adaptive quadrature
/// in `log|z|` up to `tail_cut`, then a power-law remainder `|z|^{−d−η}` with
/// `η = tail_exponent_hint`. The discrepancy between the hinted and the
/// locally fitted exponent is added to the error estimate.
pub fn integrate_tail<F: Fn(&[f64]) -> f64 + ?Sized>(
    f: &F,
    d: usize,
    inner_radius: f64,
    cfg: &QuadratureConfig,
) -> Result<IntegrationResult> {
    cfg.validate()?;
    if !(cfg.tail_exponent_hint > 0.0) {
        return Err(Error::InvalidParameter("tail exponent hint must be positive".into()));
    }
    if !(inner_radius > 0.0) {
        return Err(Error::InvalidParameter("inner radius must be positive".into()));
    }
    let sphere_cfg = cfg.scaled(0.1);
    let shell_mass = |rho: f64| -> f64 {
        match d {
            1 => f(&[rho]) + f(&[-rho]),
            2 => {
                rho * integrate(
                    &|t: f64| f(&[rho * t.cos(), rho * t.sin()]),
                    0.0,
                    2.0 * std::f64::consts::PI,
                    &sphere_cfg,
                )
                .value
            }
            _ => f64::NAN,
        }
    };
    if d != 1 && d != 2 {
        return Err(Error::Unsupported(format!("tail integration in dimension {d}")));
    }
    let cut = cfg.tail_cut.max(inner_radius);
    let body = if cut > inner_radius {
        integrate(&|t: f64| {
            let rho = t.exp();
            shell_mass(rho) * rho
        }, inner_radius.ln(), cut.ln(), cfg)
    } else {
        IntegrationResult::zero()
    };
    let eta = cfg.tail_exponent_hint;
    let m_cut = shell_mass(cut);
    let remainder = m_cut * cut / eta;
    let m_half = shell_mass(0.5 * cut);
    let mut rem_err = remainder.abs();
    if m_cut != 0.0 && m_half != 0.0 && m_cut.signum() == m_half.signum() {
        let local = -(m_cut / m_half).log2() - 1.0;
        if local > 0.0 {
            rem_err = (remainder - m_cut * cut / local).abs();
        }
    } else if m_cut == 0.0 {
        rem_err = 0.0;
    }
    let error_estimate = body.error_estimate + rem_err;
    let value = body.value + remainder;
    Ok(IntegrationResult {
        value,
        error_estimate,
        subdivisions_used: body.subdivisions_used,
        converged: body.converged && error_estimate <= cfg.target(value),
        divergent: false,
    })
}
