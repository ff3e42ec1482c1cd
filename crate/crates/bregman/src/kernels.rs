//! The isotropic α-stable Lévy density and the closed-form potential theory
//! of balls: Green function, Poisson kernel, interaction kernel, expected
//! exit time and pointwise evaluation of the generator.

use crate::error::{Error, Result};
use crate::functions::RealFunction;
use crate::quadrature::{integrate, integrate_singular, knots_between, IntegrationResult, QuadratureConfig, Singular};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// `c_{d,α} = 2^α Γ((d+α)/2) / (π^{d/2} |Γ(−α/2)|)`.
pub fn stable_constant(d: usize, alpha: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidParameter(format!("stability index must lie in (0, 2), got {alpha}")));
    }
    let df = d as f64;
    Ok(2f64.powf(alpha) * gamma(0.5 * (df + alpha)) / (PI.powf(0.5 * df) * gamma(-0.5 * alpha).abs()))
}

fn is_log_case(d: usize, alpha: f64) -> bool {
    d == 1 && (alpha - 1.0).abs() < 1e-9
}

fn tight() -> QuadratureConfig {
    QuadratureConfig { rel_tol: 2e-13, abs_tol: 1e-300, max_subdivisions: 200, ..Default::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableKernel {
    d: usize,
    alpha: f64,
    c: f64,
    /// Constant in front of the ball Green function.
    green_const: f64,
    /// Constant of the ball Poisson kernel.
    poisson_const: f64,
    /// Profile integral of the Green function at `w = 1`.
    green_profile_one: f64,
}

impl StableKernel {
    pub fn new(d: usize, alpha: f64) -> Result<Self> {
        let c = stable_constant(d, alpha)?;
        let df = d as f64;
        let green_const = gamma(0.5 * df) / (2f64.powf(alpha) * PI.powf(0.5 * df) * gamma(0.5 * alpha).powi(2));
        let poisson_const = gamma(0.5 * df) * PI.powf(-0.5 * df - 1.0) * (0.5 * PI * alpha).sin();
        let mut k = Self { d, alpha, c, green_const, poisson_const, green_profile_one: 0.0 };
        k.green_profile_one = k.profile_small(1.0);
        Ok(k)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `c |r|^{−d−α}`.
    #[inline]
    pub fn density_at(&self, r: f64) -> f64 {
        self.c * r.abs().powf(-(self.d as f64) - self.alpha)
    }

    /// `ν((lo, hi))` seen from `x`, for an interval not containing `x` (d = 1).
    pub fn interval_mass(&self, x: f64, lo: f64, hi: f64) -> f64 {
        let a = self.alpha;
        let near = if lo >= x { lo - x } else { x - hi };
        let width = hi - lo;
        if !width.is_finite() {
            return self.c / a * near.powf(-a);
        }
        // near^{-a} − (near + width)^{-a} without cancellation
        self.c / a * near.powf(-a) * -(-a * (width / near).ln_1p()).exp_m1()
    }

    /// `∬_{(a,b)×(c,e)} ν` for disjoint intervals with `b ≤ c` (d = 1); `+∞`
    /// when they touch and `α ≥ 1`.
    pub fn interval_pair_mass(&self, a: f64, b: f64, c: f64, e: f64) -> f64 {
        let al = self.alpha;
        // second antiderivative of t^{-1-α}
        let f2 = |t: f64| -> f64 {
            if is_log_case(1, al) {
                -t.ln()
            } else {
                -t.powf(1.0 - al) / (al * (1.0 - al))
            }
        };
        let gap = c - b;
        if gap <= 0.0 && al >= 1.0 {
            return f64::INFINITY;
        }
        let term = |t: f64| if t.is_finite() { f2(t) } else { 0.0 };
        // F2(e−a) − F2(c−a) − F2(e−b) + F2(c−b), with infinite pairs cancelling
        let mut v = 0.0;
        if e.is_finite() && a.is_finite() {
            v += term(e - a);
        }
        if a.is_finite() {
            v -= term(c - a);
        }
        if e.is_finite() {
            v -= term(e - b);
        }
        v += if gap > 0.0 { term(gap) } else { 0.0 };
        if !a.is_finite() && !e.is_finite() && al <= 1.0 {
            return f64::INFINITY;
        }
        self.c * v
    }

    /// Profile `∫₀^w s^{α/2−1}(1+s)^{−d/2} ds` for `w ≤ 1`, substituting `τ = s^{α/2}`.
    fn profile_small(&self, w: f64) -> f64 {
        let a = 0.5 * self.alpha;
        let b = 0.5 * self.d as f64;
        let inv = 1.0 / a;
        integrate(&|t: f64| (1.0 + t.powf(inv)).powf(-b), 0.0, w.powf(a), &tight()).value * inv
    }

    fn green_profile(&self, w: f64) -> f64 {
        if is_log_case(self.d, self.alpha) {
            return 2.0 * w.sqrt().asinh();
        }
        if w <= 1.0 {
            return self.profile_small(w);
        }
        let a = 0.5 * self.alpha;
        let b = 0.5 * self.d as f64;
        self.green_profile_one
            + integrate(&|v: f64| (a * v).exp() * (1.0 + v.exp()).powf(-b), 0.0, w.ln(), &tight()).value
    }

    /// Green function of `B(c, r)` from squared center distances and `|x−y|`.
    fn green_raw(&self, r: f64, x_c2: f64, y_c2: f64, dist: f64) -> f64 {
        let r2 = r * r;
        if x_c2 >= r2 || y_c2 >= r2 {
            return 0.0;
        }
        let w = (r2 - x_c2) * (r2 - y_c2) / (r2 * dist * dist);
        self.green_const * dist.powf(self.alpha - self.d as f64) * self.green_profile(w)
    }

    fn poisson_raw(&self, r: f64, x_c2: f64, z_c2: f64, dist: f64) -> f64 {
        let r2 = r * r;
        self.poisson_const * ((r2 - x_c2) / (z_c2 - r2)).powf(0.5 * self.alpha) * dist.powf(-(self.d as f64))
    }

    /// Green function of the interval `D` at `x, y` (d = 1, no validation).
    pub fn green_1d(&self, dom: &BallDomain, x: f64, y: f64) -> f64 {
        let c = dom.center[0];
        self.green_raw(dom.radius, (x - c).powi(2), (y - c).powi(2), (x - y).abs())
    }

    /// Poisson kernel of the interval `D` (d = 1, no validation).
    pub fn poisson_1d(&self, dom: &BallDomain, x: f64, z: f64) -> f64 {
        let c = dom.center[0];
        self.poisson_raw(dom.radius, (x - c).powi(2), (z - c).powi(2), (x - z).abs())
    }

    /// `P_D(x,z) / (r² − (x−c)²)^{α/2}`, smooth in `x ∈ D̄` for fixed `z ∉ D̄` (d = 1).
    pub fn poisson_factor_1d(&self, dom: &BallDomain, x: f64, z: f64) -> f64 {
        let c = dom.center[0];
        let r2 = dom.radius * dom.radius;
        self.poisson_const * ((z - c).powi(2) - r2).powf(-0.5 * self.alpha) / (x - z).abs()
    }

    /// `(r² − |x−c|²)^{α/2} Γ(d/2) / (2^α Γ(1+α/2) Γ((d+α)/2))`.
    pub fn getoor_exit_time(&self, dom: &BallDomain, x: &[f64]) -> f64 {
        let df = self.d as f64;
        let a = self.alpha;
        let s = dom.radius * dom.radius - dom.center_dist2(x);
        if s <= 0.0 {
            return 0.0;
        }
        s.powf(0.5 * a) * gamma(0.5 * df) / (2f64.powf(a) * gamma(1.0 + 0.5 * a) * gamma(0.5 * (df + a)))
    }
}

/// `ν(x, y) = c |y−x|^{−d−α}`.
pub fn levy_density(k: &StableKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(k, x)?;
    check_dim(k, y)?;
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(k.density_at(r))
}

/// The open ball `B(center, radius)`; an interval when `d = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallDomain {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallDomain {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("center must be a finite point".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn interval(center: f64, radius: f64) -> Result<Self> {
        Self::new(vec![center], radius)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center_dist2(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.center_dist2(x) < self.radius * self.radius
    }

    pub fn in_closure(&self, x: &[f64]) -> bool {
        self.center_dist2(x) <= self.radius * self.radius
    }

    /// Distance from `x` to the ball's closure (0 inside).
    pub fn dist_outside(&self, x: &[f64]) -> f64 {
        (self.center_dist2(x).sqrt() - self.radius).max(0.0)
    }

    pub fn lo(&self) -> f64 {
        self.center[0] - self.radius
    }

    pub fn hi(&self) -> f64 {
        self.center[0] + self.radius
    }
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

fn check_dim(k: &StableKernel, x: &[f64]) -> Result<()> {
    if x.len() != k.d {
        return Err(Error::InvalidParameter(format!("point of dimension {} for kernel of dimension {}", x.len(), k.d)));
    }
    Ok(())
}

fn check_domain(k: &StableKernel, dom: &BallDomain) -> Result<()> {
    if dom.dim() != k.d {
        return Err(Error::InvalidParameter("domain and kernel dimensions differ".into()));
    }
    Ok(())
}

/// Green function of the ball; 0 when either point lies outside.
pub fn green_ball(k: &StableKernel, dom: &BallDomain, x: &[f64], y: &[f64]) -> Result<f64> {
    check_domain(k, dom)?;
    check_dim(k, x)?;
    check_dim(k, y)?;
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(k.green_raw(dom.radius, dom.center_dist2(x), dom.center_dist2(y), r))
}

/// Poisson kernel `P_D(x, z)` of the ball, `x ∈ D`, `z ∉ D̄`.
pub fn poisson_ball(k: &StableKernel, dom: &BallDomain, x: &[f64], z: &[f64]) -> Result<f64> {
    check_domain(k, dom)?;
    check_dim(k, x)?;
    check_dim(k, z)?;
    if !dom.contains(x) {
        return Err(Error::OutOfDomain("Poisson kernel needs x inside the ball".into()));
    }
    if dom.in_closure(z) {
        return Err(Error::OutOfDomain("Poisson kernel needs z outside the closed ball".into()));
    }
    Ok(k.poisson_raw(dom.radius, dom.center_dist2(x), dom.center_dist2(z), dist(x, z)))
}

/// Largest `ρ` with `x + ρ e` in the closed ball, for a unit vector `e`.
fn ray_exit(dom: &BallDomain, x: &[f64], e: &[f64]) -> f64 {
    let b: f64 = x.iter().zip(&dom.center).zip(e).map(|((xi, ci), ei)| (xi - ci) * ei).sum();
    let c = dom.center_dist2(x) - dom.radius * dom.radius;
    -b + (b * b - c).max(0.0).sqrt()
}

/// `∫_D f(y) dy` with `D` a disc, in polar coordinates around `x ∈ D`.
fn disc_integral_around<F: Fn(&[f64]) -> f64>(
    dom: &BallDomain,
    x: &[f64],
    f: &F,
    origin_singular: bool,
    cfg: &QuadratureConfig,
) -> IntegrationResult {
    let inner_cfg = cfg.scaled(0.1);
    let flags = std::cell::Cell::new((true, false));
    let angular = |t: f64| {
        let e = [t.cos(), t.sin()];
        let rmax = ray_exit(dom, x, &e);
        let r = integrate_singular(
            &|rho: f64| {
                let y = [x[0] + rho * e[0], x[1] + rho * e[1]];
                f(&y) * rho
            },
            0.0,
            rmax,
            Singular::from_flags(origin_singular, true),
            &inner_cfg,
        );
        let (c, d) = flags.get();
        flags.set((c && r.converged, d || r.divergent));
        r.value
    };
    let r = integrate(&angular, 0.0, 2.0 * PI, cfg);
    let (c, d) = flags.get();
    IntegrationResult { converged: r.converged && c, divergent: r.divergent || d, ..r }
}

/// `P_D(x,z) = ∫_D G_D(x,y) ν(y,z) dy` by quadrature.
pub fn poisson_via_green(
    k: &StableKernel,
    dom: &BallDomain,
    x: &[f64],
    z: &[f64],
    q: &QuadratureConfig,
) -> Result<IntegrationResult> {
    poisson_ball(k, dom, x, z)?;
    match k.d {
        1 => {
            let (x, z) = (x[0], z[0]);
            let f = |y: f64| if y == x { 0.0 } else { k.green_1d(dom, x, y) * k.density_at(y - z) };
            Ok(integrate_singular(&f, dom.lo(), x, Singular::Both, q)
                .plus(integrate_singular(&f, x, dom.hi(), Singular::Both, q)))
        }
        2 => {
            let f = |y: &[f64]| {
                let g = k.green_raw(dom.radius, dom.center_dist2(x), dom.center_dist2(y), dist(x, y));
                g * k.density_at(dist(y, z))
            };
            Ok(disc_integral_around(dom, x, &f, true, q))
        }
        d => Err(Error::Unsupported(format!("quadrature in dimension {d}"))),
    }
}

/// Interaction kernel `γ_D(w,z) = ∫_D ν(w,x) P_D(x,z) dx`.
pub fn interaction_kernel(
    k: &StableKernel,
    dom: &BallDomain,
    w: &[f64],
    z: &[f64],
    q: &QuadratureConfig,
) -> Result<IntegrationResult> {
    check_domain(k, dom)?;
    check_dim(k, w)?;
    check_dim(k, z)?;
    if dom.in_closure(w) || dom.in_closure(z) {
        return Err(Error::OutOfDomain("interaction kernel needs both points outside the closed ball".into()));
    }
    match k.d {
        1 => Ok(interaction_1d(k, dom, w[0], z[0], q)),
        2 => {
            let c = dom.center.clone();
            let f = |x: &[f64]| {
                k.density_at(dist(w, x)) * k.poisson_raw(dom.radius, dom.center_dist2(x), dom.center_dist2(z), dist(x, z))
            };
            Ok(disc_integral_around(dom, &c, &f, false, q))
        }
        d => Err(Error::Unsupported(format!("quadrature in dimension {d}"))),
    }
}

pub(crate) fn interaction_1d(k: &StableKernel, dom: &BallDomain, w: f64, z: f64, q: &QuadratureConfig) -> IntegrationResult {
    let f = |x: f64| k.density_at(w - x) * k.poisson_1d(dom, x, z);
    integrate_singular(&f, dom.lo(), dom.hi(), Singular::Both, q)
}

/// `E^x τ_D = ∫_D G_D(x,y) dy` by quadrature.
pub fn expected_exit_time(k: &StableKernel, dom: &BallDomain, x: &[f64], q: &QuadratureConfig) -> Result<IntegrationResult> {
    check_domain(k, dom)?;
    check_dim(k, x)?;
    if !dom.contains(x) {
        return Err(Error::OutOfDomain("exit time needs a starting point inside the ball".into()));
    }
    match k.d {
        1 => {
            let x = x[0];
            let f = |y: f64| if y == x { 0.0 } else { k.green_1d(dom, x, y) };
            Ok(integrate_singular(&f, dom.lo(), x, Singular::Both, q).plus(integrate_singular(&f, x, dom.hi(), Singular::Both, q)))
        }
        2 => {
            let f = |y: &[f64]| {
                let r = dist(x, y);
                if r == 0.0 {
                    0.0
                } else {
                    k.green_raw(dom.radius, dom.center_dist2(x), dom.center_dist2(y), r)
                }
            };
            Ok(disc_integral_around(dom, x, &f, true, q))
        }
        d => Err(Error::Unsupported(format!("quadrature in dimension {d}"))),
    }
}

/// Below this radius the second difference is replaced by its Taylor term.
const TAYLOR_RADIUS: f64 = 1e-3;

/// `Lu(x) = ∫_0^∞ (u(x+z) + u(x−z) − 2u(x)) ν(z) dz` in d = 1.
///
/// Near `z = 0` the second difference is `u''(x) z²` with `u''` from a central
/// difference; the remaining range is split at the distances from `x` to the
/// breakpoints of `u`, and the part beyond the last breakpoint is closed
/// analytically when `u` is constant there.
pub fn generator_apply(k: &StableKernel, u: &dyn RealFunction, x: f64, q: &QuadratureConfig) -> Result<IntegrationResult> {
    if k.d != 1 {
        return Err(Error::Unsupported("generator evaluation is implemented for d = 1".into()));
    }
    let mut dists: Vec<f64> = u.breakpoints().iter().map(|b| (b - x).abs()).collect();
    if dists.iter().any(|&d| d == 0.0) {
        return Err(Error::InvalidParameter(format!("generator evaluated at a breakpoint x = {x}")));
    }
    dists.sort_by(f64::total_cmp);
    let nearest = dists.first().copied().unwrap_or(f64::INFINITY);
    let z0 = TAYLOR_RADIUS.min(0.25 * nearest);
    let ux = u.eval(x);
    let a = k.alpha;
    let second = (u.eval(x + z0) + u.eval(x - z0) - 2.0 * ux) / (z0 * z0);
    let taylor = k.c * second * z0.powf(2.0 - a) / (2.0 - a);
    let integrand = |z: f64| (u.eval(x + z) + u.eval(x - z) - 2.0 * ux) * k.density_at(z);
    let far = dists.last().copied().unwrap_or(z0).max(z0);
    let knots = knots_between(z0, far, &dists);
    let mut parts: Vec<IntegrationResult> =
        knots.windows(2).map(|w| integrate_singular(&integrand, w[0], w[1], Singular::Both, q)).collect();
    parts.push(IntegrationResult::exact(taylor));
    let right = u.constant_on(x + far, f64::INFINITY);
    let left = u.constant_on(f64::NEG_INFINITY, x - far);
    match (left, right) {
        (Some(l), Some(r)) => parts.push(IntegrationResult::exact((l + r - 2.0 * ux) * k.c * far.powf(-a) / a)),
        _ => {
            let cut = q.tail_cut.max(2.0 * far);
            parts.push(integrate(&|t: f64| integrand(t.exp()) * t.exp(), far.ln(), cut.ln(), q));
            let lv = u.eval(x - cut);
            let rv = u.eval(x + cut);
            parts.push(IntegrationResult::exact((lv + rv - 2.0 * ux) * k.c * cut.powf(-a) / a));
        }
    }
    Ok(IntegrationResult::sum(parts))
}

/// Max over `x, y ∈ D̄` and `z` with `dist(z, D) ≥ separation` of `ν(x,z)/ν(y,z)`,
/// measured on a grid with `n` points across `D` (d = 1).
pub fn far_kernel_ratio(k: &StableKernel, dom: &BallDomain, separation: f64, n: usize) -> f64 {
    let pts: Vec<f64> = (0..=n).map(|i| dom.lo() + 2.0 * dom.radius * i as f64 / n as f64).collect();
    let zs: Vec<f64> = (0..=n)
        .flat_map(|i| {
            let s = separation * (1.0 + 100.0 * (i as f64 / n as f64).powi(3));
            [dom.hi() + s, dom.lo() - s]
        })
        .collect();
    let mut best: f64 = 1.0;
    for &z in &zs {
        let vals: Vec<f64> = pts.iter().map(|&x| k.density_at(x - z)).collect();
        let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
        let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
        best = best.max(hi / lo);
    }
    best
}

/// Integrability profile of the Lévy density in d = 1: `∫_{|z|<1} z² ν`,
/// `∫_{|z|>1} ν` and `∫_{ε<|z|<1} ν`, all by quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevyIntegrability {
    pub inner_second_moment: f64,
    pub outer_mass: f64,
    pub truncated_mass: f64,
}

pub fn levy_integrability(k: &StableKernel, eps: f64, q: &QuadratureConfig) -> Result<LevyIntegrability> {
    if k.d != 1 {
        return Err(Error::Unsupported("integrability profile is implemented for d = 1".into()));
    }
    let inner = integrate_singular(&|z: f64| 2.0 * z * z * k.density_at(z), 0.0, 1.0, Singular::Lo, q);
    let outer = crate::quadrature::integrate_tail(
        &|z: &[f64]| k.density_at(z[0]),
        1,
        1.0,
        &QuadratureConfig { tail_exponent_hint: k.alpha, ..*q },
    )?;
    let trunc = integrate(&|t: f64| 2.0 * k.density_at(t.exp()) * t.exp(), eps.ln(), 0.0, q);
    Ok(LevyIntegrability { inner_second_moment: inner.value, outer_mass: outer.value, truncated_mass: trunc.value })
}

/// `P_D(x,z) / (ν(x,z) E^x τ_D)`, the quantity of the far-field comparability.
pub fn poisson_far_ratio(k: &StableKernel, dom: &BallDomain, x: &[f64], z: &[f64]) -> Result<f64> {
    let p = poisson_ball(k, dom, x, z)?;
    Ok(p / (levy_density(k, x, z)? * k.getoor_exit_time(dom, x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Bump, Constant};

    fn q() -> QuadratureConfig {
        QuadratureConfig { rel_tol: 1e-10, abs_tol: 1e-14, ..Default::default() }
    }

    fn unit() -> BallDomain {
        BallDomain::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn constants_against_high_precision_values() {
        // reference values from a 30-digit evaluation of the Γ formula
        let cases = [
            (1, 1.0, 0.318_309_886_183_790_67),
            (1, 0.5, 0.199_471_140_200_716_34),
            (1, 1.5, 0.299_206_710_301_074_5),
            (2, 1.5, 0.171_167_129_690_552_34),
            (2, 1.0, 0.159_154_943_091_895_34),
        ];
        for (d, a, want) in cases {
            let got = stable_constant(d, a).unwrap();
            assert!((got - want).abs() < 1e-12 * want, "d={d} a={a}: {got} vs {want}");
        }
        assert!(stable_constant(1, 2.5).is_err());
        assert!(stable_constant(1, 0.0).is_err());
    }

    #[test]
    fn density_examples() {
        let k = StableKernel::new(1, 1.0).unwrap();
        assert!((levy_density(&k, &[0.0], &[1.0]).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!((levy_density(&k, &[0.0], &[2.0]).unwrap() - 0.25 / PI).abs() < 1e-15);
        assert_eq!(levy_density(&k, &[0.3], &[-0.2]).unwrap(), levy_density(&k, &[-0.2], &[0.3]).unwrap());
        assert!(levy_density(&k, &[0.5], &[0.5]).is_err());
    }

    #[test]
    fn green_against_high_precision_values() {
        let d = unit();
        let table = [
            (0.5, 0.2, -0.4, 0.296_596_815_693_288_9),
            (0.5, 0.0, 0.5, 0.339_779_352_435_590_1),
            (1.0, 0.2, -0.4, 0.379_715_279_009_819_96),
            (1.0, 0.0, 0.5, 0.419_200_718_278_982_73),
            (1.5, 0.2, -0.4, 0.333_051_123_130_637_7),
            (1.5, 0.0, 0.5, 0.356_466_859_351_696_9),
        ];
        for (a, x, y, want) in table {
            let k = StableKernel::new(1, a).unwrap();
            let got = green_ball(&k, &d, &[x], &[y]).unwrap();
            assert!((got - want).abs() < 1e-11, "alpha={a}: {got} vs {want}");
            assert_eq!(got, green_ball(&k, &d, &[y], &[x]).unwrap());
        }
        let k = StableKernel::new(1, 1.0).unwrap();
        assert_eq!(green_ball(&k, &d, &[0.0], &[1.5]).unwrap(), 0.0);
        assert!(green_ball(&k, &d, &[0.1], &[0.1]).is_err());
    }

    #[test]
    fn near_log_case_is_continuous() {
        let d = unit();
        let g1 = green_ball(&StableKernel::new(1, 1.0).unwrap(), &d, &[0.1], &[0.6]).unwrap();
        let g2 = green_ball(&StableKernel::new(1, 1.0 + 1e-7).unwrap(), &d, &[0.1], &[0.6]).unwrap();
        assert!((g1 - g2).abs() < 1e-6);
    }

    #[test]
    fn poisson_validation_and_symmetry() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let d = unit();
        assert!(poisson_ball(&k, &d, &[1.2], &[2.0]).is_err());
        assert!(poisson_ball(&k, &d, &[0.0], &[1.0]).is_err());
        let a = poisson_ball(&k, &d, &[0.0], &[2.5]).unwrap();
        let b = poisson_ball(&k, &d, &[0.0], &[-2.5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exit_time_closed_form_and_quadrature() {
        let d = unit();
        let k = StableKernel::new(1, 1.0).unwrap();
        assert!((k.getoor_exit_time(&d, &[0.0]) - 1.0).abs() < 1e-14);
        for a in [0.5, 1.0, 1.5] {
            let k = StableKernel::new(1, a).unwrap();
            for x in [0.0, 0.5, -0.8] {
                let quad = expected_exit_time(&k, &d, &[x], &q()).unwrap();
                let exact = k.getoor_exit_time(&d, &[x]);
                assert!((quad.value - exact).abs() < 1e-7 * exact, "a={a} x={x}: {} vs {exact}", quad.value);
            }
        }
    }

    #[test]
    fn interval_masses() {
        let k = StableKernel::new(1, 1.5).unwrap();
        let m = k.interval_mass(0.0, 1.0, f64::INFINITY);
        assert!((m - k.c / 1.5).abs() < 1e-15);
        let num = integrate(&|z: f64| k.density_at(z), 2.0, 3.0, &q()).value;
        assert!((k.interval_mass(0.5, 2.0, 3.0) - integrate(&|z: f64| k.density_at(z - 0.5), 2.0, 3.0, &q()).value).abs() < 1e-12);
        assert!(num > 0.0);
        let pair = integrate(&|x: f64| k.interval_mass(x, 2.0, 3.0), -1.0, 0.5, &q()).value;
        assert!((k.interval_pair_mass(-1.0, 0.5, 2.0, 3.0) - pair).abs() < 1e-10);
        let semi = integrate(&|x: f64| k.interval_mass(x, 2.0, f64::INFINITY), -1.0, 0.5, &q()).value;
        assert!((k.interval_pair_mass(-1.0, 0.5, 2.0, f64::INFINITY) - semi).abs() < 1e-10);
        assert!(k.interval_pair_mass(0.0, 1.0, 1.0, 2.0).is_infinite());
        let k = StableKernel::new(1, 0.5).unwrap();
        let touch = integrate_singular(&|x: f64| k.interval_mass(x, 1.0, 2.0), 0.0, 1.0, Singular::Hi, &q()).value;
        assert!((k.interval_pair_mass(0.0, 1.0, 1.0, 2.0) - touch).abs() < 1e-8);
    }

    #[test]
    fn generator_of_constant_vanishes() {
        let k = StableKernel::new(1, 1.3).unwrap();
        let r = generator_apply(&k, &Constant(2.0), 0.4, &q()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn generator_of_bump_is_negative_at_peak() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let b = Bump { center: 0.0, radius: 1.0, power: 2 };
        let r = generator_apply(&k, &b, 0.0, &q()).unwrap();
        assert!(r.value < 0.0);
    }
}
