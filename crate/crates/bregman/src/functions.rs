//! Real functions on the line together with the structural information the
//! quadrature needs: breakpoints, support and piecewise-constant pieces.

use crate::divergence::french_power;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Support {
    Unbounded,
    /// Union of open intervals outside of which the function vanishes.
    Intervals(Vec<(f64, f64)>),
}

impl Support {
    pub fn hull(&self) -> Option<(f64, f64)> {
        match self {
            Support::Unbounded => None,
            Support::Intervals(v) if v.is_empty() => Some((0.0, 0.0)),
            Support::Intervals(v) => Some((
                v.iter().map(|i| i.0).fold(f64::INFINITY, f64::min),
                v.iter().map(|i| i.1).fold(f64::NEG_INFINITY, f64::max),
            )),
        }
    }

    fn misses(&self, lo: f64, hi: f64) -> bool {
        match self {
            Support::Unbounded => false,
            Support::Intervals(v) => v.iter().all(|&(a, b)| b <= lo || a >= hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    SmoothInterior,
    Grid,
    Preset,
}

pub trait RealFunction: Send + Sync + fmt::Debug {
    fn eval(&self, x: f64) -> f64;

    /// Points where the function or one of its first two derivatives may jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn support(&self) -> Support {
        Support::Unbounded
    }

    /// The value on `(lo, hi)` when the function is constant there (bounds may be infinite).
    fn constant_on(&self, lo: f64, hi: f64) -> Option<f64> {
        self.support().misses(lo, hi).then_some(0.0)
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Preset
    }

    /// An upper bound of `|f|`, when known.
    fn sup_bound(&self) -> Option<f64> {
        None
    }
}

pub type FunctionHandle = Arc<dyn RealFunction>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant(pub f64);

impl RealFunction for Constant {
    fn eval(&self, _: f64) -> f64 {
        self.0
    }
    fn constant_on(&self, _: f64, _: f64) -> Option<f64> {
        Some(self.0)
    }
    fn support(&self) -> Support {
        if self.0 == 0.0 {
            Support::Intervals(Vec::new())
        } else {
            Support::Unbounded
        }
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::SmoothInterior
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.0.abs())
    }
}

/// Radii `0 < inner < outer` of an annulus around a center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSupport {
    pub inner: f64,
    pub outer: f64,
}

impl AnnulusSupport {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if inner > 0.0 && inner < outer && outer.is_finite() {
            Ok(Self { inner, outer })
        } else {
            Err(Error::InvalidParameter(format!("annulus needs 0 < inner < outer, got ({inner}, {outer})")))
        }
    }

    pub fn contains_radius(&self, s: f64) -> bool {
        s > self.inner && s < self.outer
    }

    fn intervals(&self, c: f64) -> Vec<(f64, f64)> {
        vec![(c - self.outer, c - self.inner), (c + self.inner, c + self.outer)]
    }

    fn breaks(&self, c: f64) -> Vec<f64> {
        vec![c - self.outer, c - self.inner, c + self.inner, c + self.outer]
    }

    /// Value on `(lo, hi)` of a function that equals `[left, right]` on the
    /// two components and 0 elsewhere.
    fn piecewise(&self, c: f64, left: f64, right: f64, lo: f64, hi: f64) -> Option<f64> {
        let pieces = [
            (f64::NEG_INFINITY, c - self.outer, 0.0),
            (c - self.outer, c - self.inner, left),
            (c - self.inner, c + self.inner, 0.0),
            (c + self.inner, c + self.outer, right),
            (c + self.outer, f64::INFINITY, 0.0),
        ];
        pieces.iter().find(|&&(a, b, _)| lo >= a && hi <= b).map(|p| p.2)
    }
}

/// Exterior data taking values `left` and `right` on the two components of an
/// annulus around `center`; the indicator is `left = right = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusLevels {
    pub center: f64,
    pub annulus: AnnulusSupport,
    pub left: f64,
    pub right: f64,
}

impl AnnulusLevels {
    pub fn indicator(center: f64, annulus: AnnulusSupport) -> Self {
        Self { center, annulus, left: 1.0, right: 1.0 }
    }
}

impl RealFunction for AnnulusLevels {
    fn eval(&self, x: f64) -> f64 {
        let s = x - self.center;
        if self.annulus.contains_radius(s.abs()) {
            if s > 0.0 {
                self.right
            } else {
                self.left
            }
        } else {
            0.0
        }
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.annulus.breaks(self.center)
    }
    fn support(&self) -> Support {
        Support::Intervals(self.annulus.intervals(self.center))
    }
    fn constant_on(&self, lo: f64, hi: f64) -> Option<f64> {
        self.annulus.piecewise(self.center, self.left, self.right, lo, hi)
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.left.abs().max(self.right.abs()))
    }
}

/// `16 (s−inner)²(outer−s)² / (outer−inner)⁴` in the radial variable, peak 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusBump {
    pub center: f64,
    pub annulus: AnnulusSupport,
}

impl RealFunction for AnnulusBump {
    fn eval(&self, x: f64) -> f64 {
        let s = (x - self.center).abs();
        let AnnulusSupport { inner, outer } = self.annulus;
        if s <= inner || s >= outer {
            return 0.0;
        }
        let t = (s - inner) * (outer - s) / (outer - inner).powi(2);
        16.0 * t * t
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.annulus.breaks(self.center)
    }
    fn support(&self) -> Support {
        Support::Intervals(self.annulus.intervals(self.center))
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::SmoothInterior
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `(1 − ((x−c)/r)²)^power` on `|x−c| < r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
    pub power: i32,
}

impl RealFunction for Bump {
    fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.radius;
        if t.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - t * t).powi(self.power)
        }
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![self.center - self.radius, self.center + self.radius]
    }
    fn support(&self) -> Support {
        Support::Intervals(vec![(self.center - self.radius, self.center + self.radius)])
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::SmoothInterior
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `(1 − |x−c|/w)₊`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hat {
    pub center: f64,
    pub half_width: f64,
}

impl RealFunction for Hat {
    fn eval(&self, x: f64) -> f64 {
        (1.0 - (x - self.center).abs() / self.half_width).max(0.0)
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![self.center - self.half_width, self.center, self.center + self.half_width]
    }
    fn support(&self) -> Support {
        Support::Intervals(vec![(self.center - self.half_width, self.center + self.half_width)])
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `min((|z−c|−inner)^{−exponent}, cap)` on the annulus, 0 elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPower {
    pub center: f64,
    pub annulus: AnnulusSupport,
    pub exponent: f64,
    pub cap: f64,
}

impl TruncatedPower {
    /// Radial distance from the inner sphere below which the cap is active.
    pub fn cap_width(&self) -> f64 {
        self.cap.powf(-1.0 / self.exponent)
    }
}

impl RealFunction for TruncatedPower {
    fn eval(&self, x: f64) -> f64 {
        let s = (x - self.center).abs();
        if !self.annulus.contains_radius(s) {
            return 0.0;
        }
        (s - self.annulus.inner).powf(-self.exponent).min(self.cap)
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.annulus.breaks(self.center);
        let w = self.cap_width();
        if w < self.annulus.outer - self.annulus.inner {
            let s = self.annulus.inner + w;
            b.push(self.center - s);
            b.push(self.center + s);
        }
        b.sort_by(f64::total_cmp);
        b
    }
    fn support(&self) -> Support {
        Support::Intervals(self.annulus.intervals(self.center))
    }
    fn constant_on(&self, lo: f64, hi: f64) -> Option<f64> {
        if self.support().misses(lo, hi) {
            return Some(0.0);
        }
        let w = self.cap_width().min(self.annulus.outer - self.annulus.inner);
        let s0 = self.annulus.inner;
        let c = self.center;
        let right = lo >= c + s0 && hi <= c + s0 + w;
        let left = lo >= c - s0 - w && hi <= c - s0;
        (right || left).then_some(self.cap)
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.cap)
    }
}

/// Finite linear combination of functions.
#[derive(Debug, Clone)]
pub struct Combination {
    pub terms: Vec<(f64, FunctionHandle)>,
}

impl RealFunction for Combination {
    fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.eval(x)).sum()
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.terms.iter().flat_map(|t| t.1.breakpoints()).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
    fn support(&self) -> Support {
        let mut out = Vec::new();
        for (_, f) in &self.terms {
            match f.support() {
                Support::Unbounded => return Support::Unbounded,
                Support::Intervals(v) => out.extend(v),
            }
        }
        Support::Intervals(out)
    }
    fn constant_on(&self, lo: f64, hi: f64) -> Option<f64> {
        let mut s = 0.0;
        for (c, f) in &self.terms {
            s += c * f.constant_on(lo, hi)?;
        }
        Some(s)
    }
    fn sup_bound(&self) -> Option<f64> {
        let mut s = 0.0;
        for (c, f) in &self.terms {
            s += c.abs() * f.sup_bound()?;
        }
        Some(s)
    }
}

/// `x ↦ f(x)^⟨κ⟩`.
#[derive(Debug, Clone)]
pub struct SignedPower {
    pub inner: FunctionHandle,
    pub kappa: f64,
}

impl RealFunction for SignedPower {
    fn eval(&self, x: f64) -> f64 {
        french_power(self.inner.eval(x), self.kappa)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
    fn support(&self) -> Support {
        self.inner.support()
    }
    fn constant_on(&self, lo: f64, hi: f64) -> Option<f64> {
        self.inner.constant_on(lo, hi).map(|v| french_power(v, self.kappa))
    }
    fn sup_bound(&self) -> Option<f64> {
        self.inner.sup_bound().map(|b| b.powf(self.kappa))
    }
}

/// `x ↦ |f(x)|^exponent`.
#[derive(Debug, Clone)]
pub struct AbsPower {
    pub inner: FunctionHandle,
    pub exponent: f64,
}

impl RealFunction for AbsPower {
    fn eval(&self, x: f64) -> f64 {
        self.inner.eval(x).abs().powf(self.exponent)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
    fn support(&self) -> Support {
        self.inner.support()
    }
    fn constant_on(&self, lo: f64, hi: f64) -> Option<f64> {
        self.inner.constant_on(lo, hi).map(|v| v.abs().powf(self.exponent))
    }
    fn sup_bound(&self) -> Option<f64> {
        self.inner.sup_bound().map(|b| b.powf(self.exponent))
    }
}

/// Closure-backed function with user supplied structure.
#[derive(Clone)]
pub struct FnFunction {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    breaks: Vec<f64>,
    support: Support,
    smoothness: Smoothness,
}

impl FnFunction {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, breaks: Vec<f64>, support: Support) -> Self {
        Self { f: Arc::new(f), breaks, support, smoothness: Smoothness::SmoothInterior }
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }
}

impl fmt::Debug for FnFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFunction").field("breaks", &self.breaks).field("support", &self.support).finish()
    }
}

impl RealFunction for FnFunction {
    fn eval(&self, x: f64) -> f64 {
        if let Support::Intervals(v) = &self.support {
            if !v.iter().any(|&(a, b)| x > a && x < b) {
                return 0.0;
            }
        }
        (self.f)(x)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }
    fn support(&self) -> Support {
        self.support.clone()
    }
    fn smoothness(&self) -> Smoothness {
        self.smoothness
    }
}

pub fn handle<F: RealFunction + 'static>(f: F) -> FunctionHandle {
    Arc::new(f)
}
