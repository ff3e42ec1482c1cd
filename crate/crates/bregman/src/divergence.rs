//! Scalar Bregman machinery: signed powers, `F_p`, its symmetrization `H_p`,
//! the smoothed variant and expectation identities on finite distributions.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Exponent `p > 1` of the Bregman forms.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PExponent(f64);

impl PExponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidParameter(format!("exponent p must exceed 1, got {p}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PExponent {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<PExponent> for f64 {
    fn from(p: PExponent) -> f64 {
        p.0
    }
}

const CLAMP_WINDOW: f64 = 1e-12;

#[inline]
fn clamp_small_negative(v: f64) -> f64 {
    if (-CLAMP_WINDOW..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

/// `|x|^κ sgn(x)`, with `0^⟨κ⟩ = 0` for every κ.
#[inline]
pub fn french_power(x: f64, kappa: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if kappa == 1.0 {
        x
    } else {
        x.abs().powf(kappa).copysign(x)
    }
}

/// `b^⟨κ⟩ − a^⟨κ⟩` without cancellation when `a` and `b` are close and of one sign.
pub fn french_power_diff(a: f64, b: f64, kappa: f64) -> f64 {
    if a != 0.0 && b != 0.0 && a.signum() == b.signum() {
        let t = (b - a) / a;
        if t.abs() <= 0.5 {
            return french_power(a, kappa) * (kappa * t.ln_1p()).exp_m1();
        }
    }
    french_power(b, kappa) - french_power(a, kappa)
}

/// `(1+t)^p − 1 − p t` for `|t| < 1` by its binomial series.
fn binomial_remainder(p: f64, t: f64) -> f64 {
    let mut term = p * t;
    let mut sum = 0.0;
    for k in 2..200 {
        term *= (p - (k as f64 - 1.0)) / k as f64 * t;
        sum += term;
        if term == 0.0 || term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `F_p(a,b) = |b|^p − |a|^p − p a^⟨p−1⟩ (b−a)`.
pub fn bregman_fp(p: PExponent, a: f64, b: f64) -> f64 {
    let p = p.get();
    let h = b - a;
    if a != 0.0 && (h / a).abs() <= 0.25 {
        return clamp_small_negative(a.abs().powf(p) * binomial_remainder(p, h / a));
    }
    clamp_small_negative(b.abs().powf(p) - a.abs().powf(p) - p * french_power(a, p - 1.0) * h)
}

/// `H_p(a,b) = (p/2)(b^⟨p−1⟩ − a^⟨p−1⟩)(b − a)`.
pub fn bregman_hp(p: PExponent, a: f64, b: f64) -> f64 {
    let p = p.get();
    0.5 * p * french_power_diff(a, b, p - 1.0) * (b - a)
}

/// The ε-smoothed divergence built from `(x²+ε²)^{p/2}`.
pub fn bregman_fp_eps(p: PExponent, eps: f64, a: f64, b: f64) -> f64 {
    let p = p.get();
    let e2 = eps * eps;
    let sa = a * a + e2;
    let sb = b * b + e2;
    let slope = if sa == 0.0 { 0.0 } else { p * a * sa.powf(0.5 * p - 1.0) };
    clamp_small_negative(sb.powf(0.5 * p) - sa.powf(0.5 * p) - slope * (b - a))
}

/// `(b−a)(b^⟨p−1⟩−a^⟨p−1⟩) / (b^⟨p/2⟩−a^⟨p/2⟩)²` for `a ≠ b`.
pub fn quadratic_comparison_ratio(p: PExponent, a: f64, b: f64) -> f64 {
    let p = p.get();
    let num = (b - a) * french_power_diff(a, b, p - 1.0);
    let half = french_power_diff(a, b, 0.5 * p);
    num / (half * half)
}

/// Optimal bracket `[4(p−1)/p², 2]` of [`quadratic_comparison_ratio`].
pub fn quadratic_comparison_bounds(p: PExponent) -> (f64, f64) {
    let p = p.get();
    (4.0 * (p - 1.0) / (p * p), 2.0)
}

/// `F_p(a,b) / |b−a|^p` for `a ≠ b`.
pub fn increment_ratio(p: PExponent, a: f64, b: f64) -> f64 {
    bregman_fp(p, a, b) / (b - a).abs().powf(p.get())
}

/// Lower constant `2^{2−p}` in `F_p(a,b) ≥ κ |b−a|^p`, valid for `p ≥ 2`.
pub fn increment_lower_constant(p: PExponent) -> Option<f64> {
    (p.get() >= 2.0).then(|| 2f64.powf(2.0 - p.get()))
}

/// Largest value of [`increment_ratio`] for `1 < p ≤ 2`, by a log grid search
/// over `b` with `a = 1` (homogeneity and `F_p(−a,−b) = F_p(a,b)` reduce to this
/// slice) refined by golden-section search.
pub fn increment_ratio_sup(p: PExponent) -> f64 {
    let f = |e: f64, sign: f64| increment_ratio(p, 1.0, 1.0 + sign * 10f64.powf(e));
    let mut best = (f64::NEG_INFINITY, 0.0, 1.0);
    let n = 4000;
    for sign in [-1.0, 1.0] {
        for i in 0..=n {
            let e = -4.0 + 16.0 * i as f64 / n as f64;
            let v = f(e, sign);
            if v > best.0 {
                best = (v, e, sign);
            }
        }
    }
    let (_, e0, sign) = best;
    let step = 16.0 / n as f64;
    let (mut lo, mut hi) = (e0 - step, e0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1, sign) < f(m2, sign) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    f(0.5 * (lo + hi), sign).max(best.0)
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: usize, b: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Deterministic test pairs in `[−10, 10]²`: a Halton (2, 3) sequence of
/// `n` points followed by near-diagonal same-sign pairs and antipodal pairs.
pub fn sample_pairs(n: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> =
        (1..=n).map(|i| (20.0 * radical_inverse(i, 2) - 10.0, 20.0 * radical_inverse(i, 3) - 10.0)).collect();
    for i in 0..100 {
        let a = 0.1 + 9.9 * i as f64 / 99.0;
        for e in [1e-6, 1e-4, 1e-2] {
            out.push((a, a * (1.0 + e)));
            out.push((-a, -a * (1.0 + e)));
        }
        out.push((a, -a));
        out.push((a, -0.5 * a));
    }
    out
}

/// Range of [`quadratic_comparison_ratio`] over a set of pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonScan {
    pub min: f64,
    pub max: f64,
    pub pairs: usize,
    /// Pairs outside the bracket by more than `1e-12` relative.
    pub violations: usize,
}

pub fn scan_comparison_ratio(p: PExponent, pairs: &[(f64, f64)]) -> ComparisonScan {
    let (lo, hi) = quadratic_comparison_bounds(p);
    let mut scan = ComparisonScan { min: f64::INFINITY, max: f64::NEG_INFINITY, pairs: 0, violations: 0 };
    for &(a, b) in pairs {
        if a == b {
            continue;
        }
        let r = quadratic_comparison_ratio(p, a, b);
        scan.pairs += 1;
        scan.min = scan.min.min(r);
        scan.max = scan.max.max(r);
        if r < lo * (1.0 - 1e-12) || r > hi * (1.0 + 1e-12) {
            scan.violations += 1;
        }
    }
    scan
}

/// Finite-support probability law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("distribution needs at least one atom".into()));
        }
        if atoms.iter().any(|&(v, w)| !v.is_finite() || !(w >= 0.0)) {
            return Err(Error::InvalidParameter("atoms must be finite with nonnegative weights".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    pub fn uniform(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len().max(1) as f64;
        Self::new(values.iter().map(|&v| (v, w)).collect())
    }

    pub fn point_mass(c: f64) -> Self {
        Self { atoms: vec![(c, 1.0)] }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(v, w)| w * f(v)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|v| v)
    }
}

/// Both sides of the three expectation identities for `F_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentIdentities {
    pub i_lhs: f64,
    pub i_rhs: f64,
    pub ii_lhs: f64,
    pub ii_rhs: f64,
    pub iii_lhs: f64,
    pub iii_rhs: f64,
}

impl MomentIdentities {
    /// Largest relative mismatch among the three pairs (scale floor 1).
    pub fn max_rel_gap(&self) -> f64 {
        [(self.i_lhs, self.i_rhs), (self.ii_lhs, self.ii_rhs), (self.iii_lhs, self.iii_rhs)]
            .iter()
            .map(|&(l, r)| (l - r).abs() / l.abs().max(r.abs()).max(1.0))
            .fold(0.0, f64::max)
    }
}

/// (i) `E F_p(EX,X) = E|X|^p − |EX|^p`,
/// (ii) `E F_p(a,X) = F_p(a,EX) + E F_p(EX,X)`,
/// (iii) `E F_p(a,X) = E F_p(b,X) + F_p(a,b) + p(a^⟨p−1⟩ − b^⟨p−1⟩)(b − EX)`.
pub fn moment_identities(p: PExponent, x: &DiscreteDistribution, a: f64, b: f64) -> MomentIdentities {
    let pv = p.get();
    let m = x.mean();
    let e_fp_mean = x.expect(|v| bregman_fp(p, m, v));
    let e_fp_a = x.expect(|v| bregman_fp(p, a, v));
    MomentIdentities {
        i_lhs: e_fp_mean,
        i_rhs: x.expect(|v| v.abs().powf(pv)) - m.abs().powf(pv),
        ii_lhs: e_fp_a,
        ii_rhs: bregman_fp(p, a, m) + e_fp_mean,
        iii_lhs: e_fp_a,
        iii_rhs: x.expect(|v| bregman_fp(p, b, v))
            + bregman_fp(p, a, b)
            + pv * (french_power(a, pv - 1.0) - french_power(b, pv - 1.0)) * (b - m),
    }
}

/// Two-sided `p`-moment comparison with the constants `2^{p−1}` and `1 + 2^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PMomentBounds {
    /// `E|X−a|^p`
    pub moment: f64,
    /// `E|X−EX|^p + |EX−a|^p`
    pub split: f64,
    pub upper_constant: f64,
    pub lower_constant_inv: f64,
}

impl PMomentBounds {
    pub fn holds(&self, slack: f64) -> bool {
        let tol = slack * self.moment.max(self.split).max(1e-300);
        self.moment <= self.upper_constant * self.split + tol
            && self.split <= self.lower_constant_inv * self.moment + tol
    }
}

pub fn p_moment_bounds(p: PExponent, x: &DiscreteDistribution, a: f64) -> PMomentBounds {
    let pv = p.get();
    let m = x.mean();
    PMomentBounds {
        moment: x.expect(|v| (v - a).abs().powf(pv)),
        split: x.expect(|v| (v - m).abs().powf(pv)) + (m - a).abs().powf(pv),
        upper_constant: 2f64.powf(pv - 1.0),
        lower_constant_inv: 1.0 + 2f64.powf(pv),
    }
}

/// Worst case of the moment identities and `p`-moment bounds over random
/// distributions (1 to 8 atoms in `[−10, 10]`) and random `a, b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentScan {
    pub distributions: usize,
    pub max_identity_gap: f64,
    pub bound_violations: usize,
}

pub fn moment_scan(p: PExponent, count: usize, seed: u64) -> MomentScan {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut scan = MomentScan { distributions: 0, max_identity_gap: 0.0, bound_violations: 0 };
    for _ in 0..count {
        let atoms = rng.gen_range(1..=8usize);
        let mut raw: Vec<(f64, f64)> = (0..atoms).map(|_| (rng.gen_range(-10.0..10.0), rng.gen_range(0.01..1.0))).collect();
        let total: f64 = raw.iter().map(|a| a.1).sum();
        raw.iter_mut().for_each(|a| a.1 /= total);
        let rest: f64 = raw[..atoms - 1].iter().map(|a| a.1).sum();
        raw[atoms - 1].1 = 1.0 - rest;
        let Ok(x) = DiscreteDistribution::new(raw) else { continue };
        let (a, b) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let m = moment_identities(p, &x, a, b);
        // identities are compared relative to the p-th moments involved
        let size = x.expect(|v| v.abs().powf(p.get())).max(a.abs().powf(p.get())).max(b.abs().powf(p.get())).max(1.0);
        let gap = [(m.i_lhs, m.i_rhs), (m.ii_lhs, m.ii_rhs), (m.iii_lhs, m.iii_rhs)]
            .iter()
            .map(|&(l, r)| (l - r).abs() / size)
            .fold(0.0, f64::max);
        scan.max_identity_gap = scan.max_identity_gap.max(gap);
        if !p_moment_bounds(p, &x, a).holds(1e-12) {
            scan.bound_violations += 1;
        }
        scan.distributions += 1;
    }
    scan
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pe(p: f64) -> PExponent {
        PExponent::new(p).unwrap()
    }

    #[test]
    fn moment_scan_is_clean_and_seeded() {
        let s = moment_scan(pe(3.0), 1000, 5);
        assert_eq!(s.distributions, 1000);
        assert_eq!(s.bound_violations, 0);
        assert!(s.max_identity_gap <= 1e-10, "{s:?}");
        assert_eq!(s, moment_scan(pe(3.0), 1000, 5));
    }

    #[test]
    fn rejects_small_exponent() {
        assert!(PExponent::new(1.0).is_err());
        assert!(PExponent::new(0.5).is_err());
        assert!(PExponent::new(f64::NAN).is_err());
    }

    #[test]
    fn french_power_examples() {
        assert_eq!(french_power(0.0, 0.0), 0.0);
        assert_eq!(french_power(0.0, -1.5), 0.0);
        assert_eq!(french_power(-2.0, 3.0), -8.0);
        assert_eq!(french_power(4.0, 0.5), 2.0);
    }

    #[test]
    fn fp_examples() {
        assert_eq!(bregman_fp(pe(2.0), 1.0, 3.0), 4.0);
        assert!((bregman_fp(pe(4.0), 1.0, 2.0) - 11.0).abs() < 1e-12);
        // factored quartic form
        let (a, b) = (0.7, -1.3);
        let factored = (b - a) * (b - a) * (b * b + 2.0 * a * b + 3.0 * a * a);
        assert!((bregman_fp(pe(4.0), a, b) - factored).abs() < 1e-12);
        assert!((bregman_fp(pe(1.5), 0.0, 4.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn fp_series_branch_matches_direct() {
        let p = pe(2.7);
        for &(a, b) in &[(1.0, 1.2), (-3.0, -2.4), (2.0, 1.6)] {
            let pv = p.get();
            let direct = f64::abs(b).powf(pv) - f64::abs(a).powf(pv) - pv * french_power(a, pv - 1.0) * (b - a);
            assert!((bregman_fp(p, a, b) - direct).abs() < 1e-13 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn hp_examples() {
        assert_eq!(bregman_hp(pe(2.0), 1.0, 3.0), 4.0);
        assert_eq!(bregman_hp(pe(2.5), 0.3, 0.3), 0.0);
        assert!((bregman_hp(pe(3.0), -1.0, 1.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn fp_eps_examples() {
        let p = pe(1.5);
        assert!((bregman_fp_eps(p, 0.0, 1.0, 2.0) - bregman_fp(p, 1.0, 2.0)).abs() < 1e-12);
        assert_eq!(bregman_fp_eps(p, 1.0, 0.0, 0.0), 0.0);
        assert!((bregman_fp_eps(p, 1.0, 0.0, 1.0) - 0.681_792_830_507_429).abs() < 1e-12);
    }

    #[test]
    fn moment_identity_examples() {
        let coin = DiscreteDistribution::uniform(&[0.0, 1.0]).unwrap();
        let m = moment_identities(pe(2.0), &coin, 0.0, 0.0);
        assert!((m.i_lhs - 0.25).abs() < 1e-15 && (m.i_rhs - 0.25).abs() < 1e-15);

        let dirac = DiscreteDistribution::point_mass(1.7);
        let m = moment_identities(pe(2.3), &dirac, 1.7, 1.7);
        for v in [m.i_lhs, m.i_rhs, m.ii_lhs, m.ii_rhs, m.iii_lhs, m.iii_rhs] {
            assert!(v.abs() < 1e-14);
        }

        // p = 3, X uniform on {-1, 2}, a = 1, b = -1, enumerated by hand:
        // E F_3(1, X) = (F_3(1,-1) + F_3(1,2)) / 2 = (6 + 4) / 2 = 5,
        // E F_3(-1, X) = (0 + F_3(-1,2)) / 2 = (8 - 1 + 9) / 2 = 8,
        // F_3(1,-1) = 6 and 3(1 + 1)(-1 - 1/2) = -9, so 8 + 6 - 9 = 5.
        let x = DiscreteDistribution::uniform(&[-1.0, 2.0]).unwrap();
        let m = moment_identities(pe(3.0), &x, 1.0, -1.0);
        assert!((m.iii_lhs - 5.0).abs() < 1e-12);
        assert!((m.iii_rhs - m.iii_lhs).abs() < 1e-12, "{m:?}");
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![(1.0, 0.5)]).is_err());
        assert!(DiscreteDistribution::new(vec![(1.0, -0.5), (0.0, 1.5)]).is_err());
    }
}
