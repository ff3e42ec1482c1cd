//! Monte Carlo exit positions from balls and estimates of `E^x f(X_{τ_D})`.
//!
//! From the center of a ball of radius `r` the exit distance satisfies
//! `r² / |Z − c|² ~ Beta(α/2, 1 − α/2)` with a uniform direction, so centered
//! draws are exact. Off-center draws are accepted from the centered law with
//! probability `P_D(x,z) / (M P_D(c,z))`.

use crate::divergence::PExponent;
use crate::error::{Error, Result};
use crate::forms::{hardy_stein_rhs, poisson_extension, ExteriorData};
use crate::functions::{handle, AbsPower, RealFunction};
use crate::kernels::{BallDomain, StableKernel};
use crate::quadrature::QuadratureConfig;
use crate::report::VerificationReport;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Samples per RNG stream; fixes the work split independently of threads.
pub const CHUNK: usize = 4096;

/// Rejection rounds before an off-center draw is reported as failed.
const MAX_REJECTIONS: usize = 1_000_000;

/// Exit-position sampler keyed by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct ExitSampler {
    kernel: StableKernel,
    domain: BallDomain,
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

fn keyed_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl ExitSampler {
    pub fn new(k: &StableKernel, dom: &BallDomain, seed: u64) -> Result<Self> {
        if dom.dim() != k.d() {
            return Err(Error::InvalidParameter(format!("{}-dimensional ball for a {}-dimensional kernel", dom.dim(), k.d())));
        }
        Ok(Self { kernel: *k, domain: dom.clone(), seed, stream: 0, rng: keyed_rng(seed, 0) })
    }

    /// Fresh copy reading from another stream of the same seed.
    pub fn with_stream(&self, stream: u64) -> Self {
        Self { stream, rng: keyed_rng(self.seed, stream), ..self.clone() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn kernel(&self) -> &StableKernel {
        &self.kernel
    }

    pub fn domain(&self) -> &BallDomain {
        &self.domain
    }

    /// One draw from `P_D(x, ·)`.
    pub fn sample(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.kernel.d() || !self.domain.contains(x) {
            return Err(Error::OutOfDomain("exit sampling needs a starting point inside the ball".into()));
        }
        let (c, r) = (&self.domain.center, self.domain.radius);
        let offset = self.domain.center_dist2(x).sqrt();
        let alpha = self.kernel.alpha();
        if offset == 0.0 {
            return Ok(exit_from_center(&mut self.rng, c, r, alpha));
        }
        let d = x.len() as i32;
        for _ in 0..MAX_REJECTIONS {
            let z = exit_from_center(&mut self.rng, c, r, alpha);
            let zc = dist(&z, c);
            let accept = (zc * (r - offset) / (r * dist(&z, x))).powi(d);
            if self.rng.gen::<f64>() < accept {
                return Ok(z);
            }
        }
        Err(Error::NoConvergence { value: f64::NAN, error_estimate: f64::NAN })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Exit position of the ball `B(center, radius)` started at its center.
fn exit_from_center<R: Rng>(rng: &mut R, center: &[f64], radius: f64, alpha: f64) -> Vec<f64> {
    let beta = Beta::new(0.5 * alpha, 1.0 - 0.5 * alpha).expect("valid beta parameters for α in (0,2)");
    let s: f64 = loop {
        let s = beta.sample(rng);
        if s > 0.0 {
            break s;
        }
    };
    let rho = radius / s.sqrt();
    let mut dir: Vec<f64> = if center.len() == 1 {
        vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }]
    } else {
        (0..center.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    for (v, c) in dir.iter_mut().zip(center) {
        *v = c + rho * *v / norm;
    }
    // guard against rounding onto the sphere
    if dist(&dir, center) <= radius {
        let k = radius * (1.0 + f64::EPSILON) / dist(&dir, center).max(f64::MIN_POSITIVE);
        for (v, c) in dir.iter_mut().zip(center) {
            *v = c + (*v - c) * k;
        }
    }
    dir
}

/// Convenience wrapper around [`ExitSampler::sample`].
pub fn sample_exit_position(s: &mut ExitSampler, x: &[f64]) -> Result<Vec<f64>> {
    s.sample(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn empty() -> Self {
        Self { n: 0, mean: 0.0, m2: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(a: Self, b: Self) -> Self {
        if a.n == 0 {
            return b;
        }
        if b.n == 0 {
            return a;
        }
        let n = a.n + b.n;
        let delta = b.mean - a.mean;
        Self {
            n,
            mean: a.mean + delta * b.n as f64 / n as f64,
            m2: a.m2 + b.m2 + delta * delta * (a.n as f64 * b.n as f64) / n as f64,
        }
    }

    /// Merge over a fixed binary tree so the result depends only on the order.
    fn merge_all(parts: &[Self]) -> Self {
        match parts.len() {
            0 => Self::empty(),
            1 => parts[0],
            n => Self::merge(Self::merge_all(&parts[..n / 2]), Self::merge_all(&parts[n / 2..])),
        }
    }

    fn estimate(&self, seed: u64) -> MCEstimate {
        let std_error = if self.n > 1 { (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt() } else { 0.0 };
        MCEstimate { mean: self.mean, std_error, n: self.n, seed }
    }
}

/// Runs `n` draws split into [`CHUNK`]-sized streams of `s` in parallel.
fn chunked<F>(s: &ExitSampler, n: usize, draw: F) -> Result<MCEstimate>
where
    F: Fn(&mut ExitSampler) -> Result<f64> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let base = s.stream() << 32;
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut local = s.with_stream(base | i as u64);
            let mut m = Moments::empty();
            for _ in 0..CHUNK.min(n - i * CHUNK) {
                m.push(draw(&mut local)?);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok(Moments::merge_all(&parts).estimate(s.seed()))
}

/// MC average of `f(X_{τ_D})` under `P^x` for an arbitrary-dimensional `f`.
pub fn mc_expectation_with<F>(s: &ExitSampler, x: &[f64], n: usize, f: F) -> Result<MCEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n == 0 {
        return Err(Error::InvalidParameter("at least one sample is needed".into()));
    }
    chunked(s, n, |local| local.sample(x).map(|z| f(&z)))
}

/// MC average of `f(X_{τ_D})` under `P^x` on the line.
pub fn mc_exterior_expectation(s: &ExitSampler, x: f64, f: &dyn RealFunction, n: usize) -> Result<MCEstimate> {
    if s.kernel().d() != 1 {
        return Err(Error::Unsupported("exterior functions are defined on the line".into()));
    }
    mc_expectation_with(s, &[x], n, |z| f.eval(z[0]))
}

/// MC estimate of `E^x |g(X_{τ_D})|^p` against the Green-weighted Bregman
/// integral of `u = P_D[g]`. Passes iff the gap is at most three standard
/// errors plus the quadrature budget.
#[allow(clippy::too_many_arguments)]
pub fn hardy_stein_verify(
    k: &StableKernel,
    dom: &BallDomain,
    g: &ExteriorData,
    p: PExponent,
    x: f64,
    n: usize,
    seed: u64,
    q: &QuadratureConfig,
) -> Result<VerificationReport> {
    let start = Instant::now();
    let pv = p.get();
    let sampler = ExitSampler::new(k, dom, seed)?;
    let gf = g.function().clone();
    let mc = mc_exterior_expectation(&sampler, x, &*handle(AbsPower { inner: gf, exponent: pv }), n)?;
    let u = poisson_extension(k, dom, g, q)?;
    let rhs = hardy_stein_rhs(k, dom, &u, p, x, q)?;
    let budget = 3.0 * mc.std_error + rhs.error_estimate + q.rel_tol * rhs.value.abs();
    let scale = mc.mean.abs().max(rhs.value.abs());
    let tolerance = if scale > 0.0 { budget / scale } else { 0.0 };
    let mut r = VerificationReport::compare("hardy-stein", "hardy-stein-regular-harmonic", mc.mean, rhs.value, tolerance)
        .with_seed(seed)
        .with_budget(q)
        .with_note(format!("n={} std_error={:e}", mc.n, mc.std_error));
    let within = (mc.mean - rhs.value).abs() <= budget;
    if rhs.divergent || !rhs.value.is_finite() {
        r = r.with_pass(false).with_note("right side divergent");
    } else {
        r = r.with_pass(within);
    }
    Ok(r.timed(start))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub seed: u64,
    /// Ball steps per path before the walk is abandoned.
    pub max_steps: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { seed: 0, max_steps: 10_000 }
    }
}

/// `E^x τ_D` by walk on spheres: from the current point, exit the largest
/// ball inside `D` centered there, adding its closed-form mean exit time,
/// until the walk leaves `D`.
pub fn mc_exit_time(k: &StableKernel, dom: &BallDomain, x: &[f64], n: usize, cfg: &WalkConfig) -> Result<MCEstimate> {
    let sampler = ExitSampler::new(k, dom, cfg.seed)?;
    if !dom.contains(x) || x.len() != k.d() {
        return Err(Error::OutOfDomain("exit time needs a starting point inside the ball".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("at least one sample is needed".into()));
    }
    let alpha = k.alpha();
    chunked(&sampler, n, |local| {
        let mut y = x.to_vec();
        let mut clock = 0.0;
        for _ in 0..cfg.max_steps {
            let rho = dom.radius - dom.center_dist2(&y).sqrt();
            let ball = BallDomain::new(y.clone(), rho)?;
            clock += k.getoor_exit_time(&ball, &y);
            y = exit_from_center(&mut local.rng, &y, rho, alpha);
            if !dom.contains(&y) {
                return Ok(clock);
            }
        }
        Err(Error::NoConvergence { value: clock, error_estimate: f64::INFINITY })
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical KS distance at the 1% level for large samples.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Distances `|Z − c|` of `n` exit draws from `x`, in stream order.
pub fn exit_distances(s: &ExitSampler, x: &[f64], n: usize) -> Result<Vec<f64>> {
    let chunks = n.div_ceil(CHUNK);
    let base = s.stream() << 32;
    let c = s.domain().center.clone();
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut local = s.with_stream(base | i as u64);
            (0..CHUNK.min(n - i * CHUNK)).map(|_| local.sample(x).map(|z| dist(&z, &c))).collect()
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{AnnulusLevels, AnnulusSupport, Constant};
    use crate::kernels::poisson_ball;
    use crate::quadrature::{integrate_singular, Singular};

    fn unit() -> BallDomain {
        BallDomain::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn draws_land_outside_the_closed_ball() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let mut s = ExitSampler::new(&k, &unit(), 5).unwrap();
        for x in [0.0, 0.3, -0.8] {
            for _ in 0..2000 {
                assert!(!unit().in_closure(&s.sample(&[x]).unwrap()));
            }
        }
        let k2 = StableKernel::new(2, 1.2).unwrap();
        let disc = BallDomain::new(vec![0.5, 0.0], 2.0).unwrap();
        let mut s2 = ExitSampler::new(&k2, &disc, 1).unwrap();
        for _ in 0..1000 {
            assert!(!disc.in_closure(&s2.sample(&[1.0, -0.4]).unwrap()));
        }
    }

    #[test]
    fn constant_has_zero_error() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let s = ExitSampler::new(&k, &unit(), 9).unwrap();
        let e = mc_exterior_expectation(&s, 0.2, &Constant(1.0), 10_000).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.n, 10_000);
    }

    #[test]
    fn far_mass_and_symmetry() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let s = ExitSampler::new(&k, &unit(), 11).unwrap();
        let n = 100_000;
        let far = mc_expectation_with(&s, &[0.0], n, |z| (z[0].abs() > 2.0) as u8 as f64).unwrap();
        // oracle: 2 ∫_2^∞ P_D(0,z) dz via z = 2/t
        let q = QuadratureConfig::default();
        let tail = |t: f64| if t <= 0.0 { 0.0 } else { poisson_ball(&k, &unit(), &[0.0], &[2.0 / t]).unwrap() * 2.0 / (t * t) };
        let exact = 2.0 * integrate_singular(&tail, 0.0, 1.0, Singular::Lo, &q).value;
        assert!((far.mean - exact).abs() <= 3.0 * far.std_error, "{far:?} vs {exact}");
        let sign = mc_expectation_with(&s, &[0.0], n, |z| z[0].signum()).unwrap();
        assert!(sign.mean.abs() <= 3.0 * sign.std_error);
    }

    #[test]
    fn off_center_matches_the_poisson_extension() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let g = ExteriorData::new(handle(AnnulusLevels::indicator(0.0, AnnulusSupport::new(1.0, 1.5).unwrap())));
        let q = QuadratureConfig { rel_tol: 1e-6, abs_tol: 1e-10, ..Default::default() };
        let u = poisson_extension(&k, &unit(), &g, &q).unwrap();
        let s = ExitSampler::new(&k, &unit(), 3).unwrap();
        for x in [0.5, -0.3] {
            let e = mc_exterior_expectation(&s, x, g.function().as_ref(), 100_000).unwrap();
            assert!((e.mean - u.eval(x)).abs() <= 3.0 * e.std_error, "x={x}: {e:?} vs {}", u.eval(x));
        }
    }

    #[test]
    fn reproducible_streams() {
        let k = StableKernel::new(1, 1.5).unwrap();
        let s = ExitSampler::new(&k, &unit(), 42).unwrap();
        let f = |z: &[f64]| z[0].abs().min(4.0);
        let a = mc_expectation_with(&s, &[0.1], 20_000, f).unwrap();
        let b = mc_expectation_with(&s, &[0.1], 20_000, f).unwrap();
        assert_eq!(a, b);
        let c = mc_expectation_with(&ExitSampler::new(&k, &unit(), 43).unwrap(), &[0.1], 20_000, f).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn radial_law_passes_ks() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let s = ExitSampler::new(&k, &unit(), 2024).unwrap();
        let n = 100_000;
        let radii = exit_distances(&s, &[0.0], n).unwrap();
        // quadrature CDF of |Z| from the kernel, independent of the beta law
        let q = QuadratureConfig { rel_tol: 1e-9, abs_tol: 1e-13, ..Default::default() };
        let dens = |z: f64| 2.0 * poisson_ball(&k, &unit(), &[0.0], &[z]).unwrap();
        let mut sorted = radii.clone();
        sorted.sort_by(f64::total_cmp);
        let mut cdf = Vec::with_capacity(n);
        let mut acc = integrate_singular(&dens, 1.0, sorted[0], Singular::Lo, &q).value;
        cdf.push(acc);
        for w in sorted.windows(2) {
            acc += crate::quadrature::integrate(&dens, w[0], w[1], &q).value;
            cdf.push(acc);
        }
        let nf = n as f64;
        let d = cdf.iter().enumerate().map(|(i, &f)| (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())).fold(0.0, f64::max);
        assert!(d <= ks_critical_1pct(n), "KS {d}");
    }

    #[test]
    fn ks_statistic_of_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&xs, |x| x) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn exit_time_walk() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let cfg = WalkConfig { seed: 7, max_steps: 10_000 };
        let e = mc_exit_time(&k, &unit(), &[0.0], 1000, &cfg).unwrap();
        assert!((e.mean - 1.0).abs() < 1e-12 && e.std_error == 0.0);
        let q = QuadratureConfig::default();
        for x in [0.4, -0.75] {
            let e = mc_exit_time(&k, &unit(), &[x], 100_000, &cfg).unwrap();
            let exact = crate::kernels::expected_exit_time(&k, &unit(), &[x], &q).unwrap().value;
            assert!((e.mean - exact).abs() <= 3.0 * e.std_error, "x={x}: {e:?} vs {exact}");
        }
        let small = BallDomain::interval(0.1, 0.6).unwrap();
        let inner = mc_exit_time(&k, &small, &[0.4], 20_000, &cfg).unwrap();
        let outer = mc_exit_time(&k, &unit(), &[0.4], 20_000, &cfg).unwrap();
        assert!(inner.mean < outer.mean);
    }

    #[test]
    fn hardy_stein_for_constant_data() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let g = ExteriorData::new(handle(Constant(-1.5)));
        let q = QuadratureConfig { rel_tol: 1e-6, abs_tol: 1e-10, ..Default::default() };
        let r = hardy_stein_verify(&k, &unit(), &g, PExponent::new(3.0).unwrap(), 0.0, 1000, 1, &q).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.lhs - 3.375).abs() < 1e-12 && (r.rhs - 3.375).abs() < 1e-9);
    }
}
