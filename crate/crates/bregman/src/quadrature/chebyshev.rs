//! Chebyshev–Lobatto interpolants used to cache expensive smooth integrands.

use rayon::prelude::*;

fn lobatto_nodes(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..=n)
        .map(|j| {
            let t = (std::f64::consts::PI * j as f64 / n as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        })
        .collect()
}

/// Chebyshev coefficients from Lobatto samples (direct DCT-I).
fn coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len() - 1;
    (0..=n)
        .map(|k| {
            let mut s = 0.0;
            for (j, v) in values.iter().enumerate() {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                s += w * v * (std::f64::consts::PI * (j * k) as f64 / n as f64).cos();
            }
            let c = 2.0 * s / n as f64;
            if k == 0 || k == n {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}

/// Size of the three highest coefficients relative to the largest one.
fn tail_ratio(values: &[f64]) -> f64 {
    let c = coefficients(values);
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let n = c.len();
    c[n.saturating_sub(3)..].iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
}

fn barycentric(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let n = nodes.len() - 1;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..=n {
        let dx = x - nodes[j];
        if dx == 0.0 {
            return values[j];
        }
        let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
        if j == 0 || j == n {
            w *= 0.5;
        }
        let t = w / dx;
        num += t * values[j];
        den += t;
    }
    num / den
}

#[derive(Debug, Clone)]
pub struct Chebyshev1d {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
    converged: bool,
}

impl Chebyshev1d {
    /// Doubles the degree from `min_n` until the coefficient tail drops below
    /// `tol` relative to the largest coefficient, or `max_n` is reached.
    pub fn fit<F: Fn(f64) -> f64 + Sync>(f: F, lo: f64, hi: f64, tol: f64, min_n: usize, max_n: usize) -> Self {
        let mut n = min_n.max(2);
        let mut nodes = lobatto_nodes(n, lo, hi);
        let mut values: Vec<f64> = nodes.par_iter().map(|&x| f(x)).collect();
        loop {
            let ok = tail_ratio(&values) <= tol;
            if ok || 2 * n > max_n {
                return Self { lo, hi, nodes, values, converged: ok };
            }
            let m = 2 * n;
            let fine = lobatto_nodes(m, lo, hi);
            let fresh: Vec<f64> = (0..=m).into_par_iter().filter(|j| j % 2 == 1).map(|j| f(fine[j])).collect();
            let mut merged = Vec::with_capacity(m + 1);
            for j in 0..=m {
                merged.push(if j % 2 == 0 { values[j / 2] } else { fresh[j / 2] });
            }
            n = m;
            nodes = fine;
            values = merged;
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        barycentric(&self.nodes, &self.values, x.clamp(self.lo, self.hi))
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn converged(&self) -> bool {
        self.converged
    }
}

/// Tensor-product Lobatto interpolant on a rectangle.
#[derive(Debug, Clone)]
pub struct Chebyshev2d {
    x: (f64, f64),
    y: (f64, f64),
    xn: Vec<f64>,
    yn: Vec<f64>,
    /// Row-major, `values[i * ny + j] = f(xn[i], yn[j])`.
    values: Vec<f64>,
    converged: bool,
}

impl Chebyshev2d {
    pub fn fit<F: Fn(f64, f64) -> f64 + Sync>(
        f: F,
        x: (f64, f64),
        y: (f64, f64),
        tol: f64,
        min_n: usize,
        max_n: usize,
    ) -> Self {
        let (mut nx, mut ny) = (min_n.max(2), min_n.max(2));
        let mut xn = lobatto_nodes(nx, x.0, x.1);
        let mut yn = lobatto_nodes(ny, y.0, y.1);
        let mut values = Self::sample(&f, &xn, &yn, None);
        loop {
            let cols = ny + 1;
            let x_tail = (0..cols)
                .map(|j| tail_ratio(&(0..=nx).map(|i| values[i * cols + j]).collect::<Vec<_>>()))
                .fold(0.0, f64::max);
            let y_tail = (0..=nx).map(|i| tail_ratio(&values[i * cols..(i + 1) * cols])).fold(0.0, f64::max);
            let refine_x = x_tail > tol && 2 * nx <= max_n;
            let refine_y = y_tail > tol && 2 * ny <= max_n;
            if !refine_x && !refine_y {
                let converged = x_tail <= tol && y_tail <= tol;
                return Self { x, y, xn, yn, values, converged };
            }
            let old = (xn.clone(), yn.clone(), values.clone(), refine_x, refine_y);
            if refine_x {
                nx *= 2;
                xn = lobatto_nodes(nx, x.0, x.1);
            }
            if refine_y {
                ny *= 2;
                yn = lobatto_nodes(ny, y.0, y.1);
            }
            values = Self::sample(&f, &xn, &yn, Some(old));
        }
    }

    #[allow(clippy::type_complexity)]
    fn sample<F: Fn(f64, f64) -> f64 + Sync>(
        f: &F,
        xn: &[f64],
        yn: &[f64],
        old: Option<(Vec<f64>, Vec<f64>, Vec<f64>, bool, bool)>,
    ) -> Vec<f64> {
        let cols = yn.len();
        (0..xn.len() * cols)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / cols, idx % cols);
                if let Some((oxn, oyn, ov, rx, ry)) = &old {
                    let oi = if *rx { (i % 2 == 0).then_some(i / 2) } else { Some(i) };
                    let oj = if *ry { (j % 2 == 0).then_some(j / 2) } else { Some(j) };
                    if let (Some(oi), Some(oj)) = (oi, oj) {
                        debug_assert!(oi < oxn.len() && oj < oyn.len());
                        return ov[oi * oyn.len() + oj];
                    }
                }
                f(xn[i], yn[j])
            })
            .collect()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(self.x.0, self.x.1);
        let y = y.clamp(self.y.0, self.y.1);
        let cols = self.yn.len();
        let row: Vec<f64> =
            (0..self.xn.len()).map(|i| barycentric(&self.yn, &self.values[i * cols..(i + 1) * cols], y)).collect();
        barycentric(&self.xn, &row, x)
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.xn.len(), self.yn.len())
    }
}
