//! Gauss–Legendre rules on intervals and tensor rules on rectangles.

use crate::scalar::Scalar;

/// Points per axis for mass matrices, loads and error norms.
pub const ASSEMBLY_POINTS: usize = 3;

/// Points per axis for the interpolants Π_h and P_h.
pub const PROJECTION_POINTS: usize = 6;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Nodes come from Newton's method on the Legendre three-term recurrence,
/// started from the Chebyshev-like guess `cos(π(k + 3/4)/(n + 1/2))`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a quadrature rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// A 1-D rule stored on the reference interval `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Rule1d<T> {
    pub points: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> Rule1d<T> {
    pub fn gauss(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self {
            points: x.iter().map(|&s| T::of(0.5 * (s + 1.0))).collect(),
            weights: w.iter().map(|&s| T::of(0.5 * s)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `∫_a^b g(s) ds`
    pub fn integrate(&self, a: T, b: T, mut g: impl FnMut(T) -> T) -> T {
        let len = b - a;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * g(a + s * len))
            .sum::<T>()
            * len
    }
}

/// Tensor-product rule on an axis-aligned rectangle.
#[derive(Debug, Clone)]
pub struct RectRule<T> {
    line: Rule1d<T>,
}

impl<T: Scalar> RectRule<T> {
    pub fn gauss(n: usize) -> Self {
        Self {
            line: Rule1d::gauss(n),
        }
    }

    /// Physical points and weights on `[xa, xa+hx] × [ya, ya+hy]`.
    pub fn points_on(&self, xa: T, ya: T, hx: T, hy: T) -> impl Iterator<Item = (T, T, T)> + '_ {
        let area = hx * hy;
        let l = &self.line;
        (0..l.len()).flat_map(move |j| {
            (0..l.len()).map(move |i| {
                (
                    xa + l.points[i] * hx,
                    ya + l.points[j] * hy,
                    l.weights[i] * l.weights[j] * area,
                )
            })
        })
    }

    pub fn integrate(&self, xa: T, ya: T, hx: T, hy: T, mut g: impl FnMut(T, T) -> T) -> T {
        self.points_on(xa, ya, hx, hy).map(|(x, y, w)| w * g(x, y)).sum()
    }
}
