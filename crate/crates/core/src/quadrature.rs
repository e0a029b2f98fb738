//! Gauss–Legendre rules on reference and physical intervals.

use std::f64::consts::PI;

/// Gauss–Legendre rule with `order` points on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes via Newton iteration on the Legendre polynomial, weights from
    /// the derivative. `order` must be at least 1.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
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
            points[i] = -x;
            points[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            points[n / 2] = 0.0;
        }
        Self { points, weights }
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// Points and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&p, &w)| (mid + half * p, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
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
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Splits `[a, b]` at the sorted `breaks` that fall strictly inside it.
pub(crate) fn split_at<'a>(a: f64, b: f64, breaks: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
    let start = breaks.partition_point(|&t| t <= a);
    let end = breaks.partition_point(|&t| t < b);
    let inner = &breaks[start..end];
    let mut left = a;
    inner
        .iter()
        .copied()
        .chain(std::iter::once(b))
        .map(move |right| {
            let seg = (left, right);
            left = right;
            seg
        })
        .filter(|(l, r)| r > l)
}
