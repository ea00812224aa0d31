//! Gauss–Legendre quadrature on finite intervals.

use crate::real::Real;

/// Gauss–Legendre rule of fixed order on `[-1, 1]`.
///
/// Nodes are computed once in `f64` by Newton iteration on the Legendre
/// recurrence and then cast to `T`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let (nodes, weights) = legendre_nodes(order);
        Self {
            nodes: nodes.into_iter().map(T::lit).collect(),
            weights: weights.into_iter().map(T::lit).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = (b - a) / T::lit(2.0);
        let mid = (a + b) / T::lit(2.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        if a == b {
            return T::zero();
        }
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Integrates over `[a, b]` split at every break point lying strictly inside.
    pub fn integrate_with_breaks<F: FnMut(T) -> T>(&self, a: T, b: T, breaks: &[T], mut f: F) -> T {
        let mut pts: Vec<T> = Vec::with_capacity(breaks.len() + 2);
        pts.push(a);
        pts.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
        pts.push(b);
        pts.sort_by(|x, y| x.partial_cmp(y).expect("finite break points"));
        pts.dedup();
        pts.windows(2)
            .map(|w| self.integrate(w[0], w[1], &mut f))
            .sum()
    }

    /// Composite rule with `panels` equal sub-intervals.
    pub fn integrate_composite<F: FnMut(T) -> T>(&self, a: T, b: T, panels: usize, mut f: F) -> T {
        let panels = panels.max(1);
        let h = (b - a) / T::from_usize_lossy(panels);
        (0..panels)
            .map(|i| {
                let lo = a + h * T::from_usize_lossy(i);
                let hi = if i + 1 == panels { b } else { lo + h };
                self.integrate(lo, hi, &mut f)
            })
            .sum()
    }
}

fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut x = (core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
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
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
