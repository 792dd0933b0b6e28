//! Gauss–Legendre rules and product rules on unit spheres.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Gauss–Legendre nodes and weights on [−1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre(n, x);
                    dp = d;
                    break;
                }
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
        GaussLegendre { nodes, weights }
    }

    /// Cached rule with `n` points.
    pub fn new(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(GaussLegendre::compute(n))).clone()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre over `panels` equal sub-intervals of [a, b].
pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let gl = GaussLegendre::new(order);
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let lo = a + p as f64 * h;
            gl.on_interval(lo, lo + h).collect::<Vec<_>>()
        })
        .collect()
}

/// A product rule on the unit sphere S^{d−1} ⊂ ℝ^d: directions with weights
/// summing to the sphere volume. `order` controls the resolution per angle.
pub fn sphere_rule(d: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    match d {
        0 => vec![],
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let n = 2 * order;
            (0..n)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / n as f64;
                    (vec![phi.cos(), phi.sin()], 2.0 * PI / n as f64)
                })
                .collect()
        }
        _ => {
            // w = (sin θ · w', cos θ) with w' ∈ S^{d−2}, measure sin^{d−2}θ dθ dw'.
            // Odd d: Gauss–Legendre in cos θ (polynomial weight). Even d: the
            // midpoint rule in θ, exact for the trigonometric polynomials that arise.
            let inner = sphere_rule(d - 1, order);
            let polar: Vec<(f64, f64)> = if d % 2 == 1 {
                GaussLegendre::new(order)
                    .on_interval(-1.0, 1.0)
                    .map(|(t, w)| (t.acos(), w * (1.0 - t * t).powi((d as i32 - 3) / 2)))
                    .collect()
            } else {
                let n = 2 * order;
                (0..n)
                    .map(|k| {
                        let theta = PI * (k as f64 + 0.5) / n as f64;
                        (theta, PI / n as f64 * theta.sin().powi(d as i32 - 2))
                    })
                    .collect()
            };
            let mut out = Vec::with_capacity(polar.len() * inner.len());
            for (theta, wt) in polar {
                let (s, c) = theta.sin_cos();
                for (dir, wi) in &inner {
                    let mut v: Vec<f64> = dir.iter().map(|x| s * x).collect();
                    v.push(c);
                    out.push((v, wt * wi));
                }
            }
            out
        }
    }
}

/// Chebyshev points of the first kind mapped to [a, b], ascending.
pub fn chebyshev_points(n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let x = -((2 * k + 1) as f64 * PI / (2 * n) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::sphere_volume;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(7);
        let v = gl.integrate(0.0, 2.0, |x| x.powi(13));
        assert!((v - 2f64.powi(14) / 14.0).abs() < 1e-10);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_rules_sum_to_volume() {
        for d in 1..=5 {
            let s: f64 = sphere_rule(d, 8).iter().map(|(_, w)| w).sum();
            assert!((s - sphere_volume(d - 1)).abs() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn sphere_moments() {
        // ∫ w₁² = o/d and ∫ w₁²w₂² = o/(d(d+2)) on S^{d−1}
        for d in 2..=5 {
            let o = sphere_volume(d - 1);
            let rule = sphere_rule(d, 10);
            let m2: f64 = rule.iter().map(|(v, w)| w * v[0] * v[0]).sum();
            let m22: f64 = rule.iter().map(|(v, w)| w * v[0] * v[0] * v[1] * v[1]).sum();
            assert!((m2 - o / d as f64).abs() < 1e-12);
            assert!((m22 - o / (d * (d + 2)) as f64).abs() < 1e-12);
        }
    }
}
