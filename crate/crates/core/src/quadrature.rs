//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights of the `q`-point rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(q: usize) -> Self {
        assert!(q >= 1);
        let mut nodes = vec![0.0; q];
        let mut weights = vec![0.0; q];
        let m = q.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(q, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(q, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[q - 1 - i] = x;
            weights[i] = w;
            weights[q - 1 - i] = w;
        }
        if q % 2 == 1 {
            nodes[q / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + r * x, r * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule over `panels` equal panels.
    pub fn composite<F: Fn(f64) -> f64>(&self, a: f64, b: f64, panels: usize, f: F) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + h * k as f64;
                self.integrate(lo, lo + h, &f)
            })
            .sum()
    }

    /// Composite rule on panels refined geometrically toward both ends,
    /// for integrands with integrable endpoint singularities.
    pub fn graded<F: Fn(f64) -> f64>(&self, a: f64, b: f64, levels: u32, f: F) -> f64 {
        let mid = 0.5 * (a + b);
        self.graded_one(a, mid, levels, &f) + self.graded_one(b, mid, levels, &f)
    }

    /// Integral over the segment between `sing` and `other`, with panels
    /// shrinking geometrically toward `sing`. Orientation is handled so the
    /// result is `∫_{min}^{max}`.
    fn graded_one<F: Fn(f64) -> f64>(&self, sing: f64, other: f64, levels: u32, f: &F) -> f64 {
        let mut total = 0.0;
        let mut outer = other;
        let floor = 64.0 * f64::EPSILON * sing.abs().max(1.0);
        for _ in 0..levels {
            if (outer - sing).abs() < floor {
                break;
            }
            let inner = sing + 0.5 * (outer - sing);
            total += self.integrate(inner.min(outer), inner.max(outer), f);
            outer = inner;
        }
        total + self.integrate(sing.min(outer), sing.max(outer), f)
    }
}

/// `(P_q(x), P_q'(x))` by the three-term recurrence.
fn legendre(q: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        for q in 1..12 {
            let g = GaussLegendre::new(q);
            assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for p in 0..(2 * q) as i32 {
                let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
                let got = g.integrate(-1.0, 1.0, |x| x.powi(p));
                assert!((got - exact).abs() < 1e-13, "q={q} p={p}");
            }
        }
    }

    #[test]
    fn graded_handles_log_endpoints() {
        let g = GaussLegendre::new(8);
        // ∫_0^1 ln x + ln(1-x) dx = -2
        let v = g.graded(0.0, 1.0, 60, |x| x.ln() + (1.0 - x).ln());
        assert!((v + 2.0).abs() < 1e-10, "{v}");
    }
}
