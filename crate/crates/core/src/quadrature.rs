//! Gauss-Legendre rules on intervals and collapsed (Duffy) rules on triangles.

use std::f64::consts::PI;

/// Gauss-Legendre rule on the reference interval (-1, 1).
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one point");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Newton iteration from the Chebyshev-like initial guess.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
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
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
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

/// Quadrature on a triangle obtained by collapsing a tensor Gauss rule.
///
/// With `n` points per direction the rule integrates polynomials of total
/// degree `2n - 2` exactly.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Barycentric-free reference points `(xi, eta)` in the unit triangle
    /// `{xi, eta >= 0, xi + eta <= 1}` with weights summing to 1/2.
    pub points: Vec<(f64, f64, f64)>,
}

impl TriangleRule {
    pub fn new(n: usize) -> Self {
        let g = GaussLegendre::new(n);
        let mut points = Vec::with_capacity(n * n);
        for (u, wu) in g.on_interval(0.0, 1.0) {
            for (v, wv) in g.on_interval(0.0, 1.0) {
                let xi = u;
                let eta = v * (1.0 - u);
                points.push((xi, eta, wu * wv * (1.0 - u)));
            }
        }
        Self { points }
    }

    /// Physical points and weights of the triangle with vertices `p0, p1, p2`.
    pub fn on_triangle(
        &self,
        p0: (f64, f64),
        p1: (f64, f64),
        p2: (f64, f64),
    ) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let (ax, ay) = (p1.0 - p0.0, p1.1 - p0.1);
        let (bx, by) = (p2.0 - p0.0, p2.1 - p0.1);
        let jac = (ax * by - ay * bx).abs();
        self.points.iter().map(move |&(xi, eta, w)| {
            (p0.0 + ax * xi + bx * eta, p0.1 + ay * xi + by * eta, w * jac)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_to_degree_2n_minus_1() {
        for n in 1..=8 {
            let g = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let got = g.integrate(0.0, 2.0, |x| x.powi(deg as i32));
                let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                assert!((got - exact).abs() < 1e-12 * exact.max(1.0), "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let g = GaussLegendre::new(5);
        let s: f64 = g.on_interval(-3.0, 1.5).map(|(_, w)| w).sum();
        assert!((s - 4.5).abs() < 1e-13);
    }

    #[test]
    fn triangle_rule_integrates_monomials() {
        let r = TriangleRule::new(5);
        // int over unit triangle of x^a y^b = a! b! / (a + b + 2)!
        let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
        for a in 0..5u32 {
            for b in 0..(8 - a) {
                let got: f64 = r
                    .on_triangle((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))
                    .map(|(x, y, w)| w * x.powi(a as i32) * y.powi(b as i32))
                    .sum();
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((got - exact).abs() < 1e-14, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn triangle_rule_area_of_mapped_triangle() {
        let r = TriangleRule::new(3);
        let area: f64 = r
            .on_triangle((1.0, 1.0), (1.0, 3.0), (4.0, 1.0))
            .map(|(_, _, w)| w)
            .sum();
        assert!((area - 3.0).abs() < 1e-13);
    }
}
