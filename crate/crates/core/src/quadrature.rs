//! Quadrature on the reference triangle and on [0,1].

/// Points in barycentric coordinates and weights normalized to sum to one, so
/// that `area * Σ w_q f(x_q)` approximates the integral over a triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Gauss points and weights on [0,1], weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub space: TriangleRule,
    pub time: GaussRule,
}

impl Default for QuadratureRule {
    /// 7-point degree-5 triangle rule with 3-point Gauss in time.
    fn default() -> Self {
        QuadratureRule {
            space: TriangleRule::degree5(),
            time: GaussRule::new(3),
        }
    }
}

impl TriangleRule {
    /// Radon's 7-point rule, exact for polynomials of degree 5.
    pub fn degree5() -> Self {
        let s = 15f64.sqrt();
        let a1 = (6.0 - s) / 21.0;
        let a2 = (6.0 + s) / 21.0;
        let w1 = (155.0 - s) / 1200.0;
        let w2 = (155.0 + s) / 1200.0;
        let third = 1.0 / 3.0;
        let mut points = vec![[third, third, third]];
        let mut weights = vec![9.0 / 40.0];
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            points.extend([[b, a, a], [a, b, a], [a, a, b]]);
            weights.extend([w, w, w]);
        }
        TriangleRule { points, weights }
    }

    /// Conical product (collapsed Gauss) rule with `k` points per direction,
    /// exact for degree 2k - 2.
    pub fn collapsed(k: usize) -> Self {
        let g = GaussRule::new(k);
        let mut points = Vec::with_capacity(k * k);
        let mut weights = Vec::with_capacity(k * k);
        for (u, wu) in g.points.iter().zip(&g.weights) {
            for (v, wv) in g.points.iter().zip(&g.weights) {
                let xi = *u;
                let eta = v * (1.0 - u);
                points.push([1.0 - xi - eta, xi, eta]);
                weights.push(2.0 * wu * wv * (1.0 - u));
            }
        }
        TriangleRule { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl GaussRule {
    /// `k`-point Gauss–Legendre rule mapped to [0,1].
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "Gauss rule needs at least one point");
        let mut points = vec![0.0; k];
        let mut weights = vec![0.0; k];
        for i in 0..k.div_ceil(2) {
            // Newton on P_k from the Chebyshev-like initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(k, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(k, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[i] = 0.5 * (1.0 - x);
            points[k - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[k - 1 - i] = 0.5 * w;
        }
        GaussRule { points, weights }
    }

    /// Average of `f` over [a, b].
    pub fn average<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * f(a + s * (b - a)))
            .sum()
    }
}

/// Value and derivative of the Legendre polynomial P_k at x.
fn legendre(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
