//! Gauss-Legendre quadrature rules.

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
/// Exact for polynomials up to degree 2n - 1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess, refined by Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
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
        let (_, d) = legendre_and_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrate `f` over `[lo, hi]` with an n-point Gauss-Legendre rule.
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Cached rule mapped to an arbitrary interval.
pub struct MappedRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MappedRule {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        MappedRule {
            points: nodes.iter().map(|x| mid + half * x).collect(),
            weights: weights.iter().map(|w| w * half).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_sum_to_interval_length() {
        for n in 1..=12 {
            let (_, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-14, "n={n}: {total}");
        }
    }

    #[test]
    fn monomial_exactness_x6_at_q4() {
        // degree 6 <= 2*4 - 1 = 7
        let v = integrate(|x| x.powi(6), 0.0, 1.0, 4);
        assert!((v - 1.0 / 7.0).abs() < 1e-14, "{v}");
    }

    #[test]
    fn exactness_up_to_2q_minus_1() {
        for q in 1..=8usize {
            for d in 0..=(2 * q - 1) as i32 {
                let v = integrate(|x| x.powi(d), -1.0, 2.0, q);
                let exact = (2f64.powi(d + 1) - (-1f64).powi(d + 1)) / (d as f64 + 1.0);
                assert!((v - exact).abs() < 1e-12 * exact.abs().max(1.0), "q={q} d={d}");
            }
        }
    }

    #[test]
    fn sine_integral_converges() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 12);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
