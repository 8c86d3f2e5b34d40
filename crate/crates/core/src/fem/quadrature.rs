//! Gauss–Legendre rules and a collapsed (Duffy) product rule on triangles.

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [0, 1].
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Newton on P_n starting from the Chebyshev-like guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Quadrature point on the reference triangle in barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TriPoint {
    pub bary: [f64; 3],
    /// Weight relative to the triangle area (weights sum to 1).
    pub weight: f64,
}

/// Collapsed product rule with `n` points per direction; exact for
/// polynomials of total degree 2n − 2 and free of points on the edges.
pub fn triangle_rule(n: usize) -> Vec<TriPoint> {
    let gl = gauss_legendre_unit(n);
    let mut pts = Vec::with_capacity(n * n);
    for &(u, wu) in &gl {
        for &(v, wv) in &gl {
            let xi = u;
            let eta = v * (1.0 - u);
            // Reference triangle has area 1/2.
            let weight = 2.0 * wu * wv * (1.0 - u);
            pts.push(TriPoint { bary: [1.0 - xi - eta, xi, eta], weight });
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre_unit(5);
        for deg in 0..10 {
            let s: f64 = rule.iter().map(|(x, w)| w * x.powi(deg)).sum();
            assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn triangle_rule_is_exact() {
        // ∫_T ξ^a η^b / |T| = 2 a! b! / (a+b+2)!
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        let rule = triangle_rule(4);
        for a in 0..4u32 {
            for b in 0..(7 - a).min(4) {
                let s: f64 = rule.iter().map(|p| p.weight * p.bary[1].powi(a as i32) * p.bary[2].powi(b as i32)).sum();
                let exact = 2.0 * fact(a) * fact(b) / fact(a + b + 2);
                assert!((s - exact).abs() < 1e-14, "a={a} b={b}");
            }
        }
    }
}
