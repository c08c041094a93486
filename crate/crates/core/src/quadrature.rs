//! Gauss–Legendre rules and an adaptive driver.

use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Eight-point rule mapped to [0, 1], cached.
pub fn gl8_unit() -> &'static ([f64; 8], [f64; 8]) {
    static RULE: OnceLock<([f64; 8], [f64; 8])> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(8);
        let mut u = [0.0; 8];
        let mut v = [0.0; 8];
        for i in 0..8 {
            u[i] = 0.5 * (x[i] + 1.0);
            v[i] = 0.5 * w[i];
        }
        (u, v)
    })
}

/// Adaptive bisection with a 5-point Gauss rule against its two halves.
pub fn adaptive_gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (x, w) = gauss_legendre(5);
    let rule = |lo: f64, hi: f64| -> f64 {
        let c = 0.5 * (lo + hi);
        let r = 0.5 * (hi - lo);
        x.iter().zip(&w).map(|(xi, wi)| wi * f(c + r * xi)).sum::<f64>() * r
    };
    fn recurse(rule: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let left = rule(lo, mid);
        let right = rule(mid, hi);
        if depth == 0 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        recurse(rule, lo, mid, left, 0.5 * tol, depth - 1)
            + recurse(rule, mid, hi, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let whole = rule(a, b);
    recurse(&rule, a, b, whole, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for n in 1..=10 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn adaptive_handles_smooth_integrands() {
        let q = adaptive_gauss(&|x: f64| x.exp(), 0.0, 1.0, 1e-13);
        assert!((q - (1f64.exp() - 1.0)).abs() < 1e-12);
        let q = adaptive_gauss(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-12);
        assert!((q - 2.0 / 3.0).abs() < 1e-10);
    }
}
