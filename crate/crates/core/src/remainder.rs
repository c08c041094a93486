//! Curvature-expansion remainder `R(a, b) = s(a+b) - s(a) - b s'(a)` with
//! `s(q) = q/sqrt(1+q^2)`, its partial derivatives, the residual energies
//! `Q_j` and the sources `F_j`.
//!
//! Everything is written through the derivatives of `s`. For `|b|` below
//! [`SMALL_B`] the differences are replaced by Taylor-remainder integrals
//! `b^k * int_0^1 s^(m)(a + b u) (1-u)^(k-1)/(k-1)! du` evaluated with an
//! eight-point Gauss rule, which keeps full relative accuracy as `b -> 0`.

use crate::quadrature::gl8_unit;

pub const SMALL_B: f64 = 0.25;

/// `s(q) = q/sqrt(1+q^2)` and its first six derivatives.
pub fn s(q: f64) -> f64 {
    q / (1.0 + q * q).sqrt()
}

pub fn s1(q: f64) -> f64 {
    (1.0 + q * q).powf(-1.5)
}

pub fn s2(q: f64) -> f64 {
    -3.0 * q * (1.0 + q * q).powf(-2.5)
}

pub fn s3(q: f64) -> f64 {
    let q2 = q * q;
    (12.0 * q2 - 3.0) * (1.0 + q2).powf(-3.5)
}

pub fn s4(q: f64) -> f64 {
    let q2 = q * q;
    (45.0 * q - 60.0 * q * q2) * (1.0 + q2).powf(-4.5)
}

pub fn s5(q: f64) -> f64 {
    let q2 = q * q;
    (45.0 - 540.0 * q2 + 360.0 * q2 * q2) * (1.0 + q2).powf(-5.5)
}

/// Antiderivative of `s`.
pub fn s_int(q: f64) -> f64 {
    (1.0 + q * q).sqrt()
}

fn derivative(order: u8) -> fn(f64) -> f64 {
    match order {
        1 => s1,
        2 => s2,
        3 => s3,
        4 => s4,
        5 => s5,
        _ => unreachable!(),
    }
}

/// `int_0^1 s^(order)(a + b u) (1-u)^k du`.
fn moment(order: u8, k: i32, a: f64, b: f64) -> f64 {
    let f = derivative(order);
    let (u, w) = gl8_unit();
    let mut acc = 0.0;
    for i in 0..8 {
        acc += w[i] * f(a + b * u[i]) * (1.0 - u[i]).powi(k);
    }
    acc
}

pub fn r(a: f64, b: f64) -> f64 {
    if b.abs() <= SMALL_B {
        b * b * moment(2, 1, a, b)
    } else {
        s(a + b) - s(a) - b * s1(a)
    }
}

pub fn dz2_r(a: f64, b: f64) -> f64 {
    if b.abs() <= SMALL_B {
        b * moment(2, 0, a, b)
    } else {
        s1(a + b) - s1(a)
    }
}

pub fn d2z2_r(a: f64, b: f64) -> f64 {
    s2(a + b)
}

pub fn d3z2_r(a: f64, b: f64) -> f64 {
    s3(a + b)
}

pub fn dz1_r(a: f64, b: f64) -> f64 {
    if b.abs() <= SMALL_B {
        b * b * moment(3, 1, a, b)
    } else {
        s1(a + b) - s1(a) - b * s2(a)
    }
}

pub fn d2z1_r(a: f64, b: f64) -> f64 {
    if b.abs() <= SMALL_B {
        b * b * moment(4, 1, a, b)
    } else {
        s2(a + b) - s2(a) - b * s3(a)
    }
}

pub fn dz1dz2_r(a: f64, b: f64) -> f64 {
    if b.abs() <= SMALL_B {
        b * moment(3, 0, a, b)
    } else {
        s2(a + b) - s2(a)
    }
}

pub fn d2z2dz1_r(a: f64, b: f64) -> f64 {
    s3(a + b)
}

/// `Q_0(a, b) = int_0^b R(a, z) dz`.
pub fn q0(a: f64, b: f64) -> f64 {
    if b.abs() <= SMALL_B {
        0.5 * b * b * b * moment(2, 2, a, b)
    } else {
        s_int(a + b) - s_int(a) - b * s(a) - 0.5 * b * b * s1(a)
    }
}

/// Reference `Q_0` by adaptive quadrature of `R(a, .)` over `[0, b]`.
pub fn q0_adaptive(a: f64, b: f64, tol: f64) -> f64 {
    crate::quadrature::adaptive_gauss(&|z| r(a, z), 0.0, b, tol)
}

/// `Q_j` at one point: `a = h_s'`, `p = eta'`, `p1 = d_t eta'`, `p2 = d_t^2 eta'`.
pub fn q_point(j: u8, a: f64, p: f64, p1: f64, p2: f64) -> f64 {
    match j {
        0 => q0(a, p),
        1 => 0.5 * p1 * p1 * dz2_r(a, p),
        2 => 0.5 * p2 * p2 * dz2_r(a, p) + p2 * p1 * p1 * d2z2_r(a, p),
        _ => panic!("Q_j defined for j = 0, 1, 2"),
    }
}

/// Source density `F_j` at one point.
pub fn calf_point(j: u8, a: f64, p: f64, p1: f64, p2: f64) -> f64 {
    match j {
        1 => 0.5 * p1 * p1 * p1 * d2z2_r(a, p),
        2 => 2.5 * p2 * p2 * p1 * d2z2_r(a, p) + p2 * p1 * p1 * p1 * d3z2_r(a, p),
        _ => panic!("F_j defined for j = 1, 2"),
    }
}

fn check_lengths(xs: &[&[f64]]) -> crate::Result<usize> {
    let n = xs[0].len();
    if xs.iter().any(|v| v.len() != n) {
        return Err(crate::MuskatError::Invalid("mismatched grid sizes".into()));
    }
    Ok(n)
}

/// Pointwise `Q_j` over sampled slopes (any common sampling, nodes or midpoints).
pub fn residual_q(j: u8, hs_prime: &[f64], eta_prime: &[f64], dt_eta_prime: &[f64], d2t_eta_prime: &[f64]) -> crate::Result<Vec<f64>> {
    if j > 2 {
        return Err(crate::MuskatError::Invalid(format!("Q_j needs j in 0..=2, got {j}")));
    }
    let n = if j == 0 {
        check_lengths(&[hs_prime, eta_prime])?
    } else {
        check_lengths(&[hs_prime, eta_prime, dt_eta_prime, d2t_eta_prime])?
    };
    Ok((0..n)
        .map(|i| {
            let (p1, p2) = if j == 0 { (0.0, 0.0) } else { (dt_eta_prime[i], d2t_eta_prime[i]) };
            q_point(j, hs_prime[i], eta_prime[i], p1, p2)
        })
        .collect())
}

pub fn source_calf(j: u8, hs_prime: &[f64], eta_prime: &[f64], dt_eta_prime: &[f64], d2t_eta_prime: &[f64]) -> crate::Result<Vec<f64>> {
    if !(1..=2).contains(&j) {
        return Err(crate::MuskatError::Invalid(format!("F_j needs j in 1..=2, got {j}")));
    }
    let n = check_lengths(&[hs_prime, eta_prime, dt_eta_prime, d2t_eta_prime])?;
    Ok((0..n).map(|i| calf_point(j, hs_prime[i], eta_prime[i], dt_eta_prime[i], d2t_eta_prime[i])).collect())
}

pub const RATIO_NAMES: [&str; 9] = [
    "Q0/z2^3",
    "R/z2^2",
    "dz2R/z2",
    "dz1R/z2^2",
    "d2z2R",
    "d2z1R/z2^2",
    "dz1dz2R/z2",
    "d3z2R",
    "d2z2dz1R",
];

/// The nine bounded quotients; finite at `z2 = 0` through their integral forms.
pub fn ratios(a: f64, b: f64) -> [f64; 9] {
    if b.abs() <= SMALL_B {
        [
            0.5 * moment(2, 2, a, b),
            moment(2, 1, a, b),
            moment(2, 0, a, b),
            moment(3, 1, a, b),
            s2(a + b),
            moment(4, 1, a, b),
            moment(3, 0, a, b),
            s3(a + b),
            s3(a + b),
        ]
    } else {
        let b2 = b * b;
        [
            q0(a, b) / (b2 * b),
            r(a, b) / b2,
            dz2_r(a, b) / b,
            dz1_r(a, b) / b2,
            d2z2_r(a, b),
            d2z1_r(a, b) / b2,
            dz1dz2_r(a, b) / b,
            d3z2_r(a, b),
            d2z2dz1_r(a, b),
        ]
    }
}
