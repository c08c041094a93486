//! Energies, dissipations and identity residuals along trajectories.

pub mod analyzer;

pub use analyzer::{Analyzer, DiagnosticsRecord, CSV_COLUMNS};

use crate::dynamics::Reference;
use crate::error::{MuskatError, Result};
use crate::grid::{self, GridFn1D};
use crate::model::PhysParams;
use crate::remainder::{ratios, RATIO_NAMES};
use rayon::prelude::*;
use serde::Serialize;

/// `int (g h^2/2 + sigma sqrt(1+h'^2)) - [gamma](h(-1) + h(1))`: trapezoid for
/// the gravity term, midpoint slopes for the length.
pub fn physical_energy(h: &GridFn1D, params: &PhysParams) -> f64 {
    let dx = h.spacing();
    let v = h.values();
    let n = v.len() - 1;
    let grav = grid::trapezoid(&v.iter().map(|x| 0.5 * params.g * x * x).collect::<Vec<_>>(), dx);
    let len: f64 = h.midpoint_slopes().iter().map(|p| dx * p.hypot(1.0)).sum();
    grav + params.sigma * len - params.gamma_jump * (v[0] + v[n])
}

/// `E(h_s + eta) - E(h_s)` without cancellation. The stationary profile is the
/// exact discrete equilibrium, so the difference is the discrete energy of
/// `eta` minus `phi_s` times its mass.
pub fn physical_energy_excess(reference: &Reference, eta: &[f64]) -> f64 {
    let mass: f64 = reference.weights.iter().zip(eta).map(|(w, e)| w * e).sum();
    reference.energy(eta) - reference.state.phi_s * mass
}

/// Discrete `||u||_{H^1}^2 = sum w u^2 + h sum (Du)^2`.
pub fn h1_norm_sq(u: &[f64], h: f64) -> f64 {
    let w = grid::trapezoid_weights(u.len() - 1, h);
    let l2: f64 = w.iter().zip(u).map(|(w, u)| w * u * u).sum();
    let d: f64 = u.windows(2).map(|p| (p[1] - p[0]).powi(2) / h).sum();
    l2 + d
}

/// `int int |u(x)-u(y)|^2 / |x-y|^{1+2 theta}` over the cell midpoints, with
/// the diagonal cells integrated from the local slope.
pub fn slobodeckij_seminorm_sq(u: &[f64], h: f64, theta: f64) -> f64 {
    let m: Vec<f64> = u.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    let slope: Vec<f64> = u.windows(2).map(|p| (p[1] - p[0]) / h).collect();
    let e = 1.0 + 2.0 * theta;
    let kernel: Vec<f64> = (0..m.len()).map(|k| if k == 0 { 0.0 } else { (k as f64 * h).powf(-e) }).collect();
    let off: f64 = (0..m.len())
        .map(|i| {
            let acc: f64 = (0..i).map(|j| (m[i] - m[j]).powi(2) * kernel[i - j]).sum();
            2.0 * acc * h * h
        })
        .sum();
    let c = 2.0 / ((2.0 - 2.0 * theta) * (3.0 - 2.0 * theta));
    let diag: f64 = slope.iter().map(|s| s * s).sum::<f64>() * c * h.powf(3.0 - 2.0 * theta);
    off + diag
}

/// `||f||_{H^s}^2` for `0 <= s < 3`: `sum_{m <= k} ||f^(m)||^2 + |f^(k)|_theta^2`
/// with `s = k + theta`.
pub fn sobolev_norm_frac(f: &GridFn1D, s: f64) -> Result<f64> {
    if !(0.0..3.0).contains(&s) {
        return Err(MuskatError::Invalid(format!("fractional order must lie in [0, 3), got {s}")));
    }
    let k = s.floor() as usize;
    let theta = s - k as f64;
    let h = f.spacing();
    let mut derivs = vec![f.values().to_vec()];
    if k >= 1 {
        derivs.push(grid::d1(f.values(), h));
    }
    if k >= 2 {
        derivs.push(grid::d2(f.values(), h));
    }
    let mut acc: f64 = derivs.iter().map(|d| grid::trapezoid(&d.iter().map(|x| x * x).collect::<Vec<_>>(), h)).sum();
    if theta > 0.0 {
        acc += slobodeckij_seminorm_sq(&derivs[k], h, theta);
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub lambda: f64,
    pub r_squared: f64,
    pub window: [f64; 2],
    pub samples: usize,
}

/// Least squares for `log q = c - lambda t` over `window`.
pub fn decay_fit(t: &[f64], q: &[f64], window: [f64; 2]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(q)
        .filter(|(t, _)| **t >= window[0] - 1e-12 && **t <= window[1] + 1e-12)
        .map(|(t, q)| (*t, *q))
        .collect();
    if pts.len() < 3 {
        return Err(MuskatError::Invalid(format!("decay fit needs 3 samples in the window, got {}", pts.len())));
    }
    if let Some((t, q)) = pts.iter().find(|(_, q)| !(*q > 0.0)) {
        return Err(MuskatError::Invalid(format!("decay fit refused: value {q:e} at t = {t}")));
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, q)| (a + t / n, b + q.ln() / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (t, q) in &pts {
        let (dx, dy) = (t - mx, q.ln() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).min(1.0) } else { 1.0 };
    Ok(DecayFit { lambda: -slope, r_squared, window, samples: pts.len() })
}

/// Observed order from errors at two resolutions differing by `ratio`.
pub fn observed_order(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (coarse / fine).ln() / ratio.ln()
}

/// True if `series[k+1] <= series[k] + tol` for every `k >= start`.
pub fn non_increasing_from(series: &[f64], start: usize, tol: f64) -> bool {
    series.windows(2).skip(start).all(|p| p[1] <= p[0] + tol)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub range: [f64; 2],
    pub step: f64,
    pub names: Vec<String>,
    pub suprema: Vec<f64>,
    /// Suprema at half the step and the relative change.
    pub refined: Vec<f64>,
    pub drift: Vec<f64>,
    pub all_finite: bool,
    pub stable: bool,
}

/// Suprema of the nine bounded quotients of `R` over `[lo, hi]^2`.
pub fn remainder_suprema(range: [f64; 2], step: f64) -> Result<[f64; 9]> {
    if !(step > 0.0) || !(range[1] > range[0]) {
        return Err(MuskatError::Invalid(format!("scan needs step > 0 and a nonempty range, got {step} on {range:?}")));
    }
    let n = ((range[1] - range[0]) / step).round() as usize;
    let at = |k: usize| range[0] + (range[1] - range[0]) * k as f64 / n as f64;
    let sup = (0..=n)
        .into_par_iter()
        .map(|i| {
            let a = at(i);
            let mut m = [0.0f64; 9];
            for j in 0..=n {
                let r = ratios(a, at(j));
                for k in 0..9 {
                    m[k] = if r[k].is_finite() { m[k].max(r[k].abs()) } else { f64::INFINITY };
                }
            }
            m
        })
        .reduce(|| [0.0; 9], |a, b| std::array::from_fn(|k| a[k].max(b[k])));
    Ok(sup)
}

/// Scan at `step` and `step / 2`; stable when every supremum moves by less than 1%.
pub fn remainder_scan(range: [f64; 2], step: f64) -> Result<ScanReport> {
    let coarse = remainder_suprema(range, step)?;
    let fine = remainder_suprema(range, step / 2.0)?;
    let drift: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| (f - c).abs() / f.abs().max(f64::MIN_POSITIVE)).collect();
    let all_finite = coarse.iter().chain(&fine).all(|v| v.is_finite());
    Ok(ScanReport {
        range,
        step,
        names: RATIO_NAMES.iter().map(|s| s.to_string()).collect(),
        suprema: coarse.to_vec(),
        refined: fine.to_vec(),
        stable: all_finite && drift.iter().all(|d| *d < 0.01),
        drift,
        all_finite,
    })
}
