//! Stationary meniscus: `-g h_s + sigma * kappa(h_s) = phi_s` on (-1, 1) with
//! `s(h_s')(+-1) = +-[gamma]/sigma` and prescribed mass.
//!
//! The profile is shot from the symmetry axis in the variables `(h, s)`,
//! `s = h'/sqrt(1+h'^2)`, with classical RK4 on the simulation nodes, then
//! mirrored. The shot profile fixes the contact angle. A few Newton steps
//! then move it onto the discrete equilibrium of the finite-volume surface
//! operator used by [`crate::dynamics`], so that `eta = 0` is an exact
//! discrete steady state and the physical energy splits exactly.

use crate::error::{MuskatError, Result};
use crate::grid::{self, GridFn1D};
use crate::model::{PhysParams, VesselGeometry};
use crate::remainder::{s as slope_s, s1};
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct StationaryState {
    /// Discrete equilibrium profile; the reference surface everywhere downstream.
    pub h_s: GridFn1D,
    /// RK4 shooting profile before the finite-volume polish.
    pub h_s_shot: GridFn1D,
    /// `h_s'` of the shot profile at the nodes (from the slope variable).
    pub slope: GridFn1D,
    pub h_w: GridFn1D,
    pub phi_s: f64,
    pub omega: f64,
    /// `int (h_s - h_w) - M` by the trapezoid rule on the simulation grid.
    pub mass_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarySummary {
    pub phi_s: f64,
    pub omega: f64,
    pub mass_residual: f64,
}

impl StationaryState {
    pub fn summary(&self) -> StationarySummary {
        StationarySummary { phi_s: self.phi_s, omega: self.omega, mass_residual: self.mass_residual }
    }

    pub fn n(&self) -> usize {
        self.h_s.n()
    }

    /// `-g h + sigma kappa(h) - phi_s` for the shot profile with FD curvature.
    pub fn ode_residual(&self, params: &PhysParams) -> Result<GridFn1D> {
        ode_residual(&self.h_s_shot, params, self.phi_s)
    }
}

pub fn ode_residual(h: &GridFn1D, params: &PhysParams, phi_s: f64) -> Result<GridFn1D> {
    let k = grid::curvature(h)?;
    let values = h
        .values()
        .iter()
        .zip(k.values())
        .map(|(hv, kv)| -params.g * hv + params.sigma * kv - phi_s)
        .collect();
    GridFn1D::new(values)
}

/// `phi_s = [gamma] - g (M + int h_w)/2`, trapezoid rule on the vessel samples.
pub fn phi_s_closed_form(params: &PhysParams, vessel: &VesselGeometry) -> f64 {
    let hw = vessel.samples();
    params.gamma_jump - params.g * (params.mass + hw.trapezoid()) / 2.0
}

/// `omega = arccot(-h_s'(-1))` in (0, pi).
pub fn contact_angle(state: &StationaryState) -> f64 {
    angle_from_left_slope(state.slope.values()[0])
}

pub fn angle_from_left_slope(slope_left: f64) -> f64 {
    f64::atan2(1.0, -slope_left)
}

struct Shot {
    h: Vec<f64>,
    s: Vec<f64>,
    /// `s(1)`, or a value beyond +-1 ordered by how early `|s|` saturated.
    end: f64,
}

fn shoot(h0: f64, params: &PhysParams, phi_s: f64, steps: usize) -> Shot {
    let dx = 1.0 / steps as f64;
    let rhs = |h: f64, s: f64| -> Option<(f64, f64)> {
        if s.abs() >= 1.0 {
            return None;
        }
        Some((s / (1.0 - s * s).sqrt(), (phi_s + params.g * h) / params.sigma))
    };
    let mut h = vec![h0; steps + 1];
    let mut s = vec![0.0; steps + 1];
    for k in 0..steps {
        let (hk, sk) = (h[k], s[k]);
        let step = (|| {
            let k1 = rhs(hk, sk)?;
            let k2 = rhs(hk + 0.5 * dx * k1.0, sk + 0.5 * dx * k1.1)?;
            let k3 = rhs(hk + 0.5 * dx * k2.0, sk + 0.5 * dx * k2.1)?;
            let k4 = rhs(hk + dx * k3.0, sk + dx * k3.1)?;
            Some((
                hk + dx / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                sk + dx / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            ))
        })();
        match step {
            Some((hn, sn)) if sn.abs() < 1.0 => {
                h[k + 1] = hn;
                s[k + 1] = sn;
            }
            _ => {
                let sign = if sk >= 0.0 { 1.0 } else { -1.0 };
                let left = 1.0 - k as f64 * dx;
                return Shot { h, s, end: sign * (1.0 + left) };
            }
        }
    }
    let end = s[steps];
    Shot { h, s, end }
}

/// Solve the stationary problem on `n` intervals (`n` even, `n >= 8`).
pub fn solve_stationary(params: &PhysParams, vessel: &VesselGeometry, n: usize) -> Result<StationaryState> {
    params.validate()?;
    if n < 8 || n % 2 == 1 {
        return Err(MuskatError::Invalid(format!("stationary grid needs an even N >= 8, got {n}")));
    }
    let vessel = vessel.with_samples(n);
    let phi_s = phi_s_closed_form(params, &vessel);
    let target = params.young_cosine();
    let half = n / 2;
    let f = |h0: f64| shoot(h0, params, phi_s, half);

    // Bracket the root of s(1; h0) - target; s(1) increases with h0.
    let flat = -phi_s / params.g;
    let mut lo = flat;
    let mut hi = flat;
    let mut f_lo = f(lo).end - target;
    let mut f_hi = f_lo;
    let scale = (params.sigma / params.g).sqrt().max(1.0);
    let mut width = 1e-3 * scale;
    let mut tries = 0;
    while f_lo > 0.0 {
        lo -= width;
        width *= 2.0;
        f_lo = f(lo).end - target;
        tries += 1;
        if tries > 200 {
            return Err(MuskatError::Geometry("stationary shooting failed to bracket from below".into()));
        }
    }
    width = 1e-3 * scale;
    tries = 0;
    while f_hi < 0.0 {
        hi += width;
        width *= 2.0;
        f_hi = f(hi).end - target;
        tries += 1;
        if tries > 200 {
            return Err(MuskatError::Geometry("stationary shooting failed to bracket from above".into()));
        }
    }
    let mut h0 = if f_lo == 0.0 { lo } else { hi };
    if f_lo != 0.0 && f_hi != 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = f(mid).end - target;
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm < 0.0 {
                lo = mid;
                f_lo = fm;
            } else {
                hi = mid;
                f_hi = fm;
            }
            if hi - lo < 1e-9 * scale {
                break;
            }
        }
        // Secant polish inside the bracket.
        let (mut a, mut fa, mut b, mut fb) = (lo, f_lo, hi, f_hi);
        h0 = if (fb - fa).abs() > 0.0 { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        for _ in 0..50 {
            let fh = f(h0).end - target;
            if fh.abs() <= 1e-14 {
                break;
            }
            a = b;
            fa = fb;
            b = h0;
            fb = fh;
            if fb == fa {
                break;
            }
            let next = b - fb * (b - a) / (fb - fa);
            if !next.is_finite() || next < lo - 1.0 || next > hi + 1.0 {
                break;
            }
            h0 = next;
        }
    }
    let shot = f(h0);
    let miss = (shot.end - target).abs();
    if shot.end.abs() >= 1.0 || miss > 1e-12 {
        return Err(MuskatError::Geometry(format!(
            "stationary shooting did not converge: |s(1) - [gamma]/sigma| = {miss:.3e}"
        )));
    }

    let mut h_shot = vec![0.0; n + 1];
    let mut slope = vec![0.0; n + 1];
    for k in 0..=half {
        let sk = shot.s[k];
        let d = sk / (1.0 - sk * sk).sqrt();
        h_shot[half + k] = shot.h[k];
        h_shot[half - k] = shot.h[k];
        slope[half + k] = d;
        slope[half - k] = -d;
    }
    let h_shot = GridFn1D::new(h_shot)?;
    let slope = GridFn1D::new(slope)?;
    let h_w = vessel.samples();

    let h_s = polish(&h_shot, params, phi_s)?;
    let thickness_ok = h_s.values().iter().zip(h_w.values()).all(|(a, b)| a > b);
    if !thickness_ok {
        return Err(MuskatError::Geometry("stationary surface touches the vessel wall".into()));
    }
    let max_hw = h_w.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_hs = h_s.values().iter().cloned().fold(f64::INFINITY, f64::min);
    if max_hw >= min_hs {
        return Err(MuskatError::Geometry(format!(
            "fluid layer degenerate: max h_w = {max_hw} >= min h_s = {min_hs}"
        )));
    }
    let thick: Vec<f64> = h_s.values().iter().zip(h_w.values()).map(|(a, b)| a - b).collect();
    let mass_residual = grid::trapezoid(&thick, h_s.spacing()) - params.mass;
    if mass_residual.abs() > 1e-6 * params.mass.max(1.0) {
        return Err(MuskatError::Geometry(format!(
            "stationary mass residual {mass_residual:.3e} exceeds 1e-6"
        )));
    }
    let omega = angle_from_left_slope(slope.values()[0]);
    Ok(StationaryState { h_s, h_s_shot: h_shot, slope, h_w, phi_s, omega, mass_residual })
}

/// Residual of the finite-volume equilibrium
/// `w_i (-g h_i - phi_s) + sigma (s_{i+1/2} - s_{i-1/2}) = 0`,
/// with the boundary fluxes `s(+-1) = +-[gamma]/sigma`.
pub fn fv_residual(h: &[f64], params: &PhysParams, phi_s: f64) -> Vec<f64> {
    let n = h.len() - 1;
    let dx = 2.0 / n as f64;
    let w = grid::trapezoid_weights(n, dx);
    let flux: Vec<f64> = grid::midpoint_diff(h, dx).iter().map(|&a| slope_s(a)).collect();
    let edge = params.young_cosine();
    (0..=n)
        .map(|i| {
            let right = if i == n { edge } else { flux[i] };
            let left = if i == 0 { -edge } else { flux[i - 1] };
            w[i] * (-params.g * h[i] - phi_s) + params.sigma * (right - left)
        })
        .collect()
}

fn polish(h_shot: &GridFn1D, params: &PhysParams, phi_s: f64) -> Result<GridFn1D> {
    let n = h_shot.n();
    let dx = h_shot.spacing();
    let w = grid::trapezoid_weights(n, dx);
    let mut h = h_shot.values().to_vec();
    let scale = params.g * h.iter().fold(1.0f64, |m, v| m.max(v.abs())) + params.sigma;
    for _ in 0..30 {
        let res = fv_residual(&h, params, phi_s);
        let norm = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if norm <= 1e-15 * scale * dx {
            break;
        }
        let c: Vec<f64> = grid::midpoint_diff(&h, dx).iter().map(|&a| params.sigma * s1(a) / dx).collect();
        // Jacobian is symmetric negative definite and tridiagonal.
        let mut diag = vec![0.0; n + 1];
        let mut off = vec![0.0; n];
        for i in 0..=n {
            diag[i] = -params.g * w[i];
        }
        for m in 0..n {
            diag[m] -= c[m];
            diag[m + 1] -= c[m];
            off[m] = c[m];
        }
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let delta = solve_tridiagonal(&off, &diag, &off, &rhs)?;
        for (hi, d) in h.iter_mut().zip(&delta) {
            *hi += d;
        }
    }
    // Restore exact mirror symmetry lost to rounding.
    for i in 0..n / 2 {
        let avg = 0.5 * (h[i] + h[n - i]);
        h[i] = avg;
        h[n - i] = avg;
    }
    GridFn1D::new(h)
}

/// Thomas algorithm: `lower[i]` couples row `i+1` to `i`, `upper[i]` row `i` to `i+1`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(MuskatError::Solver("singular tridiagonal system".into()));
    }
    c[0] = if n > 1 { upper[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(MuskatError::Solver("singular tridiagonal system".into()));
        }
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}
