//! Regularizing diffeomorphism of the stationary domain onto the perturbed one
//! and the transformed flow coefficients.
//!
//! The map is `(x, y) -> (x, y + xi(y) eta_dag(x, y))` where `eta_dag` is the
//! harmonic (Poisson) extension of an extension of `eta` to the line, shifted
//! so that its trace sits on the stationary surface. The harmonic extension
//! is evaluated spectrally: the extended data are periodized on `[-2, 2)` and
//! every Fourier mode is damped by `exp(|zeta| z)` at depth `z`.

use crate::elliptic::mesh::Mesh;
use crate::error::{MuskatError, Result};
use crate::grid::{self, GridFn1D};
use crate::model::VesselGeometry;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

/// Admissible range of the Jacobian determinant.
pub const DETJ_BOUNDS: (f64, f64) = (0.25, 4.0);

/// Positive depths up to this size are rounding and are clamped to zero.
const Z_ROUNDING: f64 = 1e-10;

/// Flow coefficients at the 2x2 Gauss points of every cell (index `4 * cell + q`)
/// and at the mesh nodes.
#[derive(Clone, Debug)]
pub struct CoeffFields {
    /// `A` as `[a11, a12, a22]`.
    pub a_q: Vec<[f64; 3]>,
    /// `Sigma` row-major.
    pub sigma_q: Vec<[f64; 4]>,
    pub detj_q: Vec<f64>,
    pub a_n: Vec<[f64; 3]>,
    pub sigma_n: Vec<[f64; 4]>,
    pub detj_n: Vec<f64>,
    pub xi_n: Vec<f64>,
}

impl CoeffFields {
    /// Coefficients of the unperturbed domain.
    pub fn identity(mesh: &Mesh) -> Self {
        let nq = 4 * mesh.cells.len();
        let nn = mesh.n_nodes();
        Self {
            a_q: vec![[1.0, 0.0, 1.0]; nq],
            sigma_q: vec![[1.0, 0.0, 0.0, 1.0]; nq],
            detj_q: vec![1.0; nq],
            a_n: vec![[1.0, 0.0, 1.0]; nn],
            sigma_n: vec![[1.0, 0.0, 0.0, 1.0]; nn],
            detj_n: vec![1.0; nn],
            xi_n: vec![0.0; nn],
        }
    }

    /// Smallest and largest `detJ` over nodes and quadrature points.
    pub fn detj_range(&self) -> (f64, f64) {
        self.detj_q
            .iter()
            .chain(&self.detj_n)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)))
    }

    pub fn check_detj(&self) -> Result<(f64, f64)> {
        let (min, max) = self.detj_range();
        let (lo, hi) = DETJ_BOUNDS;
        if !(min >= lo && max <= hi) {
            return Err(MuskatError::DetJ { min, max, lo, hi });
        }
        Ok((min, max))
    }
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn smoothstep_deriv(s: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    30.0 * s * s * (1.0 - s) * (1.0 - s)
}

/// Extension of `eta` past `x = +-1` by `pad` nodes on each side: point
/// reflection `2 eta(1) - eta(1 - t)` (which keeps the extension C^1), tapered to
/// zero by a quintic smoothstep over the outer half of the pad.
pub fn extend(eta: &GridFn1D, pad: usize) -> Result<Vec<f64>> {
    let n = eta.n();
    if pad < n / 2 || pad > n {
        return Err(MuskatError::Invalid(format!("extension pad must lie in [N/2, N], got {pad} for N = {n}")));
    }
    let v = eta.values();
    let half = pad as f64 / 2.0;
    let taper = |k: usize| 1.0 - smoothstep((k as f64 - half) / half);
    let mut out = vec![0.0; n + 1 + 2 * pad];
    out[pad..pad + n + 1].copy_from_slice(v);
    for k in 1..=pad {
        out[pad + n + k] = taper(k) * (2.0 * v[n] - v[n - k]);
        out[pad - k] = taper(k) * (2.0 * v[0] - v[k]);
    }
    Ok(out)
}

/// Real Fourier series of a periodic sample set, evaluated with the half-plane
/// damping `exp(zeta z)` for `z <= 0`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    x0: f64,
    /// Fundamental wavenumber `2 pi / period`.
    k1: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Spectrum {
    /// `samples[j]` at `x0 + j * period / len`.
    pub fn new(samples: &[f64], x0: f64, period: f64) -> Self {
        let p = samples.len();
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(p).process(&mut buf);
        let m = p / 2;
        let pf = p as f64;
        let mut a = vec![0.0; m + 1];
        let mut b = vec![0.0; m + 1];
        a[0] = buf[0].re / pf;
        for k in 1..=m {
            if 2 * k == p {
                a[k] = buf[k].re / pf;
            } else {
                a[k] = 2.0 * buf[k].re / pf;
                b[k] = -2.0 * buf[k].im / pf;
            }
        }
        Self { x0, k1: 2.0 * std::f64::consts::PI / period, a, b }
    }

    pub fn modes(&self) -> usize {
        self.a.len()
    }

    /// Trigonometric table `(cos, sin)(zeta_k (x - x0))` for all modes.
    pub fn table(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let m = self.a.len();
        let th = self.k1 * (x - self.x0);
        let mut c = vec![1.0; m];
        let mut s = vec![0.0; m];
        let (c1, s1) = (th.cos(), th.sin());
        for k in 1..m {
            // Direct evaluation every 32 modes bounds the recurrence drift.
            if k % 32 == 0 {
                let t = th * k as f64;
                c[k] = t.cos();
                s[k] = t.sin();
            } else {
                c[k] = c[k - 1] * c1 - s[k - 1] * s1;
                s[k] = s[k - 1] * c1 + c[k - 1] * s1;
            }
        }
        (c, s)
    }

    /// `(U, U_x, U_z)` at depth `z <= 0` from a precomputed table.
    pub fn eval_with(&self, table: &(Vec<f64>, Vec<f64>), z: f64) -> [f64; 3] {
        let (c, s) = table;
        let mut out = [self.a[0], 0.0, 0.0];
        let q = (self.k1 * z).exp();
        let mut damp = 1.0;
        for k in 1..self.a.len() {
            let zeta = self.k1 * k as f64;
            damp *= q;
            if damp < 1e-18 {
                break;
            }
            let (ak, bk) = (self.a[k], self.b[k]);
            let val = ak * c[k] + bk * s[k];
            out[0] += damp * val;
            out[1] += damp * zeta * (bk * c[k] - ak * s[k]);
            out[2] += damp * zeta * val;
        }
        out
    }

    pub fn eval(&self, x: f64, z: f64) -> [f64; 3] {
        self.eval_with(&self.table(x), z)
    }
}

/// Harmonic extension `eta_dag` and its gradient at the mesh nodes and at the
/// quadrature points, stored `[eta_dag, d_x eta_dag, d_y eta_dag]`.
#[derive(Clone, Debug)]
pub struct HarmonicExtension {
    pub spectrum: Spectrum,
    pub nodes: Vec<[f64; 3]>,
    pub quad: Vec<[f64; 3]>,
}

impl HarmonicExtension {
    /// Value on the piecewise-linear stationary surface at an arbitrary `x`.
    pub fn surface_value(&self, x: f64) -> f64 {
        self.spectrum.eval(x, 0.0)[0]
    }

    /// `max |eta_dag| / max |eta|`; NaN for `eta = 0`.
    pub fn sup_ratio(&self, eta: &GridFn1D) -> f64 {
        let m = self.nodes.iter().fold(0.0f64, |m, v| m.max(v[0].abs()));
        m / eta.max_abs()
    }
}

fn depth(y: f64, surface: f64) -> Result<f64> {
    let z = y - surface;
    if z > Z_ROUNDING {
        return Err(MuskatError::Geometry(format!("mesh point {z:e} above the stationary surface")));
    }
    Ok(z.min(0.0))
}

/// Poisson extension of `eta` evaluated on the mesh of the stationary domain.
pub fn poisson_extend(eta: &GridFn1D, h_s: &GridFn1D, mesh: &Mesh) -> Result<HarmonicExtension> {
    eta.same_grid(h_s)?;
    let n = eta.n();
    if mesh.nx != n {
        return Err(MuskatError::Invalid(format!("mesh has {} columns, eta has {n} intervals", mesh.nx)));
    }
    let pad = n / 2;
    let mut ext = extend(eta, pad)?;
    ext.pop();
    let h = eta.spacing();
    let spectrum = Spectrum::new(&ext, -1.0 - pad as f64 * h, ext.len() as f64 * h);
    let hs = h_s.values();
    let hs_x = grid::d1(hs, h);
    let ny = mesh.ny;

    let nodes: Vec<Vec<[f64; 3]>> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let table = spectrum.table(mesh.xs[i]);
            (0..=ny)
                .map(|j| {
                    let k = mesh.node(i, j);
                    let z = depth(mesh.py[k], hs[i])?;
                    let [u, ux, uz] = spectrum.eval_with(&table, z);
                    Ok([u, ux - hs_x[i] * uz, uz])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let quad: Vec<Vec<[f64; 3]>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dx = mesh.xs[i + 1] - mesh.xs[i];
            let slope = (hs[i + 1] - hs[i]) / dx;
            let first = &mesh.cells[mesh.cell(i, 0)];
            // Quadrature points 0 and 3 share the left abscissa, 1 and 2 the right.
            let tables = [spectrum.table(first.qp[0][0]), spectrum.table(first.qp[1][0])];
            let mut out = Vec::with_capacity(4 * ny);
            for j in 0..ny {
                let cg = &mesh.cells[mesh.cell(i, j)];
                for q in 0..4 {
                    let [x, y] = cg.qp[q];
                    let surf = hs[i] + slope * (x - mesh.xs[i]);
                    let z = depth(y, surf)?;
                    let t = if q == 0 || q == 3 { &tables[0] } else { &tables[1] };
                    let [u, ux, uz] = spectrum.eval_with(t, z);
                    out.push([u, ux - slope * uz, uz]);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(HarmonicExtension { spectrum, nodes: nodes.concat(), quad: quad.concat() })
}

/// Quintic smoothstep in `y` between `y_lo` and `y_hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Cutoff {
    pub fn eval(&self, y: f64) -> f64 {
        smoothstep((y - self.y_lo) / (self.y_hi - self.y_lo))
    }

    pub fn deriv(&self, y: f64) -> f64 {
        let w = self.y_hi - self.y_lo;
        smoothstep_deriv((y - self.y_lo) / w) / w
    }

    /// Analytic bound `15 / (8 (y_hi - y_lo))` on the derivative.
    pub fn deriv_bound(&self) -> f64 {
        15.0 / (8.0 * (self.y_hi - self.y_lo))
    }
}

/// Cutoff vanishing below `max h_w + d/4` and equal to one above `min h_s - d/4`,
/// `d = min h_s - max h_w`.
pub fn cutoff_xi(vessel: &VesselGeometry, h_s: &GridFn1D) -> Result<Cutoff> {
    let hw = vessel.sampled_on(h_s.n());
    let max_w = hw.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_s = h_s.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let d = min_s - max_w;
    if !(d > 0.0) {
        return Err(MuskatError::Geometry(format!(
            "no room for the cutoff: min h_s - max h_w = {d}"
        )));
    }
    Ok(Cutoff { y_lo: max_w + 0.25 * d, y_hi: min_s - 0.25 * d })
}

fn coeffs_at(xi: f64, dxi: f64, e: [f64; 3]) -> ([f64; 3], [f64; 4], f64) {
    let d = 1.0 + dxi * e[0] + xi * e[2];
    let c = xi * e[1];
    ([d, -c, (1.0 + c * c) / d], [1.0, -c / d, 0.0, 1.0 / d], d)
}

/// `Sigma`, `A` and `detJ` from the harmonic extension and the cutoff.
pub fn assemble_coeffs(ext: &HarmonicExtension, xi: &Cutoff, mesh: &Mesh) -> CoeffFields {
    let nq = ext.quad.len();
    let nn = ext.nodes.len();
    let mut out = CoeffFields {
        a_q: Vec::with_capacity(nq),
        sigma_q: Vec::with_capacity(nq),
        detj_q: Vec::with_capacity(nq),
        a_n: Vec::with_capacity(nn),
        sigma_n: Vec::with_capacity(nn),
        detj_n: Vec::with_capacity(nn),
        xi_n: Vec::with_capacity(nn),
    };
    for c in 0..mesh.cells.len() {
        for q in 0..4 {
            let y = mesh.cells[c].qp[q][1];
            let (a, s, d) = coeffs_at(xi.eval(y), xi.deriv(y), ext.quad[4 * c + q]);
            out.a_q.push(a);
            out.sigma_q.push(s);
            out.detj_q.push(d);
        }
    }
    for k in 0..nn {
        let y = mesh.py[k];
        let x = xi.eval(y);
        let (a, s, d) = coeffs_at(x, xi.deriv(y), ext.nodes[k]);
        out.a_n.push(a);
        out.sigma_n.push(s);
        out.detj_n.push(d);
        out.xi_n.push(x);
    }
    out
}

/// Extension, assembly and the admissibility check in one call.
pub fn transformed_coeffs(eta: &GridFn1D, h_s: &GridFn1D, mesh: &Mesh, xi: &Cutoff) -> Result<CoeffFields> {
    let ext = poisson_extend(eta, h_s, mesh)?;
    let c = assemble_coeffs(&ext, xi, mesh);
    c.check_detj()?;
    Ok(c)
}
