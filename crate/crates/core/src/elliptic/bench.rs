//! Closed-form benchmarks for the elliptic solvers: manufactured solutions on
//! the flat layer, the rectangle DN symbol and the Neumann corner wedge.

use super::mesh::{graded_columns, map_point, Mesh};
use super::solve::{solve_mixed, solve_neumann, MixedSystem, Source};
use crate::diffeo::CoeffFields;
use crate::error::Result;
use crate::grid::node;
use crate::quadrature::gauss_legendre;
use serde::Serialize;
use std::f64::consts::PI;

/// L2 distance between a nodal field and `exact`, 3x3 Gauss per cell. With
/// `zero_mean` both are compared after removing their means.
pub fn l2_error(mesh: &Mesh, phi: &[f64], exact: &dyn Fn([f64; 2]) -> f64, zero_mean: bool) -> f64 {
    let (gx, gw) = gauss_legendre(3);
    let mut pts = Vec::new();
    for c in 0..mesh.cells.len() {
        let corners = mesh.cell_corners(c);
        let ids = mesh.cell_nodes(c);
        for (a, wa) in gx.iter().zip(&gw) {
            for (b, wb) in gx.iter().zip(&gw) {
                let (p, det, n, _) = map_point(&corners, *a, *b);
                let uh: f64 = (0..4).map(|k| n[k] * phi[ids[k]]).sum();
                pts.push((wa * wb * det, uh, exact(p)));
            }
        }
    }
    let (mut mh, mut me) = (0.0, 0.0);
    if zero_mean {
        let area: f64 = pts.iter().map(|t| t.0).sum();
        mh = pts.iter().map(|t| t.0 * t.1).sum::<f64>() / area;
        me = pts.iter().map(|t| t.0 * t.2).sum::<f64>() / area;
    }
    pts.iter().map(|(w, uh, ue)| w * ((uh - mh) - (ue - me)).powi(2)).sum::<f64>().sqrt()
}

fn flat_layer(nx: usize, ny: usize) -> Result<Mesh> {
    let xs = (0..=nx).map(|i| node(nx, i)).collect();
    Mesh::from_columns(xs, vec![-1.0; nx + 1], vec![1.0; nx + 1], Mesh::levels(ny))
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub benchmark: String,
    pub n: usize,
    pub l2_error: f64,
    /// Observed order against the previous row; NaN for the first.
    pub order: f64,
}

fn with_orders(name: &str, data: &[(usize, f64)]) -> Vec<ConvergenceRow> {
    data.iter()
        .enumerate()
        .map(|(k, &(n, e))| ConvergenceRow {
            benchmark: name.to_string(),
            n,
            l2_error: e,
            order: if k == 0 { f64::NAN } else { (data[k - 1].1 / e).ln() / (n as f64 / data[k - 1].0 as f64).ln() },
        })
        .collect()
}

/// Mixed problem on [-1,1]^2 with `cos(pi x/2) cosh(pi (y+1)/2)`: Dirichlet on
/// top, its conormal flux on the walls. Returns `(L2 error, Green defect)`.
pub fn mixed_manufactured(n: usize) -> Result<(f64, f64)> {
    let mesh = flat_layer(n, n)?;
    let coeffs = CoeffFields::identity(&mesh);
    let k = PI / 2.0;
    let exact = move |p: [f64; 2]| (k * p[0]).cos() * (k * (p[1] + 1.0)).cosh();
    let grad = move |p: [f64; 2]| {
        [-k * (k * p[0]).sin() * (k * (p[1] + 1.0)).cosh(), k * (k * p[0]).cos() * (k * (p[1] + 1.0)).sinh()]
    };
    let wall = move |p: [f64; 2], nrm: [f64; 2]| {
        let g = grad(p);
        g[0] * nrm[0] + g[1] * nrm[1]
    };
    let d: Vec<f64> = mesh.xs.iter().map(|&x| exact([x, 1.0])).collect();
    let sol = solve_mixed(&mesh, &coeffs, &d, Source::Zero, Some(&wall))?;
    Ok((l2_error(&mesh, &sol.phi, &exact, false), sol.green_defect))
}

/// Neumann problem on [-1,1]^2 with `cos(pi x) cosh(pi (y+1))/cosh(2 pi)`.
pub fn neumann_manufactured(n: usize) -> Result<f64> {
    let mesh = flat_layer(n, n)?;
    let coeffs = CoeffFields::identity(&mesh);
    let exact = |p: [f64; 2]| (PI * p[0]).cos() * (PI * (p[1] + 1.0)).cosh() / (2.0 * PI).cosh();
    let g1: Vec<f64> = mesh.xs.iter().map(|&x| PI * (2.0 * PI).tanh() * (PI * x).cos()).collect();
    let sol = solve_neumann(&mesh, &coeffs, &g1, None, Source::Zero)?;
    Ok(l2_error(&mesh, &sol.phi, &exact, true))
}

/// Max nodal error of the discrete DN map on the flat layer of depth 2 against
/// `zeta tanh(2 zeta)` for the datum `cos(zeta (x+1))`, `zeta = mode pi / 2`.
pub fn dn_symbol_error(nx: usize, ny: usize, mode: u32) -> Result<f64> {
    let mesh = flat_layer(nx, ny)?;
    let coeffs = CoeffFields::identity(&mesh);
    let zeta = mode as f64 * PI / 2.0;
    let d: Vec<f64> = mesh.xs.iter().map(|&x| (zeta * (x + 1.0)).cos()).collect();
    let flux = MixedSystem::new(&mesh, &coeffs)?.dn_apply(&d)?;
    let sym = zeta * (2.0 * zeta).tanh();
    Ok(flux.iter().zip(&d).map(|(f, d)| (f - sym * d).abs()).fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct WedgeResult {
    pub omega: f64,
    pub lambda: f64,
    /// Fitted gradient exponent plus one.
    pub exponent: f64,
    pub relative_error: f64,
    pub l2_error: f64,
    pub cells_in_fit: usize,
}

/// Fit window in the distance to the corner.
pub const WEDGE_FIT: (f64, f64) = (0.05, 0.5);

/// Layer `-1 < y < y_c + m (x+1)` whose top-left corner has opening `omega`.
pub fn wedge_mesh(omega: f64, nx: usize, ny: usize, grading: f64) -> Result<(Mesh, f64)> {
    let m = -1.0 / omega.tan();
    let yc = if m >= 0.0 { 0.0 } else { -2.0 * m - 0.5 };
    let xs = graded_columns(nx, grading, false);
    let g = graded_columns(ny, grading, false);
    let ts: Vec<f64> = (0..=ny).map(|j| 1.0 - 0.5 * (g[ny - j] + 1.0)).collect();
    let top = xs.iter().map(|x| yc + m * (x + 1.0)).collect();
    Ok((Mesh::from_columns(xs, vec![-1.0; nx + 1], top, ts)?, yc))
}

/// Neumann eigenfunction `r^(pi/omega) cos(pi theta/omega)` around the corner,
/// with zero conormal on the left wall and the top.
pub fn wedge_benchmark(omega: f64, nx: usize, ny: usize, grading: f64) -> Result<WedgeResult> {
    let (mesh, yc) = wedge_mesh(omega, nx, ny, grading)?;
    let coeffs = CoeffFields::identity(&mesh);
    let lambda = PI / omega;
    let polar = move |p: [f64; 2]| {
        let (dx, dy) = (p[0] + 1.0, p[1] - yc);
        (dx.hypot(dy), dy.atan2(dx))
    };
    let exact = move |p: [f64; 2]| {
        let (r, phi) = polar(p);
        r.powf(lambda) * (lambda * (phi + PI / 2.0)).cos()
    };
    let wall = move |p: [f64; 2], n: [f64; 2]| {
        let (r, phi) = polar(p);
        let th = lambda * (phi + PI / 2.0);
        let gr = lambda * r.powf(lambda - 1.0) * th.cos();
        let gt = -lambda * r.powf(lambda - 1.0) * th.sin();
        let g = [gr * phi.cos() - gt * phi.sin(), gr * phi.sin() + gt * phi.cos()];
        g[0] * n[0] + g[1] * n[1]
    };
    let sol = solve_neumann(&mesh, &coeffs, &vec![0.0; nx + 1], Some(&wall), Source::Zero)?;
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for c in 0..mesh.cells.len() {
        let corners = mesh.cell_corners(c);
        let (p, _, _, g) = map_point(&corners, 0.0, 0.0);
        let (r, _) = polar(p);
        if r < WEDGE_FIT.0 || r > WEDGE_FIT.1 {
            continue;
        }
        let ids = mesh.cell_nodes(c);
        let mut gr = [0.0; 2];
        for a in 0..4 {
            gr[0] += sol.phi[ids[a]] * g[a][0];
            gr[1] += sol.phi[ids[a]] * g[a][1];
        }
        let (lx, ly) = (r.ln(), gr[0].hypot(gr[1]).ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        cnt += 1;
    }
    let nf = cnt as f64;
    let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
    let exponent = slope + 1.0;
    Ok(WedgeResult {
        omega,
        lambda,
        exponent,
        relative_error: (exponent - lambda).abs() / lambda,
        l2_error: l2_error(&mesh, &sol.phi, &exact, true),
        cells_in_fit: cnt,
    })
}

/// Openings of the corner benchmarks.
pub fn wedge_angles() -> [f64; 4] {
    [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0, 0.9 * PI]
}

/// The convergence suite behind `validate elliptic`.
pub fn convergence_suite(ns: &[usize], wedge_grading: f64) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    let mut mixed = Vec::new();
    let mut neu = Vec::new();
    for &n in ns {
        mixed.push((n, mixed_manufactured(n)?.0));
        neu.push((n, neumann_manufactured(n)?));
    }
    rows.extend(with_orders("mixed_flat", &mixed));
    rows.extend(with_orders("neumann_flat", &neu));
    for (k, omega) in wedge_angles().into_iter().enumerate() {
        let mut w = Vec::new();
        for &n in ns {
            w.push((n, wedge_benchmark(omega, n, n, wedge_grading)?.l2_error));
        }
        let name = ["wedge_pi_3", "wedge_pi_2", "wedge_2pi_3", "wedge_0.9pi"][k];
        rows.extend(with_orders(name, &w));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_manufactured_converges_at_second_order() {
        let (e1, g1) = mixed_manufactured(8).unwrap();
        let (e2, g2) = mixed_manufactured(16).unwrap();
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.15, "order {order}");
        assert!(g1 < 1e-10 && g2 < 1e-10);
    }

    #[test]
    fn dn_symbol_error_is_second_order() {
        let e1 = dn_symbol_error(16, 16, 2).unwrap();
        let e2 = dn_symbol_error(32, 32, 2).unwrap();
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn wedge_mesh_has_requested_opening() {
        for omega in wedge_angles() {
            let (m, yc) = wedge_mesh(omega, 8, 4, 1.0).unwrap();
            let k = m.gamma_node(1);
            let d = [m.px[k] + 1.0, m.py[k] - yc];
            let opening = d[1].atan2(d[0]) + PI / 2.0;
            assert!((opening - omega).abs() < 1e-12);
            assert!((m.top[0] - yc).abs() < 1e-15);
        }
    }
}
