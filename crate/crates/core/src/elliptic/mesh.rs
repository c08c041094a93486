//! Terrain-following tensor mesh `(x, t) -> (x, h_w(x) + t (h_s(x) - h_w(x)))`
//! with bilinear quadrilateral cells.

use crate::error::{MuskatError, Result};
use crate::grid::GridFn1D;
use crate::model::VesselGeometry;

/// 2x2 Gauss points in reference coordinates, ordered (xi, eta).
pub const GAUSS2: [[f64; 2]; 4] = {
    const G: f64 = 0.577_350_269_189_625_8;
    [[-G, -G], [G, -G], [G, G], [-G, G]]
};

/// Reference corners in cell order (i,j), (i+1,j), (i+1,j+1), (i,j+1).
pub const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

#[derive(Clone, Debug)]
pub struct CellGeom {
    /// Physical quadrature points.
    pub qp: [[f64; 2]; 4],
    /// Gauss weight times Jacobian determinant.
    pub wdet: [f64; 4],
    /// Physical gradients of the four shape functions at each point: `grads[q][a]`.
    pub grads: [[[f64; 2]; 4]; 4],
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
    pub px: Vec<f64>,
    pub py: Vec<f64>,
    pub cells: Vec<CellGeom>,
    /// Trapezoid weights of the top boundary in `x`.
    pub gamma_weights: Vec<f64>,
}

/// Values and reference gradients of the bilinear shape functions.
pub fn shape(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut n = [0.0; 4];
    let mut d = [[0.0; 2]; 4];
    for a in 0..4 {
        let (xa, ya) = (CORNERS[a][0], CORNERS[a][1]);
        n[a] = 0.25 * (1.0 + xa * xi) * (1.0 + ya * eta);
        d[a] = [0.25 * xa * (1.0 + ya * eta), 0.25 * ya * (1.0 + xa * xi)];
    }
    (n, d)
}

/// Physical point, Jacobian determinant and physical shape gradients.
pub fn map_point(corners: &[[f64; 2]; 4], xi: f64, eta: f64) -> ([f64; 2], f64, [f64; 4], [[f64; 2]; 4]) {
    let (n, d) = shape(xi, eta);
    let mut p = [0.0; 2];
    let mut j = [[0.0; 2]; 2];
    for a in 0..4 {
        p[0] += n[a] * corners[a][0];
        p[1] += n[a] * corners[a][1];
        for r in 0..2 {
            j[r][0] += d[a][r] * corners[a][0];
            j[r][1] += d[a][r] * corners[a][1];
        }
    }
    // j[r][c] = d x_c / d ref_r
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let mut g = [[0.0; 2]; 4];
    for a in 0..4 {
        let (u, v) = (d[a][0], d[a][1]);
        g[a] = [(j[1][1] * u - j[0][1] * v) / det, (-j[1][0] * u + j[0][0] * v) / det];
    }
    (p, det, n, g)
}

impl Mesh {
    /// General constructor: strictly increasing columns `xs` and levels `ts` in [0, 1].
    pub fn from_columns(xs: Vec<f64>, bottom: Vec<f64>, top: Vec<f64>, ts: Vec<f64>) -> Result<Self> {
        let nx = xs.len() - 1;
        let ny = ts.len() - 1;
        if nx < 1 || ny < 1 || bottom.len() != nx + 1 || top.len() != nx + 1 {
            return Err(MuskatError::Invalid("mesh column data have inconsistent lengths".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MuskatError::Invalid("mesh coordinates must increase strictly".into()));
        }
        if let Some(i) = (0..=nx).find(|&i| !(top[i] - bottom[i] > 0.0)) {
            return Err(MuskatError::Geometry(format!(
                "layer thickness {} <= 0 at column {i} (x = {})",
                top[i] - bottom[i],
                xs[i]
            )));
        }
        let nn = (nx + 1) * (ny + 1);
        let mut px = vec![0.0; nn];
        let mut py = vec![0.0; nn];
        for i in 0..=nx {
            for j in 0..=ny {
                let k = i * (ny + 1) + j;
                px[k] = xs[i];
                py[k] = if j == ny { top[i] } else if j == 0 { bottom[i] } else { bottom[i] + ts[j] * (top[i] - bottom[i]) };
            }
        }
        let mut cells = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                let ids = cell_nodes(ny, i, j);
                let corners = ids.map(|k| [px[k], py[k]]);
                let mut cg = CellGeom { qp: [[0.0; 2]; 4], wdet: [0.0; 4], grads: [[[0.0; 2]; 4]; 4] };
                for (q, gp) in GAUSS2.iter().enumerate() {
                    let (p, det, _, g) = map_point(&corners, gp[0], gp[1]);
                    if !(det > 0.0) {
                        return Err(MuskatError::Geometry(format!("non-positive cell Jacobian in cell ({i},{j})")));
                    }
                    cg.qp[q] = p;
                    cg.wdet[q] = det;
                    cg.grads[q] = g;
                }
                cells.push(cg);
            }
        }
        let mut gamma_weights = vec![0.0; nx + 1];
        for i in 0..nx {
            let dx = xs[i + 1] - xs[i];
            gamma_weights[i] += 0.5 * dx;
            gamma_weights[i + 1] += 0.5 * dx;
        }
        Ok(Self { nx, ny, xs, ts, bottom, top, px, py, cells, gamma_weights })
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn gamma_node(&self, i: usize) -> usize {
        self.node(i, self.ny)
    }

    pub fn corner_nodes(&self) -> (usize, usize) {
        (self.gamma_node(0), self.gamma_node(self.nx))
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        cell_nodes(self.ny, c / self.ny, c % self.ny)
    }

    pub fn cell_corners(&self, c: usize) -> [[f64; 2]; 4] {
        self.cell_nodes(c).map(|k| [self.px[k], self.py[k]])
    }

    /// Area of every cell summed (exact for bilinear cells with 2x2 Gauss).
    pub fn area(&self) -> f64 {
        self.cells.iter().map(|c| c.wdet.iter().sum::<f64>()).sum()
    }

    /// `int psi_a` for every node.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_nodes()];
        let tables = shape_tables();
        for (c, cg) in self.cells.iter().enumerate() {
            let ids = self.cell_nodes(c);
            for q in 0..4 {
                for a in 0..4 {
                    m[ids[a]] += cg.wdet[q] * tables[q][a];
                }
            }
        }
        m
    }

    /// Uniform logical levels.
    pub fn levels(ny: usize) -> Vec<f64> {
        (0..=ny).map(|j| j as f64 / ny as f64).collect()
    }
}

pub(crate) fn cell_nodes(ny: usize, i: usize, j: usize) -> [usize; 4] {
    let n = |i: usize, j: usize| i * (ny + 1) + j;
    [n(i, j), n(i + 1, j), n(i + 1, j + 1), n(i, j + 1)]
}

/// Shape values at the 2x2 Gauss points: `tables[q][a]`.
pub fn shape_tables() -> [[f64; 4]; 4] {
    let mut t = [[0.0; 4]; 4];
    for (q, gp) in GAUSS2.iter().enumerate() {
        t[q] = shape(gp[0], gp[1]).0;
    }
    t
}

/// Mesh of the reference domain between the vessel wall and `h_s`.
pub fn build_mesh(vessel: &VesselGeometry, h_s: &GridFn1D, ny: usize) -> Result<Mesh> {
    let xs = h_s.xs();
    let bottom: Vec<f64> = xs.iter().map(|&x| vessel.h_w(x)).collect();
    Mesh::from_columns(xs, bottom, h_s.values().to_vec(), Mesh::levels(ny))
}

/// Geometric grading of `n` intervals on [-1, 1], refined towards `x = -1`
/// or towards both ends; ratio 1 gives a uniform grid.
pub fn graded_columns(n: usize, ratio: f64, both_ends: bool) -> Vec<f64> {
    if (ratio - 1.0).abs() < 1e-14 {
        return (0..=n).map(|i| crate::grid::node(n, i)).collect();
    }
    let one_sided = |m: usize, len: f64| -> Vec<f64> {
        let total: f64 = (0..m).map(|k| ratio.powi(k as i32)).sum();
        let mut x = vec![0.0];
        let mut acc = 0.0;
        for k in 0..m {
            acc += ratio.powi(k as i32) / total * len;
            x.push(acc);
        }
        x
    };
    if both_ends {
        let half = one_sided(n / 2, 1.0);
        let mut xs: Vec<f64> = half.iter().map(|v| v - 1.0).collect();
        let right: Vec<f64> = half.iter().rev().skip(1).map(|v| 1.0 - v).collect();
        xs.extend(right);
        xs
    } else {
        one_sided(n, 2.0).iter().map(|v| v - 1.0).collect()
    }
}
