//! Galerkin assembly, mixed and pure-Neumann solves, weak flux recovery and
//! the Dirichlet-to-Neumann matrix.

use super::band::{BandCholesky, BandMatrix};
use super::mesh::{shape_tables, CellGeom, Mesh};
use crate::diffeo::CoeffFields;
use crate::error::{MuskatError, Result};
use crate::quadrature::gauss_legendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Right-hand side `f` of `div(A grad Phi) = f`.
#[derive(Clone, Copy)]
pub enum Source<'a> {
    Zero,
    /// Nodal values, interpolated bilinearly.
    Nodal(&'a [f64]),
    Func(&'a (dyn Fn([f64; 2]) -> f64 + Sync)),
}

/// Conormal flux `A grad Phi . n` on the wall as a function of the physical
/// point and the outward unit normal.
pub type WallFlux<'a> = &'a (dyn Fn([f64; 2], [f64; 2]) -> f64 + Sync);

/// `ke[a][b] = int A grad psi_b . grad psi_a` over one cell.
pub fn element_matrix(cg: &CellGeom, a: &[[f64; 3]]) -> [[f64; 4]; 4] {
    let mut ke = [[0.0; 4]; 4];
    for q in 0..4 {
        let [a11, a12, a22] = a[q];
        let g = &cg.grads[q];
        for i in 0..4 {
            let ag = [a11 * g[i][0] + a12 * g[i][1], a12 * g[i][0] + a22 * g[i][1]];
            for j in 0..4 {
                ke[i][j] += cg.wdet[q] * (ag[0] * g[j][0] + ag[1] * g[j][1]);
            }
        }
    }
    ke
}

fn check_coeffs(mesh: &Mesh, coeffs: &CoeffFields) -> Result<()> {
    if coeffs.a_q.len() != 4 * mesh.cells.len() || coeffs.detj_q.len() != coeffs.a_q.len() {
        return Err(MuskatError::Invalid(format!(
            "coefficient field has {} quadrature values, mesh needs {}",
            coeffs.a_q.len(),
            4 * mesh.cells.len()
        )));
    }
    Ok(())
}

/// Physical gradient of a nodal field at quadrature point `q` of cell `c`.
pub fn grad_at(mesh: &Mesh, phi: &[f64], c: usize, q: usize) -> [f64; 2] {
    let ids = mesh.cell_nodes(c);
    let g = &mesh.cells[c].grads[q];
    let mut out = [0.0; 2];
    for a in 0..4 {
        out[0] += phi[ids[a]] * g[a][0];
        out[1] += phi[ids[a]] * g[a][1];
    }
    out
}

/// `int A grad u . grad v` by the assembly quadrature.
pub fn energy_form(mesh: &Mesh, coeffs: &CoeffFields, u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for c in 0..mesh.cells.len() {
        for q in 0..4 {
            let gu = grad_at(mesh, u, c, q);
            let gv = grad_at(mesh, v, c, q);
            let [a11, a12, a22] = coeffs.a_q[4 * c + q];
            acc += mesh.cells[c].wdet[q]
                * (gv[0] * (a11 * gu[0] + a12 * gu[1]) + gv[1] * (a12 * gu[0] + a22 * gu[1]));
        }
    }
    acc
}

/// `int detJ |Sigma grad Phi|^2`.
pub fn bulk_dissipation(mesh: &Mesh, coeffs: &CoeffFields, phi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for c in 0..mesh.cells.len() {
        for q in 0..4 {
            let k = 4 * c + q;
            let g = grad_at(mesh, phi, c, q);
            let s = coeffs.sigma_q[k];
            let v = [s[0] * g[0] + s[1] * g[1], s[2] * g[0] + s[3] * g[1]];
            acc += mesh.cells[c].wdet[q] * coeffs.detj_q[k] * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    acc
}

/// Full-numbering load `int_{Gamma_w} g psi_a - int f psi_a`.
fn load_vector(mesh: &Mesh, source: Source, wall: Option<WallFlux>) -> Result<Vec<f64>> {
    let mut b = vec![0.0; mesh.n_nodes()];
    let tables = shape_tables();
    match source {
        Source::Zero => {}
        Source::Nodal(f) => {
            if f.len() != mesh.n_nodes() {
                return Err(MuskatError::Invalid("nodal source has the wrong length".into()));
            }
            for (c, cg) in mesh.cells.iter().enumerate() {
                let ids = mesh.cell_nodes(c);
                for q in 0..4 {
                    let fq: f64 = (0..4).map(|a| tables[q][a] * f[ids[a]]).sum();
                    for a in 0..4 {
                        b[ids[a]] -= cg.wdet[q] * tables[q][a] * fq;
                    }
                }
            }
        }
        Source::Func(f) => {
            for (c, cg) in mesh.cells.iter().enumerate() {
                let ids = mesh.cell_nodes(c);
                for q in 0..4 {
                    let fq = f(cg.qp[q]);
                    for a in 0..4 {
                        b[ids[a]] -= cg.wdet[q] * tables[q][a] * fq;
                    }
                }
            }
        }
    }
    if let Some(g) = wall {
        let (gx, gw) = gauss_legendre(4);
        let mut edge = |n0: usize, n1: usize, outward_left: bool| {
            let p0 = [mesh.px[n0], mesh.py[n0]];
            let p1 = [mesh.px[n1], mesh.py[n1]];
            let d = [p1[0] - p0[0], p1[1] - p0[1]];
            let len = d[0].hypot(d[1]);
            let nrm = if outward_left { [-d[1] / len, d[0] / len] } else { [d[1] / len, -d[0] / len] };
            for (t, w) in gx.iter().zip(&gw) {
                let s = 0.5 * (1.0 + t);
                let p = [p0[0] + s * d[0], p0[1] + s * d[1]];
                let val = 0.5 * w * len * g(p, nrm);
                b[n0] += (1.0 - s) * val;
                b[n1] += s * val;
            }
        };
        for i in 0..mesh.nx {
            edge(mesh.node(i, 0), mesh.node(i + 1, 0), false);
        }
        for j in 0..mesh.ny {
            edge(mesh.node(0, j), mesh.node(0, j + 1), true);
            edge(mesh.node(mesh.nx, j), mesh.node(mesh.nx, j + 1), false);
        }
    }
    Ok(b)
}

/// Adds `int_Gamma g psi_a dx` for nodal `g` with the consistent 1D mass.
fn add_gamma_load(mesh: &Mesh, g: &[f64], b: &mut [f64]) {
    for i in 0..mesh.nx {
        let dx = mesh.xs[i + 1] - mesh.xs[i];
        b[mesh.gamma_node(i)] += dx / 6.0 * (2.0 * g[i] + g[i + 1]);
        b[mesh.gamma_node(i + 1)] += dx / 6.0 * (g[i] + 2.0 * g[i + 1]);
    }
}

#[derive(Clone, Debug)]
pub struct MixedSolution {
    /// Nodal potential.
    pub phi: Vec<f64>,
    /// Lumped weak conormal flux `A grad Phi . N` per unit `dx` at the Gamma nodes.
    pub flux: Vec<f64>,
    /// `int detJ |Sigma grad Phi|^2`.
    pub dissipation: f64,
    /// Relative defect of the discrete Green identity.
    pub green_defect: f64,
}

/// Factorized mixed problem (Dirichlet on Gamma, conormal data on the wall)
/// for one coefficient snapshot.
pub struct MixedSystem<'m> {
    mesh: &'m Mesh,
    coeffs: &'m CoeffFields,
    chol: BandCholesky,
    /// Coupling of Gamma node `k` with free nodes `(k-1+s, ny-1)`.
    kfg: Vec<[f64; 3]>,
    /// Gamma-Gamma rows `(k-1, k, k+1)`.
    kgg: Vec<[f64; 3]>,
}

impl<'m> MixedSystem<'m> {
    pub fn new(mesh: &'m Mesh, coeffs: &'m CoeffFields) -> Result<Self> {
        check_coeffs(mesh, coeffs)?;
        let (nx, ny) = (mesh.nx, mesh.ny);
        let n_free = (nx + 1) * ny;
        let mut kff = BandMatrix::zeros(n_free, ny + 1);
        let mut kfg = vec![[0.0; 3]; nx + 1];
        let mut kgg = vec![[0.0; 3]; nx + 1];
        for c in 0..mesh.cells.len() {
            let ke = element_matrix(&mesh.cells[c], &coeffs.a_q[4 * c..4 * c + 4]);
            let ids = mesh.cell_nodes(c);
            let ij = ids.map(|k| (k / (ny + 1), k % (ny + 1)));
            for a in 0..4 {
                for b in 0..4 {
                    let ((ia, ja), (ib, jb)) = (ij[a], ij[b]);
                    match (ja == ny, jb == ny) {
                        (false, false) => {
                            let (fa, fb) = (ia * ny + ja, ib * ny + jb);
                            if fa >= fb {
                                kff.add(fa, fb, ke[a][b]);
                            }
                        }
                        (false, true) => kfg[ib][ia + 1 - ib] += ke[a][b],
                        (true, true) => kgg[ia][ib + 1 - ia] += ke[a][b],
                        (true, false) => {}
                    }
                }
            }
        }
        let chol = kff.cholesky()?;
        Ok(Self { mesh, coeffs, chol, kfg, kgg })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    fn free(&self, i: usize, j: usize) -> usize {
        i * self.mesh.ny + j
    }

    /// Solves with Dirichlet data `d` on Gamma, source `f` and wall flux `g`.
    pub fn solve(&self, d: &[f64], source: Source, wall: Option<WallFlux>) -> Result<MixedSolution> {
        let mesh = self.mesh;
        let (nx, ny) = (mesh.nx, mesh.ny);
        if d.len() != nx + 1 {
            return Err(MuskatError::Invalid(format!("Dirichlet data has {} values, Gamma has {}", d.len(), nx + 1)));
        }
        let b = load_vector(mesh, source, wall)?;
        let mut rhs = vec![0.0; (nx + 1) * ny];
        for i in 0..=nx {
            for j in 0..ny {
                rhs[self.free(i, j)] = b[mesh.node(i, j)];
            }
        }
        for k in 0..=nx {
            for s in 0..3 {
                let i = k + s;
                if i >= 1 && i - 1 <= nx {
                    let f = self.free(i - 1, ny - 1);
                    rhs[f] -= self.kfg[k][s] * d[k];
                }
            }
        }
        self.chol.solve_in_place(&mut rhs);
        let mut phi = vec![0.0; mesh.n_nodes()];
        for i in 0..=nx {
            for j in 0..ny {
                phi[mesh.node(i, j)] = rhs[self.free(i, j)];
            }
            phi[mesh.gamma_node(i)] = d[i];
        }
        let r = self.gamma_residual(&phi, &b);
        let flux: Vec<f64> = r.iter().zip(&mesh.gamma_weights).map(|(r, w)| r / w).collect();
        let dissipation = bulk_dissipation(mesh, self.coeffs, &phi);
        let boundary: f64 = r.iter().zip(d).map(|(r, d)| r * d).sum::<f64>()
            + (0..=nx).flat_map(|i| (0..ny).map(move |j| (i, j))).map(|(i, j)| {
                let k = mesh.node(i, j);
                phi[k] * b[k]
            }).sum::<f64>();
        let scale = dissipation.abs().max(boundary.abs());
        let green_defect = if scale > 0.0 { (dissipation - boundary).abs() / scale } else { 0.0 };
        Ok(MixedSolution { phi, flux, dissipation, green_defect })
    }

    /// `int_Gamma (A grad Phi . N) psi_k dx` from the Gamma rows of the residual.
    fn gamma_residual(&self, phi: &[f64], b: &[f64]) -> Vec<f64> {
        let mesh = self.mesh;
        let (nx, ny) = (mesh.nx, mesh.ny);
        (0..=nx)
            .map(|k| {
                let mut r = -b[mesh.gamma_node(k)];
                for s in 0..3 {
                    let i = k + s;
                    if i >= 1 && i - 1 <= nx {
                        r += self.kfg[k][s] * phi[mesh.node(i - 1, ny - 1)];
                        r += self.kgg[k][s] * phi[mesh.gamma_node(i - 1)];
                    }
                }
                r
            })
            .collect()
    }

    /// Flux of the homogeneous problem with Dirichlet data `d`.
    pub fn dn_apply(&self, d: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(d, Source::Zero, None)?.flux)
    }

    /// Schur complement `S = K_GG - K_GI K_II^{-1} K_IG`, so that `W * DN = S`.
    /// Only the free nodes next to Gamma enter `K_GI`, so each column needs
    /// one band solve and a three-term contraction.
    pub fn dn_matrix(&self) -> DnMatrix {
        let mesh = self.mesh;
        let (nx, ny) = (mesh.nx, mesh.ny);
        let n_free = (nx + 1) * ny;
        let cols: Vec<Vec<f64>> = (0..=nx)
            .into_par_iter()
            .map(|k| {
                let mut col = vec![0.0; n_free];
                let mut start = n_free;
                for s in 0..3 {
                    let i = k + s;
                    if i >= 1 && i - 1 <= nx {
                        let f = self.free(i - 1, ny - 1);
                        col[f] = self.kfg[k][s];
                        start = start.min(f);
                    }
                }
                self.chol.forward_from(&mut col, start);
                self.chol.backward(&mut col);
                (0..=nx)
                    .map(|l| {
                        let mut v = 0.0;
                        for s in 0..3 {
                            let i = l + s;
                            if i >= 1 && i - 1 <= nx {
                                if i - 1 == k {
                                    v += self.kgg[l][s];
                                }
                                v -= self.kfg[l][s] * col[self.free(i - 1, ny - 1)];
                            }
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let s = DMatrix::from_iterator(nx + 1, nx + 1, cols.into_iter().flatten());
        let s = 0.5 * (&s + s.transpose());
        DnMatrix { s, weights: mesh.gamma_weights.clone() }
    }
}

/// Discrete DN map stored as the symmetric matrix `S = W * DN`.
#[derive(Clone, Debug)]
pub struct DnMatrix {
    pub s: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl DnMatrix {
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Flux `W^{-1} S d`.
    pub fn apply(&self, d: &[f64]) -> Vec<f64> {
        let v = &self.s * DVector::from_column_slice(d);
        v.iter().zip(&self.weights).map(|(v, w)| v / w).collect()
    }

    /// Dense `DN = W^{-1} S`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = self.s.clone();
        for (i, w) in self.weights.iter().enumerate() {
            m.row_mut(i).scale_mut(1.0 / w);
        }
        m
    }

    /// `|W DN - (W DN)^T| / |W DN|` in the Frobenius norm.
    pub fn symmetry_defect(&self) -> f64 {
        let wdn = self.matrix().map_with_location(|i, _, v| v * self.weights[i]);
        (&wdn - wdn.transpose()).norm() / wdn.norm()
    }
}

pub fn solve_mixed(
    mesh: &Mesh,
    coeffs: &CoeffFields,
    dirichlet: &[f64],
    source: Source,
    wall: Option<WallFlux>,
) -> Result<MixedSolution> {
    MixedSystem::new(mesh, coeffs)?.solve(dirichlet, source, wall)
}

pub fn dn_apply(mesh: &Mesh, coeffs: &CoeffFields, dirichlet: &[f64]) -> Result<Vec<f64>> {
    MixedSystem::new(mesh, coeffs)?.dn_apply(dirichlet)
}

pub fn dn_assemble(mesh: &Mesh, coeffs: &CoeffFields) -> Result<DnMatrix> {
    Ok(MixedSystem::new(mesh, coeffs)?.dn_matrix())
}

#[derive(Clone, Debug)]
pub struct NeumannSolution {
    /// Zero-mean nodal potential.
    pub phi: Vec<f64>,
    /// Compatibility defect `sum_a b_a` removed from the data.
    pub correction: f64,
    /// The defect relative to `sum_a |b_a|`.
    pub relative_correction: f64,
}

/// Relative compatibility defect above which Neumann data are rejected.
pub const COMPATIBILITY_REJECT: f64 = 1e-6;

/// Pure-Neumann solve: `g1` is the flux `A grad Phi . N` per `dx` on Gamma.
pub fn solve_neumann(
    mesh: &Mesh,
    coeffs: &CoeffFields,
    g1: &[f64],
    wall: Option<WallFlux>,
    source: Source,
) -> Result<NeumannSolution> {
    check_coeffs(mesh, coeffs)?;
    if g1.len() != mesh.nx + 1 {
        return Err(MuskatError::Invalid("Gamma flux data has the wrong length".into()));
    }
    let ny = mesh.ny;
    let n = mesh.n_nodes();
    let mut k = BandMatrix::zeros(n, ny + 2);
    for c in 0..mesh.cells.len() {
        let ke = element_matrix(&mesh.cells[c], &coeffs.a_q[4 * c..4 * c + 4]);
        let ids = mesh.cell_nodes(c);
        for a in 0..4 {
            for b in 0..4 {
                if ids[a] >= ids[b] {
                    k.add(ids[a], ids[b], ke[a][b]);
                }
            }
        }
    }
    let mut b = load_vector(mesh, source, wall)?;
    add_gamma_load(mesh, g1, &mut b);
    let defect: f64 = b.iter().sum();
    let scale: f64 = b.iter().map(|v| v.abs()).sum();
    let rel = if scale > 0.0 { defect.abs() / scale } else { 0.0 };
    if rel > COMPATIBILITY_REJECT {
        return Err(MuskatError::Compatibility(rel));
    }
    let m = mesh.lumped_mass();
    let area: f64 = m.iter().sum();
    for (bi, mi) in b.iter_mut().zip(&m) {
        *bi -= defect * mi / area;
    }
    b[0] = 0.0;
    k.pin(0);
    k.cholesky()?.solve_in_place(&mut b);
    let mean: f64 = b.iter().zip(&m).map(|(p, w)| p * w).sum::<f64>() / area;
    b.iter_mut().for_each(|p| *p -= mean);
    Ok(NeumannSolution { phi: b, correction: defect, relative_correction: rel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::mesh::build_mesh;
    use crate::grid::GridFn1D;
    use crate::model::VesselGeometry;

    fn flat_mesh(nx: usize, ny: usize) -> Mesh {
        let v = VesselGeometry::flat(-1.0, nx).unwrap();
        build_mesh(&v, &GridFn1D::from_fn(nx, |_| 1.0), ny).unwrap()
    }

    fn curved_mesh(nx: usize, ny: usize) -> Mesh {
        let v = VesselGeometry::new(crate::model::WallProfile::Parabolic { base: -1.0, curvature: 0.3 }, nx).unwrap();
        build_mesh(&v, &GridFn1D::from_fn(nx, |x| 0.5 - 0.2 * x * x), ny).unwrap()
    }

    #[test]
    fn constants_are_reproduced() {
        let m = curved_mesh(16, 6);
        let c = CoeffFields::identity(&m);
        let sol = solve_mixed(&m, &c, &[2.5; 17], Source::Zero, None).unwrap();
        assert!(sol.phi.iter().all(|p| (p - 2.5).abs() < 1e-12));
        assert!(sol.flux.iter().all(|f| f.abs() < 1e-10));
    }

    #[test]
    fn dn_matrix_matches_solves_and_is_symmetric() {
        let m = curved_mesh(12, 5);
        let c = CoeffFields::identity(&m);
        let sys = MixedSystem::new(&m, &c).unwrap();
        let dn = sys.dn_matrix();
        let d: Vec<f64> = (0..13).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let direct = sys.dn_apply(&d).unwrap();
        let via = dn.apply(&d);
        for (a, b) in direct.iter().zip(&via) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(dn.symmetry_defect() < 1e-14);
        let ones = dn.apply(&[1.0; 13]);
        assert!(ones.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn green_identity_holds() {
        let m = curved_mesh(16, 6);
        let c = CoeffFields::identity(&m);
        let d: Vec<f64> = (0..17).map(|i| (0.4 * i as f64).sin()).collect();
        let sol = solve_mixed(&m, &c, &d, Source::Zero, None).unwrap();
        assert!(sol.green_defect < 1e-10);
        assert!(sol.dissipation > 0.0);
    }

    #[test]
    fn neumann_zero_data_gives_zero() {
        let m = flat_mesh(8, 4);
        let c = CoeffFields::identity(&m);
        let sol = solve_neumann(&m, &c, &[0.0; 9], None, Source::Zero).unwrap();
        assert!(sol.phi.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn neumann_rejects_incompatible_data() {
        let m = flat_mesh(8, 4);
        let c = CoeffFields::identity(&m);
        let err = solve_neumann(&m, &c, &[1.0; 9], None, Source::Zero).unwrap_err();
        assert!(matches!(err, MuskatError::Compatibility(_)));
    }

    #[test]
    fn neumann_correction_scales_with_perturbation() {
        let m = flat_mesh(8, 4);
        let c = CoeffFields::identity(&m);
        let g: Vec<f64> = (0..9).map(|i| (std::f64::consts::PI * crate::grid::node(8, i)).cos()).collect();
        let base = solve_neumann(&m, &c, &g, None, Source::Zero).unwrap().correction;
        let c1 = solve_neumann(&m, &c, &g.iter().map(|v| v + 1e-8).collect::<Vec<_>>(), None, Source::Zero)
            .unwrap()
            .correction;
        let c2 = solve_neumann(&m, &c, &g.iter().map(|v| v + 2e-8).collect::<Vec<_>>(), None, Source::Zero)
            .unwrap()
            .correction;
        assert!(((c2 - base) / (c1 - base) - 2.0).abs() < 1e-6);
    }
}
