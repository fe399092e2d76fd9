//! Spaces and discrete operators of the lowest-order HHJ method.
//!
//! Degrees of freedom:
//!
//! - stress space: one coefficient per edge, the (single-valued) value of the
//!   normal-normal trace `n' tau n` of the piecewise constant symmetric
//!   tensor field on that edge;
//! - deflection space: nodal values at interior vertices of continuous
//!   piecewise linears vanishing on the boundary;
//! - rotation-potential space: nodal values (two components, interleaved) of
//!   continuous piecewise linear vector fields, no boundary condition.
//!
//! On each triangle the three edge values determine the constant tensor
//! uniquely through a 3x3 solve; all assembly routines work cell by cell on
//! that reconstruction.

use crate::error::{Error, Result};
use crate::mesh::{CellId, Triangulation};
use crate::quadrature::{segment_mean, GAUSS2, TRI_DEGREE4};
use crate::sparse::{solve3, CsrMatrix};

/// Symmetric 2x2 tensor; the (2,1) entry is implied.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymTensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymTensor2 {
    pub const ZERO: SymTensor2 = SymTensor2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Double contraction `self : other`.
    pub fn ddot(&self, other: &SymTensor2) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }

    /// Normal-normal trace `n' tau n`; invariant under `n -> -n`.
    pub fn nn(&self, n: [f64; 2]) -> f64 {
        n[0] * n[0] * self.xx + 2.0 * n[0] * n[1] * self.xy + n[1] * n[1] * self.yy
    }

    /// Tangential-normal trace `t' tau n`; invariant under `(n, t) -> (-n, -t)`.
    pub fn nt(&self, t: [f64; 2], n: [f64; 2]) -> f64 {
        t[0] * n[0] * self.xx + (t[0] * n[1] + t[1] * n[0]) * self.xy + t[1] * n[1] * self.yy
    }
}

impl std::ops::Add for SymTensor2 {
    type Output = SymTensor2;
    fn add(self, o: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl std::ops::Sub for SymTensor2 {
    type Output = SymTensor2;
    fn sub(self, o: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

impl std::ops::Mul<f64> for SymTensor2 {
    type Output = SymTensor2;
    fn mul(self, s: f64) -> SymTensor2 {
        SymTensor2::new(self.xx * s, self.xy * s, self.yy * s)
    }
}

/// The compliance operator `C tau = tau/(1-nu) - nu/(1-nu^2) tr(tau) I` of
/// the plate model, with Poisson ratio validated at construction.
#[derive(Clone, Copy, Debug)]
pub struct ElasticityTensor {
    nu: f64,
}

impl ElasticityTensor {
    pub fn new(nu: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&nu) {
            return Err(Error::PoissonRatioOutOfRange { nu });
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn apply(&self, tau: SymTensor2) -> SymTensor2 {
        let a = 1.0 / (1.0 - self.nu);
        let b = self.nu / (1.0 - self.nu * self.nu) * tau.trace();
        SymTensor2::new(a * tau.xx - b, a * tau.xy, a * tau.yy - b)
    }

    /// Inverse of [`ElasticityTensor::apply`]: `(1-nu) s + nu tr(s) I`.
    pub fn inverse_apply(&self, s: SymTensor2) -> SymTensor2 {
        let a = 1.0 - self.nu;
        let b = self.nu * s.trace();
        SymTensor2::new(a * s.xx + b, a * s.xy, a * s.yy + b)
    }
}

/// Stress-space coefficients (or dual-space values): one real per edge.
#[derive(Clone, Debug)]
pub struct StressCoeffs {
    pub level_tag: u32,
    pub values: Vec<f64>,
}

impl StressCoeffs {
    pub fn zeros(tri: &Triangulation) -> Self {
        Self {
            level_tag: tri.level_tag,
            values: vec![0.0; tri.num_edges()],
        }
    }

    pub fn from_values(tri: &Triangulation, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), tri.num_edges());
        Self {
            level_tag: tri.level_tag,
            values,
        }
    }
}

/// Deflection-space coefficients: one real per interior vertex.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub level_tag: u32,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(tri: &Triangulation) -> Self {
        Self {
            level_tag: tri.level_tag,
            values: vec![0.0; tri.num_interior_vertices()],
        }
    }
}

/// Rotation-potential coefficients: `[x0, y0, x1, y1, ...]` over all vertices.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub level_tag: u32,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(tri: &Triangulation) -> Self {
        Self {
            level_tag: tri.level_tag,
            values: vec![0.0; 2 * tri.num_vertices()],
        }
    }
}

/// The unique constant symmetric tensor on `cell` whose normal-normal trace
/// on local edge `k` (opposite local vertex `k`) equals `m[k]`.
pub fn cell_tensor_from_edge_values(
    tri: &Triangulation,
    cell: CellId,
    m: [f64; 3],
) -> Result<SymTensor2> {
    let normals = cell_edge_normals(tri, cell);
    tensor_from_normal_values(&normals, &m).ok_or(Error::SingularCellSystem { cell })
}

fn cell_edge_normals(tri: &Triangulation, cell: CellId) -> [[f64; 2]; 3] {
    let mut n = [[0.0; 2]; 3];
    for k in 0..3 {
        n[k] = tri.edges[tri.cell_edges[cell][k].edge].normal;
    }
    n
}

/// Solves `n_k' tau n_k = m_k` for the three tensor components.
pub(crate) fn tensor_from_normal_values(normals: &[[f64; 2]; 3], m: &[f64; 3]) -> Option<SymTensor2> {
    let mut a = [[0.0; 3]; 3];
    for k in 0..3 {
        let [nx, ny] = normals[k];
        a[k] = [nx * nx, 2.0 * nx * ny, ny * ny];
    }
    solve3(a, *m).map(|x| SymTensor2::new(x[0], x[1], x[2]))
}

/// The three stress basis tensors of a cell: basis `k` has normal-normal
/// trace one on local edge `k` and zero on the other two.
pub fn cell_basis_tensors(tri: &Triangulation, cell: CellId) -> Result<[SymTensor2; 3]> {
    let normals = cell_edge_normals(tri, cell);
    let mut out = [SymTensor2::ZERO; 3];
    for k in 0..3 {
        let mut m = [0.0; 3];
        m[k] = 1.0;
        out[k] =
            tensor_from_normal_values(&normals, &m).ok_or(Error::SingularCellSystem { cell })?;
    }
    Ok(out)
}

/// Reconstructs the constant tensor of `sigma` on `cell`.
pub fn stress_on_cell(tri: &Triangulation, sigma: &StressCoeffs, cell: CellId) -> Result<SymTensor2> {
    let ce = &tri.cell_edges[cell];
    cell_tensor_from_edge_values(
        tri,
        cell,
        [
            sigma.values[ce[0].edge],
            sigma.values[ce[1].edge],
            sigma.values[ce[2].edge],
        ],
    )
}

/// Mass matrix of the compliance form `a(sigma, tau) = int C sigma : tau`.
///
/// Integrands are constant per cell, so the integration is exact. Symmetric
/// positive definite of size edges x edges.
pub fn assemble_mass(tri: &Triangulation, nu: f64) -> Result<CsrMatrix> {
    let c = ElasticityTensor::new(nu)?;
    let ne = tri.num_edges();
    let mut triplets = Vec::with_capacity(9 * tri.num_cells());
    for cell in 0..tri.num_cells() {
        let basis = cell_basis_tensors(tri, cell)?;
        let area = tri.areas[cell];
        let ctau: Vec<SymTensor2> = basis.iter().map(|t| c.apply(*t)).collect();
        for i in 0..3 {
            let ei = tri.cell_edges[cell][i].edge;
            for j in 0..3 {
                let ej = tri.cell_edges[cell][j].edge;
                triplets.push((ei, ej, area * ctau[i].ddot(&basis[j])));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(ne, ne, &triplets))
}

/// The constraint form `b(tau, v)` on basis pairs: rows are interior-vertex
/// hats, columns are edge basis tensors.
///
/// For piecewise constant stresses the elementwise divergence vanishes and
/// only the tangential-normal boundary term survives:
/// `b(tau, v) = sum_K sum_{e in dK} (t' tau n) [v(end) - v(start)]`
/// with the traversal orientation of each cell.
pub fn assemble_bform(tri: &Triangulation) -> Result<CsrMatrix> {
    let mut triplets = Vec::new();
    for cell in 0..tri.num_cells() {
        let basis = cell_basis_tensors(tri, cell)?;
        for k in 0..3 {
            let ce = tri.cell_edges[cell][k];
            let edge = &tri.edges[ce.edge];
            let (a, b) = edge.endpoints;
            for (j, tau) in basis.iter().enumerate() {
                let col = tri.cell_edges[cell][j].edge;
                // t' tau n in the canonical frame equals the value in the
                // outward frame; the sign enters through the traversal
                // direction of the tangential derivative.
                let mnt = tau.nt(edge.tangent, edge.normal);
                if let Some(row) = tri.interior_index[b] {
                    triplets.push((row, col, ce.sign * mnt));
                }
                if let Some(row) = tri.interior_index[a] {
                    triplets.push((row, col, -ce.sign * mnt));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(
        tri.num_interior_vertices(),
        tri.num_edges(),
        &triplets,
    ))
}

/// P1 stiffness matrix on interior-vertex DOFs (homogeneous Dirichlet).
pub fn assemble_p1_stiffness(tri: &Triangulation) -> CsrMatrix {
    let n = tri.num_interior_vertices();
    let mut triplets = Vec::with_capacity(9 * tri.num_cells());
    for cell in 0..tri.num_cells() {
        let g = tri.barycentric_gradients(cell);
        let area = tri.areas[cell];
        let vs = tri.cells[cell];
        for i in 0..3 {
            let Some(row) = tri.interior_index[vs[i]] else {
                continue;
            };
            for j in 0..3 {
                if let Some(col) = tri.interior_index[vs[j]] {
                    triplets.push((row, col, area * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// P1 mass matrix on interior-vertex DOFs.
pub fn assemble_p1_mass(tri: &Triangulation) -> CsrMatrix {
    let n = tri.num_interior_vertices();
    let mut triplets = Vec::with_capacity(9 * tri.num_cells());
    for cell in 0..tri.num_cells() {
        let area = tri.areas[cell];
        let vs = tri.cells[cell];
        for i in 0..3 {
            let Some(row) = tri.interior_index[vs[i]] else {
                continue;
            };
            for j in 0..3 {
                if let Some(col) = tri.interior_index[vs[j]] {
                    let w = if i == j { area / 6.0 } else { area / 12.0 };
                    triplets.push((row, col, w));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Load functional `v -> int f v` evaluated on interior hats, by the
/// degree-4 triangle rule.
pub fn load_vector(tri: &Triangulation, mut f: impl FnMut(f64, f64) -> f64) -> Vec<f64> {
    let mut load = vec![0.0; tri.num_interior_vertices()];
    for cell in 0..tri.num_cells() {
        let p = tri.cell_points(cell);
        let area = tri.areas[cell];
        let vs = tri.cells[cell];
        for (bary, w) in TRI_DEGREE4 {
            let x = bary[0] * p[0].x + bary[1] * p[1].x + bary[2] * p[2].x;
            let y = bary[0] * p[0].y + bary[1] * p[1].y + bary[2] * p[2].y;
            let fw = w * area * f(x, y);
            for i in 0..3 {
                if let Some(row) = tri.interior_index[vs[i]] {
                    load[row] += fw * bary[i];
                }
            }
        }
    }
    load
}

/// Matrix of the symmetric curl `S_h -> V_h`: maps interleaved nodal values
/// of a P1 vector field to the edge coefficients of its piecewise constant
/// symmetric curl.
///
/// Rows are computed from the first adjacent cell; the reconstruction from
/// the second adjacent cell must agree on the edge coefficient (the trace is
/// the tangential derivative of `phi . n`, which is single-valued), and any
/// disagreement beyond 1e-12 is reported as an assembly error.
pub fn assemble_symcurl(tri: &Triangulation) -> Result<CsrMatrix> {
    let ne = tri.num_edges();
    let nv = tri.num_vertices();
    let mut triplets = Vec::with_capacity(6 * ne);
    // Per-cell symmetric curls of the six local basis fields (hat_i e_m):
    // for m = 0: [[gy, -gx/2], [-gx/2, 0]]; for m = 1: [[0, gy/2], [gy/2, -gx]].
    let cell_curls = |cell: CellId| -> [[SymTensor2; 2]; 3] {
        let g = tri.barycentric_gradients(cell);
        let mut s = [[SymTensor2::ZERO; 2]; 3];
        for i in 0..3 {
            let [gx, gy] = g[i];
            s[i][0] = SymTensor2::new(gy, -0.5 * gx, 0.0);
            s[i][1] = SymTensor2::new(0.0, 0.5 * gy, -gx);
        }
        s
    };
    for (e, edge) in tri.edges.iter().enumerate() {
        let n = edge.normal;
        let c1 = edge.cells.0;
        let curls1 = cell_curls(c1);
        let vs1 = tri.cells[c1];
        let mut val1 = [[0.0; 2]; 3];
        for i in 0..3 {
            for m in 0..2 {
                val1[i][m] = curls1[i][m].nn(n);
                triplets.push((e, 2 * vs1[i] + m, val1[i][m]));
            }
        }
        if let Some(c2) = edge.cells.1 {
            // The two one-sided reconstructions are linear functionals on the
            // nodal values of the union of both cells; they agree exactly when
            // shared-vertex entries match and lone-vertex entries vanish.
            let curls2 = cell_curls(c2);
            let vs2 = tri.cells[c2];
            let mut worst = 0.0f64;
            for i in 0..3 {
                for m in 0..2 {
                    let v2 = curls2[i][m].nn(n);
                    let v1 = match vs1.iter().position(|&v| v == vs2[i]) {
                        Some(k) => val1[k][m],
                        None => 0.0,
                    };
                    worst = worst.max((v1 - v2).abs());
                }
            }
            for (k, &v) in vs1.iter().enumerate() {
                if !vs2.contains(&v) {
                    for m in 0..2 {
                        worst = worst.max(val1[k][m].abs());
                    }
                }
            }
            if worst > 1e-12 {
                return Err(Error::SymCurlMismatch {
                    edge: e,
                    delta: worst,
                });
            }
        }
    }
    Ok(CsrMatrix::from_triplets(ne, 2 * nv, &triplets))
}

/// Canonical interpolation into the stress space: the coefficient on each
/// edge is the mean of the normal-normal trace, by two-point Gauss.
pub fn interp_pi(
    tri: &Triangulation,
    mut tau: impl FnMut(f64, f64) -> SymTensor2,
) -> StressCoeffs {
    let mut values = Vec::with_capacity(tri.num_edges());
    for edge in &tri.edges {
        let (a, b) = edge.endpoints;
        let n = edge.normal;
        values.push(segment_mean(
            GAUSS2,
            tri.vertices[a],
            tri.vertices[b],
            |x, y| tau(x, y).nn(n),
        ));
    }
    StressCoeffs::from_values(tri, values)
}

/// Vertex interpolation into the P1 vector space.
pub fn interp_i(tri: &Triangulation, mut phi: impl FnMut(f64, f64) -> [f64; 2]) -> VectorField {
    let mut values = Vec::with_capacity(2 * tri.num_vertices());
    for p in &tri.vertices {
        let v = phi(p.x, p.y);
        values.push(v[0]);
        values.push(v[1]);
    }
    VectorField {
        level_tag: tri.level_tag,
        values,
    }
}

/// All discrete operators of one mesh, assembled once.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub nu: f64,
    /// Compliance-form mass, edges x edges, SPD.
    pub mass: CsrMatrix,
    /// Constraint form, interior vertices x edges.
    pub bform: CsrMatrix,
    /// P1 Dirichlet stiffness, interior x interior.
    pub p1_stiffness: CsrMatrix,
    /// P1 Dirichlet mass, interior x interior.
    pub p1_mass: CsrMatrix,
    /// Symmetric curl, edges x 2*vertices.
    pub symcurl: CsrMatrix,
}

impl Discretization {
    pub fn assemble(tri: &Triangulation, nu: f64) -> Result<Self> {
        Ok(Self {
            nu,
            mass: assemble_mass(tri, nu)?,
            bform: assemble_bform(tri)?,
            p1_stiffness: assemble_p1_stiffness(tri),
            p1_mass: assemble_p1_mass(tri),
            symcurl: assemble_symcurl(tri)?,
        })
    }

    /// L2 projection onto the deflection space: solves the P1 mass system
    /// for the load of `v` by CG to relative tolerance 1e-13.
    pub fn project_q(
        &self,
        tri: &Triangulation,
        v: impl FnMut(f64, f64) -> f64,
    ) -> Result<ScalarField> {
        let b = load_vector(tri, v);
        let mut q = vec![0.0; b.len()];
        crate::sparse::cg(
            |x, y| self.p1_mass.matvec_into(x, y),
            &b,
            &mut q,
            1e-13,
            10 * b.len() + 100,
        )?;
        Ok(ScalarField {
            level_tag: tri.level_tag,
            values: q,
        })
    }

    /// Discrete double divergence: Riesz representative in the deflection
    /// space of `v -> b(sigma, v)`, i.e. the P1-mass solve of `B sigma`.
    pub fn divdiv_apply(&self, tri: &Triangulation, sigma: &StressCoeffs) -> Result<ScalarField> {
        assert_eq!(sigma.level_tag, tri.level_tag);
        let b = self.bform.matvec(&sigma.values);
        let mut q = vec![0.0; b.len()];
        crate::sparse::cg(
            |x, y| self.p1_mass.matvec_into(x, y),
            &b,
            &mut q,
            1e-13,
            10 * b.len() + 100,
        )?;
        Ok(ScalarField {
            level_tag: tri.level_tag,
            values: q,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{initial_mesh, refine_uniform, Domain};
    use crate::testmesh::{nine_vertex_square, reference_triangle, two_cell_square};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn compliance_operator_values() {
        let id = SymTensor2::identity();
        let c0 = ElasticityTensor::new(0.0).unwrap();
        assert_eq!(c0.apply(id), id);

        let c3 = ElasticityTensor::new(0.3).unwrap();
        let out = c3.apply(id);
        // C(I) = I / (1 + nu)
        assert_relative_eq!(out.xx, 1.0 / 1.3, max_relative = 1e-15);
        assert_relative_eq!(out.yy, 1.0 / 1.3, max_relative = 1e-15);
        assert_eq!(out.xy, 0.0);

        // Traceless tensors scale by 1 / (1 - nu).
        let d = SymTensor2::new(1.0, 0.0, -1.0);
        let out = c3.apply(d);
        assert_relative_eq!(out.xx, 1.0 / 0.7, max_relative = 1e-15);
        assert_relative_eq!(out.yy, -1.0 / 0.7, max_relative = 1e-15);

        assert!(ElasticityTensor::new(0.5).is_err());
        assert!(ElasticityTensor::new(-0.01).is_err());
    }

    #[test]
    fn compliance_inverse_values() {
        let c3 = ElasticityTensor::new(0.3).unwrap();
        let out = c3.inverse_apply(SymTensor2::identity());
        assert_relative_eq!(out.xx, 1.3, max_relative = 1e-15);
        assert_relative_eq!(out.yy, 1.3, max_relative = 1e-15);

        let c0 = ElasticityTensor::new(0.0).unwrap();
        let t = SymTensor2::new(0.3, -0.2, 1.7);
        assert_eq!(c0.inverse_apply(t), t);
    }

    proptest! {
        #[test]
        fn compliance_round_trip(xx in -5.0f64..5.0, xy in -5.0f64..5.0, yy in -5.0f64..5.0, nu in 0.0f64..0.49) {
            let c = ElasticityTensor::new(nu).unwrap();
            let tau = SymTensor2::new(xx, xy, yy);
            let back = c.inverse_apply(c.apply(tau));
            prop_assert!((back.xx - tau.xx).abs() < 1e-13);
            prop_assert!((back.xy - tau.xy).abs() < 1e-13);
            prop_assert!((back.yy - tau.yy).abs() < 1e-13);
        }

        #[test]
        fn traces_are_frame_sign_invariant(xx in -5.0f64..5.0, xy in -5.0f64..5.0, yy in -5.0f64..5.0, angle in 0.0f64..std::f64::consts::TAU) {
            let tau = SymTensor2::new(xx, xy, yy);
            let n = [angle.cos(), angle.sin()];
            let t = [-n[1], n[0]];
            let nflip = [-n[0], -n[1]];
            let tflip = [-t[0], -t[1]];
            prop_assert!((tau.nn(n) - tau.nn(nflip)).abs() < 1e-12);
            prop_assert!((tau.nt(t, n) - tau.nt(tflip, nflip)).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_cell_tensor_reconstruction() {
        let tri = reference_triangle();
        // Local edges of cell 0: (hypotenuse, left, bottom).
        let t = cell_tensor_from_edge_values(&tri, 0, [1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(t.xx, 1.0, epsilon = 1e-14);
        assert_relative_eq!(t.xy, 0.0, epsilon = 1e-14);
        assert_relative_eq!(t.yy, 1.0, epsilon = 1e-14);

        let t = cell_tensor_from_edge_values(&tri, 0, [0.5, 1.0, 0.0]).unwrap();
        assert_relative_eq!(t.xx, 1.0, epsilon = 1e-14);
        assert_relative_eq!(t.xy, 0.0, epsilon = 1e-14);
        assert_relative_eq!(t.yy, 0.0, epsilon = 1e-14);

        let t = cell_tensor_from_edge_values(&tri, 0, [0.0, 0.0, 0.0]).unwrap();
        assert_eq!(t, SymTensor2::ZERO);
    }

    #[test]
    fn reference_mass_hand_values() {
        // Basis tensors on the reference triangle (area 1/2, nu = 0):
        // tau_hyp = [[0,1],[1,0]], tau_left = [[1,-1/2],[-1/2,0]],
        // tau_bottom = [[0,-1/2],[-1/2,1]]. Entries are area * tau_i : tau_j.
        let tri = reference_triangle();
        let m = assemble_mass(&tri, 0.0).unwrap();
        // Edge ids in first-encounter order: 0 = hypotenuse, 1 = left, 2 = bottom.
        assert_relative_eq!(m.get(0, 0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(m.get(0, 1), -0.5, epsilon = 1e-14);
        assert_relative_eq!(m.get(0, 2), -0.5, epsilon = 1e-14);
        assert_relative_eq!(m.get(1, 1), 0.75, epsilon = 1e-14);
        assert_relative_eq!(m.get(1, 2), 0.25, epsilon = 1e-14);
        assert_relative_eq!(m.get(2, 2), 0.75, epsilon = 1e-14);
        assert!(m.symmetry_defect() < 1e-15);
    }

    #[test]
    fn mass_identity_vector_integral() {
        // The all-ones coefficient vector represents tau = I, and
        // a(I, I) = int C I : I = 2 area / (1 + nu).
        for (domain, nu) in [(Domain::Square, 0.3), (Domain::LShape, 0.0)] {
            let tri = refine_uniform(&initial_mesh(domain)).0;
            let m = assemble_mass(&tri, nu).unwrap();
            let ones = vec![1.0; tri.num_edges()];
            let got = crate::sparse::dot(&ones, &m.matvec(&ones));
            let want = 2.0 * tri.total_area() / (1.0 + nu);
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn mass_is_spd() {
        let tri = nine_vertex_square();
        let m = assemble_mass(&tri, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x: Vec<f64> = (0..tri.num_edges())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            if x.iter().all(|&v| v == 0.0) {
                continue;
            }
            assert!(crate::sparse::dot(&x, &m.matvec(&x)) > 0.0);
        }
    }

    #[test]
    fn mass_spectrum_within_compliance_bounds() {
        // Rayleigh quotients against the nu = 0 mass lie in
        // [1/(1+nu), 1/(1-nu)], the spectral enclosure of C.
        let tri = nine_vertex_square();
        let nu = 0.3;
        let m = assemble_mass(&tri, nu).unwrap();
        let m0 = assemble_mass(&tri, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..tri.num_edges())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let q = crate::sparse::dot(&x, &m.matvec(&x)) / crate::sparse::dot(&x, &m0.matvec(&x));
            assert!(q >= 1.0 / (1.0 + nu) - 1e-12);
            assert!(q <= 1.0 / (1.0 - nu) + 1e-12);
        }
    }

    #[test]
    fn bform_shapes_and_rank() {
        let tri = two_cell_square();
        let b = assemble_bform(&tri).unwrap();
        assert_eq!(b.nrows(), 0);
        assert_eq!(b.ncols(), 5);

        let tri = nine_vertex_square();
        let b = assemble_bform(&tri).unwrap();
        assert_eq!(b.nrows(), 1);
        assert_eq!(b.ncols(), 16);
        // Rank one: the single row is nonzero.
        assert!(b.max_abs() > 0.1);
    }

    #[test]
    fn complex_property_bc_is_zero() {
        for domain in [Domain::Square, Domain::LShape] {
            let tri = refine_uniform(&initial_mesh(domain)).0;
            let b = assemble_bform(&tri).unwrap();
            let c = assemble_symcurl(&tri).unwrap();
            assert!(b.matmul(&c).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn symcurl_constant_examples() {
        let tri = nine_vertex_square();
        let c = assemble_symcurl(&tri).unwrap();

        // phi = (y, 0): symmetric curl is [[1,0],[0,0]] everywhere, so the
        // edge coefficient is n_x^2.
        let phi = interp_i(&tri, |_, y| [y, 0.0]);
        let out = c.matvec(&phi.values);
        for (e, edge) in tri.edges.iter().enumerate() {
            assert_relative_eq!(out[e], edge.normal[0] * edge.normal[0], epsilon = 1e-13);
        }

        // Kernel fields: (x, y) and constants.
        for phi in [
            interp_i(&tri, |x, y| [x, y]),
            interp_i(&tri, |_, _| [0.0, 1.0]),
            interp_i(&tri, |_, _| [1.0, 0.0]),
        ] {
            let out = c.matvec(&phi.values);
            assert!(out.iter().all(|v| v.abs() <= 1e-13));
        }
    }

    #[test]
    fn symcurl_matches_rotated_strain_identity() {
        // For any linear field phi, the symmetric curl equals L' e(phi_perp) L
        // with L the quarter-turn rotation and e the symmetric gradient.
        let tri = two_cell_square();
        let c = assemble_symcurl(&tri).unwrap();
        let fields: [[f64; 6]; 3] = [
            // phi = (a0 + a1 x + a2 y, b0 + b1 x + b2 y)
            [0.3, 1.2, -0.7, -0.1, 0.4, 0.9],
            [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, -2.0, 3.0, -4.0, 5.0, -6.0],
        ];
        for coef in fields {
            let [a0, a1, a2, b0, b1, b2] = coef;
            let phi = interp_i(&tri, |x, y| [a0 + a1 * x + a2 * y, b0 + b1 * x + b2 * y]);
            let out = c.matvec(&phi.values);
            // Jacobian of phi_perp = (-phi2, phi1): rows grad(-phi2), grad(phi1).
            let jp = [[-b1, -b2], [a1, a2]];
            let eps = SymTensor2::new(jp[0][0], 0.5 * (jp[0][1] + jp[1][0]), jp[1][1]);
            // L' eps L with L = [[0,-1],[1,0]] maps (xx, xy, yy) -> (yy, -xy, xx).
            let expected = SymTensor2::new(eps.yy, -eps.xy, eps.xx);
            for (e, edge) in tri.edges.iter().enumerate() {
                assert_relative_eq!(out[e], expected.nn(edge.normal), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn p1_load_on_interior_patch() {
        // f = 1: the load at an interior vertex is patch_area / 3.
        let tri = two_cell_square();
        assert!(load_vector(&tri, |_, _| 1.0).is_empty());

        let tri = nine_vertex_square();
        let load = load_vector(&tri, |_, _| 1.0);
        assert_eq!(load.len(), 1);
        let v = tri.interior_vertices[0];
        let patch_area: f64 = (0..tri.num_cells())
            .filter(|&c| tri.cells[c].contains(&v))
            .map(|c| tri.areas[c])
            .sum();
        assert_relative_eq!(load[0], patch_area / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn p1_mass_row_sums() {
        // For an interior vertex whose neighbours are all interior, the mass
        // row sum is the hat integral, patch_area / 3.
        let tri = refine_uniform(&refine_uniform(&initial_mesh(Domain::Square)).0).0;
        let mass = assemble_p1_mass(&tri);
        let stiff = assemble_p1_stiffness(&tri);
        assert!(stiff.symmetry_defect() < 1e-14);
        let mut checked = 0;
        for (row, &v) in tri.interior_vertices.iter().enumerate() {
            let all_interior = tri
                .edges
                .iter()
                .filter(|e| e.endpoints.0 == v || e.endpoints.1 == v)
                .all(|e| {
                    let o = if e.endpoints.0 == v {
                        e.endpoints.1
                    } else {
                        e.endpoints.0
                    };
                    tri.interior_index[o].is_some()
                });
            if !all_interior {
                continue;
            }
            let patch_area: f64 = (0..tri.num_cells())
                .filter(|&c| tri.cells[c].contains(&v))
                .map(|c| tri.areas[c])
                .sum();
            let sum: f64 = mass.row(row).map(|(_, x)| x).sum();
            assert_relative_eq!(sum, patch_area / 3.0, max_relative = 1e-12);
            checked += 1;
            if checked > 20 {
                break;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn p1_stiffness_is_spd() {
        let tri = refine_uniform(&nine_vertex_square()).0;
        let stiff = assemble_p1_stiffness(&tri);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x: Vec<f64> = (0..tri.num_interior_vertices())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            assert!(crate::sparse::dot(&x, &stiff.matvec(&x)) > 0.0);
        }
    }

    #[test]
    fn interp_pi_identity_tensor() {
        let tri = nine_vertex_square();
        let sigma = interp_pi(&tri, |_, _| SymTensor2::identity());
        for v in &sigma.values {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn interp_pi_reproduces_stress_space() {
        // Edge means of the one-sided reconstructions return the coefficients.
        let tri = nine_vertex_square();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = StressCoeffs::from_values(
            &tri,
            (0..tri.num_edges())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        );
        for (e, edge) in tri.edges.iter().enumerate() {
            for cell in [Some(edge.cells.0), edge.cells.1].into_iter().flatten() {
                let t = stress_on_cell(&tri, &sigma, cell).unwrap();
                assert_relative_eq!(t.nn(edge.normal), sigma.values[e], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn interp_i_point_values() {
        let tri = nine_vertex_square();
        let phi = interp_i(&tri, |x, _| [x * x, 0.0]);
        let v = tri
            .vertices
            .iter()
            .position(|p| (p.x - 0.5).abs() < 1e-14 && p.y.abs() < 1e-14)
            .expect("midpoint vertex exists");
        assert_relative_eq!(phi.values[2 * v], 0.25, epsilon = 1e-15);
        assert_eq!(phi.values[2 * v + 1], 0.0);

        // Linear fields are reproduced exactly at the vertices by definition;
        // check a couple of components.
        let lin = interp_i(&tri, |x, y| [1.0 + 2.0 * x - y, x + y]);
        for (v, p) in tri.vertices.iter().enumerate() {
            assert_relative_eq!(lin.values[2 * v], 1.0 + 2.0 * p.x - p.y, epsilon = 1e-15);
            assert_relative_eq!(lin.values[2 * v + 1], p.x + p.y, epsilon = 1e-15);
        }
    }

    /// Load of a P1 coefficient field, via the same quadrature as `load_vector`.
    fn load_of_p1(tri: &Triangulation, coeffs: &[f64]) -> Vec<f64> {
        let mut load = vec![0.0; tri.num_interior_vertices()];
        for cell in 0..tri.num_cells() {
            let area = tri.areas[cell];
            let vs = tri.cells[cell];
            for (bary, w) in TRI_DEGREE4 {
                let val: f64 = (0..3)
                    .map(|i| {
                        tri.interior_index[vs[i]]
                            .map(|k| coeffs[k] * bary[i])
                            .unwrap_or(0.0)
                    })
                    .sum();
                for i in 0..3 {
                    if let Some(row) = tri.interior_index[vs[i]] {
                        load[row] += w * area * val * bary[i];
                    }
                }
            }
        }
        load
    }

    #[test]
    fn project_q_reproduces_and_is_orthogonal() {
        let tri = refine_uniform(&nine_vertex_square()).0;
        let disc = Discretization::assemble(&tri, 0.3).unwrap();

        // A field already in P_h projects to itself: solve mass q = load(p1).
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coeffs: Vec<f64> = (0..tri.num_interior_vertices())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let b = load_of_p1(&tri, &coeffs);
        let mut q = vec![0.0; b.len()];
        crate::sparse::cg(
            |x, y| disc.p1_mass.matvec_into(x, y),
            &b,
            &mut q,
            1e-13,
            10_000,
        )
        .unwrap();
        for (qi, ci) in q.iter().zip(&coeffs) {
            assert_relative_eq!(*qi, *ci, epsilon = 1e-12);
        }

        // Orthogonality of the projection of a smooth function:
        // load(v) - mass * Q v = 0.
        let q = disc.project_q(&tri, |x, y| x * x + y).unwrap();
        let resid: Vec<f64> = load_vector(&tri, |x, y| x * x + y)
            .iter()
            .zip(disc.p1_mass.matvec(&q.values))
            .map(|(a, b)| a - b)
            .collect();
        assert!(resid.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn divdiv_annihilates_symcurl_range() {
        let tri = refine_uniform(&nine_vertex_square()).0;
        let disc = Discretization::assemble(&tri, 0.3).unwrap();
        let phi = interp_i(&tri, |x, y| [x * y, x - y * y]);
        let sigma = StressCoeffs::from_values(&tri, disc.symcurl.matvec(&phi.values));
        let out = disc.divdiv_apply(&tri, &sigma).unwrap();
        assert!(out.values.iter().all(|v| v.abs() <= 1e-12));

        let tri2 = two_cell_square();
        let disc2 = Discretization::assemble(&tri2, 0.3).unwrap();
        let out2 = disc2
            .divdiv_apply(&tri2, &StressCoeffs::zeros(&tri2))
            .unwrap();
        assert!(out2.values.is_empty());
    }

    #[test]
    fn divdiv_surjectivity_witness() {
        // Constructive preimage of p = Q_h(1): solve the Poisson problem
        // with load -int p v, take edge means of w I; its discrete double
        // divergence returns p.
        let tri = nine_vertex_square();
        let disc = Discretization::assemble(&tri, 0.3).unwrap();
        let p = disc.project_q(&tri, |_, _| 1.0).unwrap();

        let rhs: Vec<f64> = disc.p1_mass.matvec(&p.values).iter().map(|v| -v).collect();
        let mut w = vec![0.0; rhs.len()];
        crate::sparse::cg(
            |x, y| disc.p1_stiffness.matvec_into(x, y),
            &rhs,
            &mut w,
            1e-13,
            10_000,
        )
        .unwrap();

        // sigma_I coefficient on an edge = mean of w there = average of
        // endpoint values (w = 0 at boundary vertices).
        let wfull: Vec<f64> = (0..tri.num_vertices())
            .map(|v| tri.interior_index[v].map(|k| w[k]).unwrap_or(0.0))
            .collect();
        let sigma = StressCoeffs::from_values(
            &tri,
            tri.edges
                .iter()
                .map(|e| 0.5 * (wfull[e.endpoints.0] + wfull[e.endpoints.1]))
                .collect(),
        );
        let dd = disc.divdiv_apply(&tri, &sigma).unwrap();
        for (got, want) in dd.values.iter().zip(&p.values) {
            assert_relative_eq!(*got, *want, epsilon = 1e-10);
        }
    }
}
