//! End-to-end solves: load transfer into the momentum equation, multigrid
//! for the stress, deflection recovery, manufactured solutions, and error
//! norms.
//!
//! The mixed system couples the stress mass form with the constraint form
//! `b`. Rather than iterating on the indefinite block system, the load is
//! moved into the momentum equation: a discrete Poisson solve produces
//! `w_h`, the edge means of `w_h I` give a particular stress whose
//! constraint image matches the load, and the remaining homogeneous problem
//! is solved by multigrid inside `ker B`. The deflection is recovered
//! afterwards from a second Poisson solve.

use crate::error::Result;
use crate::hhj::{
    cell_tensor_from_edge_values, load_vector, ScalarField, StressCoeffs, SymTensor2,
};
use crate::mesh::Triangulation;
use crate::multigrid::{mg_solve, Hierarchy, Level, MgOptions};
use crate::quadrature::TRI_DEGREE4;
use crate::sparse::cg;

/// The clamped-plate manufactured solution on the unit square:
/// `u = (x^2 - x)^2 (y^2 - y)^2`, together with the matching load
/// `f = Delta^2 u` and moment tensor `sigma = -[(1-nu) H + nu tr(H) I]`
/// for the Hessian `H` of `u`.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedCase {
    pub nu: f64,
}

fn quartic(x: f64) -> [f64; 5] {
    // (x^2 - x)^2 and its first four derivatives.
    let g = (x * x - x) * (x * x - x);
    let g1 = 4.0 * x * x * x - 6.0 * x * x + 2.0 * x;
    let g2 = 12.0 * x * x - 12.0 * x + 2.0;
    let g3 = 24.0 * x - 12.0;
    let g4 = 24.0;
    [g, g1, g2, g3, g4]
}

impl ManufacturedCase {
    pub fn u(&self, x: f64, y: f64) -> f64 {
        quartic(x)[0] * quartic(y)[0]
    }

    pub fn grad_u(&self, x: f64, y: f64) -> [f64; 2] {
        let gx = quartic(x);
        let gy = quartic(y);
        [gx[1] * gy[0], gx[0] * gy[1]]
    }

    pub fn hessian_u(&self, x: f64, y: f64) -> SymTensor2 {
        let gx = quartic(x);
        let gy = quartic(y);
        SymTensor2::new(gx[2] * gy[0], gx[1] * gy[1], gx[0] * gy[2])
    }

    /// Biharmonic load `f = u_xxxx + 2 u_xxyy + u_yyyy`.
    pub fn f(&self, x: f64, y: f64) -> f64 {
        let gx = quartic(x);
        let gy = quartic(y);
        gx[4] * gy[0] + 2.0 * gx[2] * gy[2] + gx[0] * gy[4]
    }

    /// Exact moment tensor `-[(1-nu) H + nu tr(H) I]`.
    pub fn sigma_exact(&self, x: f64, y: f64) -> SymTensor2 {
        let h = self.hessian_u(x, y);
        let tr = self.nu * h.trace();
        SymTensor2::new(
            -((1.0 - self.nu) * h.xx + tr),
            -(1.0 - self.nu) * h.xy,
            -((1.0 - self.nu) * h.yy + tr),
        )
    }
}

pub fn manufactured_square_case(nu: f64) -> ManufacturedCase {
    ManufacturedCase { nu }
}

/// Moves the load into the momentum equation.
///
/// Solves the P1 Poisson problem `int grad(w) . grad(v) = int f v`, builds
/// the particular stress as the edge means of `w I`, and returns it with the
/// multigrid right-hand side `r = -M sigma_offset`. The full stress is the
/// multigrid solution plus the returned offset.
pub fn source_transfer(
    level: &Level,
    f: impl FnMut(f64, f64) -> f64,
) -> Result<(StressCoeffs, Vec<f64>)> {
    let tri = &level.tri;
    let load = load_vector(tri, f);
    let mut w = vec![0.0; load.len()];
    cg(
        |x, y| level.ops.p1_stiffness.matvec_into(x, y),
        &load,
        &mut w,
        1e-12,
        10 * load.len() + 1000,
    )?;
    let w_full: Vec<f64> = (0..tri.num_vertices())
        .map(|v| tri.interior_index[v].map(|k| w[k]).unwrap_or(0.0))
        .collect();
    let offset: Vec<f64> = tri
        .edges
        .iter()
        .map(|e| 0.5 * (w_full[e.endpoints.0] + w_full[e.endpoints.1]))
        .collect();
    let r: Vec<f64> = level
        .ops
        .mass
        .matvec(&offset)
        .iter()
        .map(|v| -v)
        .collect();
    Ok((StressCoeffs::from_values(tri, offset), r))
}

/// Recovers the deflection from a solved stress: the load of the Poisson
/// problem at an interior hat `v` is `a(sigma, Pi(v I))`, and `Pi(v I)` has
/// coefficient 1/2 on the edges meeting the vertex.
pub fn recover_deflection(level: &Level, sigma_h: &StressCoeffs) -> Result<ScalarField> {
    let tri = &level.tri;
    assert_eq!(sigma_h.level_tag, tri.level_tag);
    let ms = level.ops.mass.matvec(&sigma_h.values);
    let mut rhs = vec![0.0; tri.num_interior_vertices()];
    for (e, edge) in tri.edges.iter().enumerate() {
        for v in [edge.endpoints.0, edge.endpoints.1] {
            if let Some(row) = tri.interior_index[v] {
                rhs[row] += 0.5 * ms[e];
            }
        }
    }
    let mut u = vec![0.0; rhs.len()];
    cg(
        |x, y| level.ops.p1_stiffness.matvec_into(x, y),
        &rhs,
        &mut u,
        1e-12,
        10 * rhs.len() + 1000,
    )?;
    Ok(ScalarField {
        level_tag: tri.level_tag,
        values: u,
    })
}

/// L2 distance between the piecewise constant stress and a smooth field,
/// by the degree-4 rule.
pub fn stress_l2_error(
    tri: &Triangulation,
    sigma: &StressCoeffs,
    mut exact: impl FnMut(f64, f64) -> SymTensor2,
) -> f64 {
    let mut acc = 0.0;
    for cell in 0..tri.num_cells() {
        let ce = &tri.cell_edges[cell];
        let tau = cell_tensor_from_edge_values(
            tri,
            cell,
            [
                sigma.values[ce[0].edge],
                sigma.values[ce[1].edge],
                sigma.values[ce[2].edge],
            ],
        )
        .expect("nondegenerate cell");
        let p = tri.cell_points(cell);
        for (bary, w) in TRI_DEGREE4 {
            let x = bary[0] * p[0].x + bary[1] * p[1].x + bary[2] * p[2].x;
            let y = bary[0] * p[0].y + bary[1] * p[1].y + bary[2] * p[2].y;
            let d = exact(x, y) - tau;
            acc += w * tri.areas[cell] * d.ddot(&d);
        }
    }
    acc.sqrt()
}

/// Full H1 distance between the P1 deflection and a smooth field.
pub fn deflection_h1_error(
    tri: &Triangulation,
    u: &ScalarField,
    mut exact: impl FnMut(f64, f64) -> f64,
    mut exact_grad: impl FnMut(f64, f64) -> [f64; 2],
) -> f64 {
    let mut acc = 0.0;
    for cell in 0..tri.num_cells() {
        let vs = tri.cells[cell];
        let coeffs: [f64; 3] = std::array::from_fn(|i| {
            tri.interior_index[vs[i]]
                .map(|k| u.values[k])
                .unwrap_or(0.0)
        });
        let g = tri.barycentric_gradients(cell);
        let grad_h = [
            coeffs[0] * g[0][0] + coeffs[1] * g[1][0] + coeffs[2] * g[2][0],
            coeffs[0] * g[0][1] + coeffs[1] * g[1][1] + coeffs[2] * g[2][1],
        ];
        let p = tri.cell_points(cell);
        for (bary, w) in TRI_DEGREE4 {
            let x = bary[0] * p[0].x + bary[1] * p[1].x + bary[2] * p[2].x;
            let y = bary[0] * p[0].y + bary[1] * p[1].y + bary[2] * p[2].y;
            let uh = coeffs[0] * bary[0] + coeffs[1] * bary[1] + coeffs[2] * bary[2];
            let du = exact(x, y) - uh;
            let dg = exact_grad(x, y);
            let dgx = dg[0] - grad_h[0];
            let dgy = dg[1] - grad_h[1];
            acc += w * tri.areas[cell] * (du * du + dgx * dgx + dgy * dgy);
        }
    }
    acc.sqrt()
}

/// Stress L2 and deflection H1 errors against the manufactured case.
pub fn compute_errors(
    tri: &Triangulation,
    sigma: &StressCoeffs,
    u: &ScalarField,
    case: &ManufacturedCase,
) -> (f64, f64) {
    (
        stress_l2_error(tri, sigma, |x, y| case.sigma_exact(x, y)),
        deflection_h1_error(tri, u, |x, y| case.u(x, y), |x, y| case.grad_u(x, y)),
    )
}

/// One row of the iteration-count experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveRow {
    pub level: u32,
    pub size: usize,
    pub iters_11: usize,
    pub iters_22: usize,
}

/// Iteration counts of the V(1,1) and V(2,2) cycles for each level in
/// `first_level..=J`, with the stopping tolerance `tol`.
pub fn solve_table(
    hier: &Hierarchy,
    mut f: impl FnMut(f64, f64) -> f64,
    first_level: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<SolveRow>> {
    let mut rows = Vec::new();
    for k in first_level..=hier.num_levels() {
        let level = &hier.levels[k - 1];
        let (_, r) = source_transfer(level, &mut f)?;
        let run = |m: usize| -> Result<usize> {
            Ok(mg_solve(
                hier,
                k,
                &r,
                &MgOptions {
                    m1: m,
                    m2: m,
                    tol,
                    max_iter,
                },
            )?
            .iterations)
        };
        rows.push(SolveRow {
            level: level.tri.level_tag,
            size: level.tri.num_vertices(),
            iters_11: run(1)?,
            iters_22: run(2)?,
        });
    }
    Ok(rows)
}

/// One row of the convergence experiment.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub level: u32,
    pub h: f64,
    pub stress_l2_err: f64,
    pub defl_h1_err: f64,
    /// Observed stress order against the previous row.
    pub order: Option<f64>,
}

/// Solves the manufactured problem on every level and reports errors and
/// observed orders.
pub fn convergence_table(
    hier: &Hierarchy,
    case: &ManufacturedCase,
    opts: &MgOptions,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for k in 1..=hier.num_levels() {
        let level = &hier.levels[k - 1];
        let (offset, r) = source_transfer(level, |x, y| case.f(x, y))?;
        let report = mg_solve(hier, k, &r, opts)?;
        let sigma = StressCoeffs::from_values(
            &level.tri,
            report
                .sigma
                .values
                .iter()
                .zip(&offset.values)
                .map(|(a, b)| a + b)
                .collect(),
        );
        let u = recover_deflection(level, &sigma)?;
        let (se, de) = compute_errors(&level.tri, &sigma, &u, case);
        let order = rows
            .last()
            .map(|prev: &ConvergenceRow| (prev.stress_l2_err / se).log2());
        rows.push(ConvergenceRow {
            level: level.tri.level_tag,
            h: level.tri.max_edge_length(),
            stress_l2_err: se,
            defl_h1_err: de,
            order,
        });
    }
    Ok(rows)
}
