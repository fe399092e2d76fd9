//! Quadrature rules used by assembly, interpolation, and error norms.

use crate::mesh::{CellId, Point2, Triangulation};

/// Gauss-Legendre nodes on [-1, 1], exact for polynomials of degree 3.
pub const GAUSS2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];

/// Gauss-Legendre nodes on [-1, 1], exact for polynomials of degree 7.
pub const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Six-point symmetric triangle rule, exact for total degree 4.
/// Barycentric coordinates with weights summing to one.
pub const TRI_DEGREE4: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.816_847_572_980_459;
    const B1: f64 = 0.091_576_213_509_771;
    const W1: f64 = 0.109_951_743_655_322;
    const A2: f64 = 0.108_103_018_168_07;
    const B2: f64 = 0.445_948_490_915_965;
    const W2: f64 = 0.223_381_589_678_011;
    [
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Integrates `f` over cell `c`; exact for total degree 4.
pub fn integrate_cell(tri: &Triangulation, c: CellId, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
    let p = tri.cell_points(c);
    let mut acc = 0.0;
    for (bary, w) in TRI_DEGREE4 {
        let x = bary[0] * p[0].x + bary[1] * p[1].x + bary[2] * p[2].x;
        let y = bary[0] * p[0].y + bary[1] * p[1].y + bary[2] * p[2].y;
        acc += w * f(x, y);
    }
    acc * tri.areas[c]
}

/// Mean of `f` along the segment from `a` to `b` with an n-point Gauss rule.
pub fn segment_mean<const N: usize>(
    rule: [(f64, f64); N],
    a: Point2,
    b: Point2,
    mut f: impl FnMut(f64, f64) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for (t, w) in rule {
        let s = 0.5 * (t + 1.0);
        let x = a.x + s * (b.x - a.x);
        let y = a.y + s * (b.y - a.y);
        acc += 0.5 * w * f(x, y);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmesh::reference_triangle;
    use approx::assert_relative_eq;

    /// Analytic integral of x^a y^b over the reference triangle.
    fn monomial_integral(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn triangle_rule_is_degree4_exact() {
        let tri = reference_triangle();
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                let got = integrate_cell(&tri, 0, |x, y| x.powi(a as i32) * y.powi(b as i32));
                assert_relative_eq!(got, monomial_integral(a, b), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn gauss_rules_are_exact() {
        // segment_mean over [0,1] of x^k equals 1/(k+1).
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(1.0, 0.0);
        for k in 0..=3 {
            let got = segment_mean(GAUSS2, a, b, |x, _| x.powi(k));
            assert_relative_eq!(got, 1.0 / (k as f64 + 1.0), max_relative = 1e-14);
        }
        for k in 0..=7 {
            let got = segment_mean(GAUSS4, a, b, |x, _| x.powi(k));
            assert_relative_eq!(got, 1.0 / (k as f64 + 1.0), max_relative = 1e-14);
        }
    }
}
