//! Minimal bivariate polynomials for building certifier test fields.

/// Polynomial in (x, y) stored as a sum of monomial terms.
#[derive(Clone, Debug, Default)]
pub struct Poly2 {
    /// (coefficient, x exponent, y exponent)
    terms: Vec<(f64, u32, u32)>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(c: f64, i: u32, j: u32) -> Self {
        if c == 0.0 {
            Self::zero()
        } else {
            Self {
                terms: vec![(c, i, j)],
            }
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(c, i, j)| c * x.powi(i as i32) * y.powi(j as i32))
            .sum()
    }

    pub fn dx(&self) -> Poly2 {
        Poly2 {
            terms: self
                .terms
                .iter()
                .filter(|&&(_, i, _)| i > 0)
                .map(|&(c, i, j)| (c * i as f64, i - 1, j))
                .collect(),
        }
    }

    pub fn dy(&self) -> Poly2 {
        Poly2 {
            terms: self
                .terms
                .iter()
                .filter(|&&(_, _, j)| j > 0)
                .map(|&(c, i, j)| (c * j as f64, i, j - 1))
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Poly2 {
        Poly2 {
            terms: self.terms.iter().map(|&(c, i, j)| (c * s, i, j)).collect(),
        }
    }

    pub fn plus(&self, other: &Poly2) -> Poly2 {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Poly2 { terms }
    }
}
