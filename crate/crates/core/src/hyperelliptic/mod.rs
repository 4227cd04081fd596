//! The base curve y^2 = P_{2g+1}(x): branch points, sheet continuation,
//! path planning in the x-plane and incomplete abelian integrals.

mod path;
pub(crate) mod quadrature;

pub use path::{
    continue_y, default_basepoint, plan_curve_path, plan_path, plan_path_with_clearance, XPath,
};
pub(crate) use path::continue_y_hop;
pub use quadrature::abelian_integral;

use crate::error::{Error, Result};
use crate::polyalg::{companion_roots, ComplexPoly};
use num_complex::Complex64;

/// Relative tolerance for accepting a point as lying on the curve.
pub const ON_CURVE_TOL: f64 = 1e-9;

/// Relative pairwise separation below which branch points are considered
/// coincident and the curve rejected as non-squarefree.
pub const SQUAREFREE_TOL: f64 = 1e-8;

/// A smooth odd-degree hyperelliptic curve y^2 = P_{2g+1}(x), g >= 2.
#[derive(Debug, Clone)]
pub struct HyperellipticCurve {
    p: ComplexPoly,
    genus: usize,
    branch: Vec<Complex64>,
}

impl HyperellipticCurve {
    pub fn new(p: ComplexPoly) -> Result<Self> {
        if p.is_zero() || p.degree() < 5 || p.degree() % 2 == 0 {
            return Err(Error::InvalidCurve(format!(
                "degree {} is not an odd number >= 5",
                p.degree()
            )));
        }
        let genus = (p.degree() - 1) / 2;
        let branch = companion_roots(&p)?;
        let scale = 1.0 + branch.iter().map(|b| b.norm()).fold(0.0, f64::max);
        for i in 0..branch.len() {
            for j in (i + 1)..branch.len() {
                if (branch[i] - branch[j]).norm() <= SQUAREFREE_TOL * scale {
                    return Err(Error::InvalidCurve(format!(
                        "polynomial is not squarefree: roots {} and {} nearly coincide",
                        branch[i], branch[j]
                    )));
                }
            }
        }
        Ok(HyperellipticCurve { p, genus, branch })
    }

    pub fn polynomial(&self) -> &ComplexPoly {
        &self.p
    }

    pub fn genus(&self) -> usize {
        self.genus
    }

    /// The 2g+1 zeros of P, in the deterministic order of the root solver.
    pub fn branch_points(&self) -> &[Complex64] {
        &self.branch
    }

    pub fn eval_p(&self, x: Complex64) -> Complex64 {
        self.p.eval(x)
    }

    /// Diameter of the branch-point set.
    pub fn branch_diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.branch.len() {
            for j in (i + 1)..self.branch.len() {
                d = d.max((self.branch[i] - self.branch[j]).norm());
            }
        }
        d
    }

    /// The two lifts (x, ±sqrt(P(x))), principal square root first.
    pub fn lift_x(&self, x: Complex64) -> Result<[CurvePoint; 2]> {
        for &b in &self.branch {
            if (x - b).norm() <= 1e-10 {
                return Err(Error::AtBranchPoint(x));
            }
        }
        let y = self.eval_p(x).sqrt();
        Ok([CurvePoint { x, y }, CurvePoint { x, y: -y }])
    }

    /// Validates |y^2 - P(x)| <= tol * (1 + |P(x)|).
    pub fn point(&self, x: Complex64, y: Complex64) -> Result<CurvePoint> {
        let px = self.eval_p(x);
        let defect = (y * y - px).norm();
        if defect > ON_CURVE_TOL * (1.0 + px.norm()) {
            return Err(Error::PointNotOnCurve { x, y, defect });
        }
        Ok(CurvePoint { x, y })
    }
}

/// A point (x, y) on the base curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: Complex64,
    pub y: Complex64,
}
