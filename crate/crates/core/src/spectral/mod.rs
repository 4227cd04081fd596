//! Spectral curves R(lambda, x, y; H) = 0 for the classical root-system
//! families over a hyperelliptic base, with evaluation, partial derivatives
//! and lambda-fiber solving.

mod continuation;

pub use continuation::{continue_lambda, x_discriminant_points, LambdaState};

use crate::error::{Error, Result};
use crate::hyperelliptic::{CurvePoint, HyperellipticCurve};
use crate::polyalg::{companion_roots, roots_in_radicals, ComplexPoly};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
    C,
    D,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Family::A => "A",
            Family::B => "B",
            Family::C => "C",
            Family::D => "D",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Family::A),
            "B" | "b" => Ok(Family::B),
            "C" | "c" => Ok(Family::C),
            "D" | "d" => Ok(Family::D),
            other => Err(Error::UnsupportedFamily(other.to_string())),
        }
    }
}

/// A classical simple Lie algebra identified by family and rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RootSystemSpec {
    pub family: Family,
    pub rank: usize,
}

impl RootSystemSpec {
    pub fn new(family: Family, rank: usize) -> Result<Self> {
        let min_rank = match family {
            Family::D => 2,
            _ => 1,
        };
        if rank < min_rank {
            return Err(Error::UnsupportedFamily(format!(
                "{family}{rank}: rank must be at least {min_rank}"
            )));
        }
        Ok(RootSystemSpec { family, rank })
    }

    /// Dimension of the Lie algebra.
    pub fn dim(&self) -> usize {
        let n = self.rank;
        match self.family {
            Family::A => n * (n + 2),
            Family::B | Family::C => n * (2 * n + 1),
            Family::D => n * (2 * n - 1),
        }
    }

    /// Dimension of the standard representation: the lambda-degree of R.
    pub fn standard_rep_dim(&self) -> usize {
        let n = self.rank;
        match self.family {
            Family::A => n + 1,
            Family::B => 2 * n + 1,
            Family::C | Family::D => 2 * n,
        }
    }
}

/// Degree of one fundamental invariant; for the D family the degree-n
/// invariant is the Pfaffian, which enters the spectral polynomial squared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvariantDegree {
    pub degree: usize,
    pub pfaffian: bool,
}

/// Degrees of the fundamental invariants, Pfaffian flagged and listed last.
pub fn invariant_degrees(roots: &RootSystemSpec) -> Vec<InvariantDegree> {
    let n = roots.rank;
    let plain = |degree| InvariantDegree {
        degree,
        pfaffian: false,
    };
    match roots.family {
        Family::A => (2..=n + 1).map(plain).collect(),
        Family::B | Family::C => (1..=n).map(|i| plain(2 * i)).collect(),
        Family::D => {
            let mut v: Vec<InvariantDegree> = (1..n).map(|i| plain(2 * i)).collect();
            v.push(InvariantDegree {
                degree: n,
                pfaffian: true,
            });
            v
        }
    }
}

/// Number of basis functions 1, x, ..., x^{d(g-1)} for an invariant of
/// degree d.
pub fn h0_len(degree: usize, genus: usize) -> usize {
    degree * (genus - 1) + 1
}

/// Number of basis functions y, yx, ..., yx^{(d-1)(g-1)-2}; empty when the
/// upper bound is negative, as happens for d = 2 on a genus-2 curve.
pub fn h1_len(degree: usize, genus: usize) -> usize {
    ((degree - 1) * (genus - 1)).saturating_sub(1)
}

/// Dimension of the space of spectral invariants: dim(g) * (g - 1), which
/// equals the total coefficient count of the expansion.
pub fn hamiltonian_count(roots: &RootSystemSpec, genus: usize) -> usize {
    roots.dim() * (genus - 1)
}

/// Coefficients of one fundamental invariant in the function basis.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantBlock {
    pub degree: usize,
    pub pfaffian: bool,
    pub h0: Vec<Complex64>,
    pub h1: Vec<Complex64>,
}

impl InvariantBlock {
    /// r_i(x, y) = sum_k h0[k] x^k + sum_s h1[s] y x^s.
    pub fn eval(&self, x: Complex64, y: Complex64) -> Complex64 {
        let mut acc = ZERO;
        for &c in self.h0.iter().rev() {
            acc = acc * x + c;
        }
        let mut acc1 = ZERO;
        for &c in self.h1.iter().rev() {
            acc1 = acc1 * x + c;
        }
        acc + y * acc1
    }

    /// d r_i / dx with y held fixed.
    fn eval_dx(&self, x: Complex64, y: Complex64) -> Complex64 {
        let mut acc = ZERO;
        for (k, &c) in self.h0.iter().enumerate().skip(1) {
            acc += c * k as f64 * x.powu(k as u32 - 1);
        }
        let mut acc1 = ZERO;
        for (s, &c) in self.h1.iter().enumerate().skip(1) {
            acc1 += c * s as f64 * x.powu(s as u32 - 1);
        }
        acc + y * acc1
    }

    /// Coefficient of y in r_i, as a function of x.
    fn eval_dy(&self, x: Complex64) -> Complex64 {
        let mut acc = ZERO;
        for &c in self.h1.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.h0.len() + self.h1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn negate(&mut self) {
        for c in self.h0.iter_mut().chain(self.h1.iter_mut()) {
            *c = -*c;
        }
    }

    fn max_magnitude(&self) -> f64 {
        self.h0
            .iter()
            .chain(self.h1.iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// The action variables: coefficients of the invariant expansion, one block
/// per fundamental invariant, in the order of `invariant_degrees`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianVector {
    pub blocks: Vec<InvariantBlock>,
}

impl HamiltonianVector {
    pub fn zeros(roots: &RootSystemSpec, genus: usize) -> Self {
        let blocks = invariant_degrees(roots)
            .into_iter()
            .map(|d| InvariantBlock {
                degree: d.degree,
                pfaffian: d.pfaffian,
                h0: vec![ZERO; h0_len(d.degree, genus)],
                h1: vec![ZERO; h1_len(d.degree, genus)],
            })
            .collect();
        HamiltonianVector { blocks }
    }

    /// Validates block shapes against the family and genus.
    pub fn check_shape(&self, roots: &RootSystemSpec, genus: usize) -> Result<()> {
        let degrees = invariant_degrees(roots);
        if degrees.len() != self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} blocks for {}{}, found {}",
                degrees.len(),
                roots.family,
                roots.rank,
                self.blocks.len()
            )));
        }
        for (i, (d, b)) in degrees.iter().zip(self.blocks.iter()).enumerate() {
            if b.degree != d.degree || b.pfaffian != d.pfaffian {
                return Err(Error::ShapeMismatch(format!(
                    "block {i}: expected degree {} (pfaffian: {}), found degree {} (pfaffian: {})",
                    d.degree, d.pfaffian, b.degree, b.pfaffian
                )));
            }
            if b.h0.len() != h0_len(d.degree, genus) || b.h1.len() != h1_len(d.degree, genus) {
                return Err(Error::ShapeMismatch(format!(
                    "block {i} (degree {}): expected h0 x{}, h1 x{}, found h0 x{}, h1 x{}",
                    d.degree,
                    h0_len(d.degree, genus),
                    h1_len(d.degree, genus),
                    b.h0.len(),
                    b.h1.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All coefficients in block order, h0 before h1 within each block.
    pub fn flatten(&self) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(self.len());
        for b in &self.blocks {
            v.extend_from_slice(&b.h0);
            v.extend_from_slice(&b.h1);
        }
        v
    }

    /// Rebuilds a vector of the same shape from flattened coefficients.
    pub fn from_flatten(&self, flat: &[Complex64]) -> Result<Self> {
        if flat.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coefficients, found {}",
                self.len(),
                flat.len()
            )));
        }
        let mut out = self.clone();
        let mut k = 0;
        for b in out.blocks.iter_mut() {
            for c in b.h0.iter_mut().chain(b.h1.iter_mut()) {
                *c = flat[k];
                k += 1;
            }
        }
        Ok(out)
    }

    /// The so(4) flat layout (H1..H6): H1..H3 are the Pfaffian block and
    /// H4..H6 the degree-2 block, each over the basis 1, x, x^2.
    pub fn from_flat_so4(h: [Complex64; 6]) -> Self {
        HamiltonianVector {
            blocks: vec![
                InvariantBlock {
                    degree: 2,
                    pfaffian: false,
                    h0: vec![h[3], h[4], h[5]],
                    h1: Vec::new(),
                },
                InvariantBlock {
                    degree: 2,
                    pfaffian: true,
                    h0: vec![h[0], h[1], h[2]],
                    h1: Vec::new(),
                },
            ],
        }
    }

    pub fn to_flat_so4(&self) -> Result<[Complex64; 6]> {
        let spec = RootSystemSpec::new(Family::D, 2)?;
        self.check_shape(&spec, 2)?;
        let w = &self.blocks[0].h0;
        let v = &self.blocks[1].h0;
        Ok([v[0], v[1], v[2], w[0], w[1], w[2]])
    }

    /// The Pfaffian block enters the spectral polynomial squared, so H and
    /// the vector with that block negated define the same curve. The
    /// canonical representative makes the first nonzero Pfaffian coefficient
    /// have nonnegative real part, ties broken by nonnegative imaginary part.
    pub fn canonicalized(&self) -> Self {
        let mut out = self.clone();
        for b in out.blocks.iter_mut() {
            if !b.pfaffian {
                continue;
            }
            let scale = b.max_magnitude();
            if scale == 0.0 {
                continue;
            }
            let first = b
                .h0
                .iter()
                .chain(b.h1.iter())
                .find(|c| c.norm() > 1e-12 * scale);
            if let Some(&c) = first {
                let flip = if c.re.abs() <= 1e-12 * c.norm() {
                    c.im < 0.0
                } else {
                    c.re < 0.0
                };
                if flip {
                    b.negate();
                }
            }
        }
        out
    }

    pub fn max_magnitude(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_magnitude())
            .fold(0.0, f64::max)
    }
}

/// A point on the spectral cover: a lambda value over a base-curve point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub lambda: Complex64,
    pub at: CurvePoint,
}

/// The spectral curve for a root system over a hyperelliptic base, with the
/// Hamiltonian vector stored in canonical (Pfaffian-sign) form.
#[derive(Debug, Clone)]
pub struct SpectralCurveModel {
    roots: RootSystemSpec,
    base: HyperellipticCurve,
    h: HamiltonianVector,
    degenerate: bool,
}

/// Assembles the model, validating block shapes, canonicalizing the Pfaffian
/// sign and probing for an identically degenerate lambda-fiber.
pub fn build_model(
    roots: RootSystemSpec,
    base: HyperellipticCurve,
    h: HamiltonianVector,
) -> Result<SpectralCurveModel> {
    h.check_shape(&roots, base.genus())?;
    let h = h.canonicalized();
    let mut model = SpectralCurveModel {
        roots,
        base,
        h,
        degenerate: false,
    };
    model.degenerate = model.probe_degenerate();
    Ok(model)
}

impl SpectralCurveModel {
    /// Evaluator that bypasses canonicalization and the degeneracy probe.
    /// Newton iterations and finite-difference probes need R at freely
    /// varying H; a canonicalization sign flip mid-iteration would make the
    /// map discontinuous.
    pub(crate) fn unchecked(
        roots: RootSystemSpec,
        base: HyperellipticCurve,
        h: HamiltonianVector,
    ) -> Self {
        SpectralCurveModel {
            roots,
            base,
            h,
            degenerate: false,
        }
    }

    pub fn roots(&self) -> &RootSystemSpec {
        &self.roots
    }

    pub fn base(&self) -> &HyperellipticCurve {
        &self.base
    }

    pub fn hamiltonians(&self) -> &HamiltonianVector {
        &self.h
    }

    /// Same geometry, different Hamiltonian vector. Used by the
    /// finite-difference probes, which perturb H while keeping the base.
    pub fn with_hamiltonians(&self, h: HamiltonianVector) -> Result<SpectralCurveModel> {
        build_model(self.roots, self.base.clone(), h)
    }

    pub fn n_rep(&self) -> usize {
        self.roots.standard_rep_dim()
    }

    pub fn hamiltonian_count(&self) -> usize {
        hamiltonian_count(&self.roots, self.base.genus())
    }

    /// An identically degenerate fiber (for example a vanishing Pfaffian
    /// block in the D family) makes the angle-coordinate integrand singular
    /// everywhere; such models are flagged and rejected by those operations.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn probe_degenerate(&self) -> bool {
        if self.roots.family == Family::D {
            let pf = self.h.blocks.iter().find(|b| b.pfaffian).unwrap();
            let scale = self.h.max_magnitude();
            if pf.max_magnitude() <= 1e-14 * scale.max(1.0) {
                return true;
            }
        }
        // sample a few generic x values; degenerate means the fiber has a
        // repeated root everywhere
        let scale = 1.0 + self.base.branch_diameter();
        let mut all_collide = true;
        let mut samples = 0;
        for k in 0..12 {
            if samples >= 5 {
                break;
            }
            let x = Complex64::from_polar(
                0.37 * scale * (1.0 + 0.13 * k as f64),
                1.1 + 0.83 * k as f64,
            ) + Complex64::new(0.11, -0.07);
            let lifts = match self.base.lift_x(x) {
                Ok(l) => l,
                Err(_) => continue,
            };
            samples += 1;
            for pt in lifts {
                let fiber = match self.lambda_fiber(&pt) {
                    Ok(f) => f,
                    Err(_) => return true,
                };
                let fscale = 1.0 + fiber.iter().map(|r| r.norm()).fold(0.0, f64::max);
                let mut gap = f64::INFINITY;
                for i in 0..fiber.len() {
                    for j in (i + 1)..fiber.len() {
                        gap = gap.min((fiber[i] - fiber[j]).norm());
                    }
                }
                if gap > 1e-8 * fscale {
                    all_collide = false;
                }
            }
        }
        samples > 0 && all_collide
    }

    /// Values r_i(x, y) of the coefficient functions, in block order.
    pub fn r_values(&self, pt: &CurvePoint) -> Vec<Complex64> {
        self.h
            .blocks
            .iter()
            .map(|b| b.eval(pt.x, pt.y))
            .collect()
    }

    /// The spectral polynomial in lambda at a fixed base point, ascending
    /// coefficients of length n_rep + 1 (monic).
    pub fn lambda_poly(&self, pt: &CurvePoint) -> Vec<Complex64> {
        let n = self.n_rep();
        let mut coeffs = vec![ZERO; n + 1];
        coeffs[n] = Complex64::new(1.0, 0.0);
        for b in &self.h.blocks {
            let r = b.eval(pt.x, pt.y);
            if b.pfaffian {
                coeffs[0] += r * r;
            } else {
                coeffs[n - b.degree] += r;
            }
        }
        coeffs
    }

    /// R(lambda, x, y; H) by Horner in lambda.
    pub fn eval_r(&self, lambda: Complex64, pt: &CurvePoint) -> Complex64 {
        let coeffs = self.lambda_poly(pt);
        let mut acc = ZERO;
        for &c in coeffs.iter().rev() {
            acc = acc * lambda + c;
        }
        acc
    }

    /// Magnitude scale of the terms of R at the evaluation point; tolerances
    /// on |R| are measured against this.
    pub fn eval_scale(&self, lambda: Complex64, pt: &CurvePoint) -> f64 {
        let coeffs = self.lambda_poly(pt);
        let mut scale = 1.0;
        let mut pw = 1.0;
        for c in coeffs.iter() {
            scale += c.norm() * pw;
            pw *= lambda.norm();
        }
        scale
    }

    /// (dR/dlambda, dR/dH_j for every coefficient in flatten order).
    pub fn partials(&self, lambda: Complex64, pt: &CurvePoint) -> (Complex64, Vec<Complex64>) {
        let n = self.n_rep();
        let mut d_lambda = Complex64::new(n as f64, 0.0) * lambda.powu(n as u32 - 1);
        let mut d_h = Vec::with_capacity(self.h.len());
        for b in &self.h.blocks {
            if b.pfaffian {
                let r = b.eval(pt.x, pt.y);
                for k in 0..b.h0.len() {
                    d_h.push(2.0 * r * pt.x.powu(k as u32));
                }
                for s in 0..b.h1.len() {
                    d_h.push(2.0 * r * pt.y * pt.x.powu(s as u32));
                }
            } else {
                let pow = (n - b.degree) as u32;
                let lp = lambda.powu(pow);
                if pow > 0 {
                    let r = b.eval(pt.x, pt.y);
                    d_lambda += r * pow as f64 * lambda.powu(pow - 1);
                }
                for k in 0..b.h0.len() {
                    d_h.push(pt.x.powu(k as u32) * lp);
                }
                for s in 0..b.h1.len() {
                    d_h.push(pt.y * pt.x.powu(s as u32) * lp);
                }
            }
        }
        (d_lambda, d_h)
    }

    /// Total x-derivative of R along the curve (y varies with x through
    /// y' = P'(x) / 2y), at fixed lambda.
    pub fn partial_x_on_curve(&self, lambda: Complex64, pt: &CurvePoint) -> Complex64 {
        let n = self.n_rep();
        let dp = self.base.polynomial().derivative().eval(pt.x);
        let dy_dx = dp / (2.0 * pt.y);
        let mut acc = ZERO;
        for b in &self.h.blocks {
            let dr = b.eval_dx(pt.x, pt.y) + b.eval_dy(pt.x) * dy_dx;
            if b.pfaffian {
                acc += 2.0 * b.eval(pt.x, pt.y) * dr;
            } else {
                acc += dr * lambda.powu((n - b.degree) as u32);
            }
        }
        acc
    }

    /// All n_rep roots in lambda of R at the base point, lexicographically
    /// ordered. D2 uses the biquadratic shortcut (quadratic in lambda^2);
    /// other cases go through the companion-matrix oracle.
    pub fn lambda_fiber(&self, pt: &CurvePoint) -> Result<Vec<Complex64>> {
        let coeffs = self.lambda_poly(pt);
        let mut roots = if self.roots.family == Family::D && self.roots.rank == 2 {
            let mu_poly = ComplexPoly::new(vec![coeffs[0], coeffs[2], coeffs[4]]);
            let mus = roots_in_radicals(&mu_poly)?;
            let mut out = Vec::with_capacity(4);
            for mu in mus {
                let s = mu.sqrt();
                out.push(s);
                out.push(-s);
            }
            out
        } else {
            companion_roots(&ComplexPoly::new(coeffs))?
        };
        if roots.len() != self.n_rep() {
            return Err(Error::Numerical(format!(
                "fiber produced {} roots, expected {}",
                roots.len(),
                self.n_rep()
            )));
        }
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then_with(|| a.im.total_cmp(&b.im)));
        Ok(roots)
    }

    /// Attaches a lambda value to a base point, checking |R| against scale.
    pub fn spectral_point(&self, lambda: Complex64, pt: CurvePoint) -> Result<SpectralPoint> {
        let r = self.eval_r(lambda, &pt).norm();
        let scale = self.eval_scale(lambda, &pt);
        if r > 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "(lambda, x, y) = ({lambda}, {}, {}) is not on the spectral curve: |R| = {r:.3e}",
                pt.x, pt.y
            )));
        }
        Ok(SpectralPoint { lambda, at: pt })
    }

    /// The x-polynomial coefficient of each lambda power, available when no
    /// block carries y-terms (as for so(4) on a genus-2 curve). Index k gives
    /// the coefficient function of lambda^k.
    pub fn lambda_coefficient_polys(&self) -> Result<Vec<ComplexPoly>> {
        if self.h.blocks.iter().any(|b| !b.h1.is_empty()) {
            return Err(Error::Numerical(
                "coefficient functions involve y; no single-variable form exists".into(),
            ));
        }
        let n = self.n_rep();
        let mut polys = vec![ComplexPoly::zero(); n + 1];
        polys[n] = ComplexPoly::one();
        for b in &self.h.blocks {
            let r = ComplexPoly::new(b.h0.clone());
            if b.pfaffian {
                polys[0] = &polys[0] + &(&r * &r);
            } else {
                polys[n - b.degree] = &polys[n - b.degree] + &r;
            }
        }
        Ok(polys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperelliptic::HyperellipticCurve;
    use crate::polyalg::max_paired_distance;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn genus2_curve() -> HyperellipticCurve {
        HyperellipticCurve::new(ComplexPoly::from_real(&[-1.0, -1.0, 0.0, 0.0, 0.0, 1.0]))
            .unwrap()
    }

    fn d2() -> RootSystemSpec {
        RootSystemSpec::new(Family::D, 2).unwrap()
    }

    fn sample_h() -> [Complex64; 6] {
        [
            c(0.8, 0.1),
            c(-0.3, 0.4),
            c(0.5, -0.2),
            c(-0.7, 0.6),
            c(0.2, 0.3),
            c(0.9, -0.5),
        ]
    }

    #[test]
    fn d2_has_two_degree_two_invariants() {
        let ds = invariant_degrees(&d2());
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0], InvariantDegree { degree: 2, pfaffian: false });
        assert_eq!(ds[1], InvariantDegree { degree: 2, pfaffian: true });
    }

    #[test]
    fn d4_degrees() {
        let spec = RootSystemSpec::new(Family::D, 4).unwrap();
        let ds = invariant_degrees(&spec);
        let plain: Vec<usize> = ds.iter().filter(|d| !d.pfaffian).map(|d| d.degree).collect();
        assert_eq!(plain, vec![2, 4, 6]);
        assert_eq!(ds.last().unwrap(), &InvariantDegree { degree: 4, pfaffian: true });
    }

    #[test]
    fn a2_degrees_and_dimension() {
        let spec = RootSystemSpec::new(Family::A, 2).unwrap();
        let ds = invariant_degrees(&spec);
        let degrees: Vec<usize> = ds.iter().map(|d| d.degree).collect();
        assert_eq!(degrees, vec![2, 3]);
        let sum: usize = degrees.iter().map(|d| 2 * d - 1).sum();
        assert_eq!(sum, spec.dim());
        assert_eq!(spec.dim(), 8);
    }

    #[test]
    fn hamiltonian_counts() {
        assert_eq!(hamiltonian_count(&d2(), 2), 6);
        let d3 = RootSystemSpec::new(Family::D, 3).unwrap();
        assert_eq!(hamiltonian_count(&d3, 2), 15);
        assert_eq!(hamiltonian_count(&d2(), 3), 12);
    }

    #[test]
    fn term_counting_matches_dimension_law() {
        for family in [Family::A, Family::B, Family::C, Family::D] {
            let min_rank = if family == Family::D { 2 } else { 1 };
            for rank in min_rank..=5 {
                let spec = RootSystemSpec::new(family, rank).unwrap();
                for genus in 2..=4 {
                    let by_terms: usize = invariant_degrees(&spec)
                        .iter()
                        .map(|d| h0_len(d.degree, genus) + h1_len(d.degree, genus))
                        .sum();
                    assert_eq!(
                        by_terms,
                        hamiltonian_count(&spec, genus),
                        "{family}{rank} at genus {genus}"
                    );
                    let degree_sum: usize = invariant_degrees(&spec)
                        .iter()
                        .map(|d| 2 * d.degree - 1)
                        .sum();
                    assert_eq!(degree_sum, spec.dim(), "{family}{rank}");
                }
            }
        }
    }

    #[test]
    fn so4_block_shapes_have_no_y_terms() {
        let h = HamiltonianVector::zeros(&d2(), 2);
        assert_eq!(h.blocks.len(), 2);
        for b in &h.blocks {
            assert_eq!(b.h0.len(), 3);
            assert!(b.h1.is_empty());
        }
        assert_eq!(h.len(), 6);
    }

    #[test]
    fn d2_model_reproduces_the_explicit_quartic_equation() {
        let h = HamiltonianVector::from_flat_so4(sample_h());
        let model = build_model(d2(), genus2_curve(), h).unwrap();
        let [h1, h2, h3, h4, h5, h6] = sample_h();
        for k in 0..20 {
            let x = c(0.3 * k as f64 - 2.0, 0.17 * k as f64 - 1.3);
            let pt = match model.base().lift_x(x) {
                Ok([p, _]) => p,
                Err(_) => continue,
            };
            let lambda = c(0.4 * k as f64 - 3.1, 1.2 - 0.3 * k as f64);
            let r0 = h1 + x * h2 + x * x * h3;
            let r1 = h4 + x * h5 + x * x * h6;
            let expected = lambda.powu(4) + r1 * lambda.powu(2) + r0 * r0;
            let got = model.eval_r(lambda, &pt);
            assert!(
                (got - expected).norm() <= 1e-12 * (1.0 + expected.norm()),
                "mismatch at x = {x}"
            );
        }
    }

    #[test]
    fn zero_hamiltonians_give_pure_power_and_degenerate_flag() {
        let h = HamiltonianVector::zeros(&d2(), 2);
        let model = build_model(d2(), genus2_curve(), h).unwrap();
        assert!(model.is_degenerate());
        let pt = model.base().lift_x(c(0.4, 0.2)).unwrap()[0];
        assert_eq!(model.eval_r(ZERO, &pt), ZERO);
        let lam = c(1.3, -0.2);
        assert!((model.eval_r(lam, &pt) - lam.powu(4)).norm() < 1e-14);
    }

    #[test]
    fn constant_pfaffian_fiber_is_fourth_roots_of_minus_one() {
        let h = HamiltonianVector::from_flat_so4([
            c(1.0, 0.0),
            ZERO,
            ZERO,
            ZERO,
            ZERO,
            ZERO,
        ]);
        let model = build_model(d2(), genus2_curve(), h).unwrap();
        assert!(!model.is_degenerate());
        let pt = model.base().lift_x(c(0.4, 0.2)).unwrap()[0];
        // R = lambda^4 + 1 at every point
        assert!((model.eval_r(c(1.0, 0.0), &pt) - c(2.0, 0.0)).norm() < 1e-14);
        let fiber = model.lambda_fiber(&pt).unwrap();
        let want: Vec<Complex64> = (0..4)
            .map(|k| Complex64::from_polar(1.0, std::f64::consts::PI * (2.0 * k as f64 + 1.0) / 4.0))
            .collect();
        assert!(max_paired_distance(&fiber, &want) < 1e-12);
    }

    #[test]
    fn fiber_roots_satisfy_r_and_match_companion() {
        let h = HamiltonianVector::from_flat_so4(sample_h());
        let model = build_model(d2(), genus2_curve(), h).unwrap();
        let pt = model.base().lift_x(c(0.7, -0.4)).unwrap()[1];
        let fiber = model.lambda_fiber(&pt).unwrap();
        assert_eq!(fiber.len(), 4);
        for &lam in &fiber {
            let scale = model.eval_scale(lam, &pt);
            assert!(model.eval_r(lam, &pt).norm() <= 1e-10 * scale);
        }
        let oracle = companion_roots(&ComplexPoly::new(model.lambda_poly(&pt))).unwrap();
        assert!(max_paired_distance(&fiber, &oracle) < 1e-9);
    }

    #[test]
    fn d_family_is_even_in_lambda() {
        let h = HamiltonianVector::from_flat_so4(sample_h());
        let model = build_model(d2(), genus2_curve(), h).unwrap();
        let polys = model.lambda_coefficient_polys().unwrap();
        assert!(polys[1].is_zero());
        assert!(polys[3].is_zero());
        let pt = model.base().lift_x(c(0.7, -0.4)).unwrap()[0];
        let lam = c(0.9, 0.8);
        assert_eq!(model.eval_r(lam, &pt), model.eval_r(-lam, &pt));
    }

    #[test]
    fn corollary_partials_for_so4() {
        let h_flat = sample_h();
        let h = HamiltonianVector::from_flat_so4(h_flat);
        let model = build_model(d2(), genus2_curve(), h.clone()).unwrap();
        // the model canonicalizes the Pfaffian sign; sample_h already has
        // a first coefficient with positive real part
        assert_eq!(model.hamiltonians(), &h);
        let [h1, h2, h3, h4, h5, h6] = h_flat;
        for k in 0..30 {
            let x = c(0.23 * k as f64 - 1.9, -0.31 * k as f64 + 1.7);
            let pt = match model.base().lift_x(x) {
                Ok([p, _]) => p,
                Err(_) => continue,
            };
            let lam = c(0.7 - 0.11 * k as f64, 0.4 + 0.21 * k as f64);
            let (d_lam, d_h) = model.partials(lam, &pt);
            // flatten order: [H4, H5, H6, H1, H2, H3]
            let r0 = h1 + x * h2 + x * x * h3;
            let r1 = h4 + x * h5 + x * x * h6;
            for j in 0..3 {
                let want = lam * lam * x.powu(j as u32);
                assert!((d_h[j] - want).norm() <= 1e-12 * (1.0 + want.norm()));
            }
            for j in 0..3 {
                let want = 2.0 * r0 * x.powu(j as u32);
                assert!((d_h[3 + j] - want).norm() <= 1e-12 * (1.0 + want.norm()));
            }
            let want_dlam = 4.0 * lam.powu(3) + 2.0 * lam * r1;
            assert!((d_lam - want_dlam).norm() <= 1e-12 * (1.0 + want_dlam.norm()));
        }
    }

    #[test]
    fn corollary_values_from_the_spec_examples() {
        // dR/dH4 at lambda = 2, x = 3 is lambda^2 x^0 = 4
        let h = HamiltonianVector::from_flat_so4(sample_h());
        let model = build_model(d2(), genus2_curve(), h).unwrap();
        let pt3 = model.base().lift_x(c(3.0, 0.0)).unwrap()[0];
        let (_, d_h) = model.partials(c(2.0, 0.0), &pt3);
        assert!((d_h[0] - c(4.0, 0.0)).norm() < 1e-12);

        // dR/dH2 at x = 1 with H1 = H2 = H3 = 1: the Pfaffian enters squared,
        // so the derivative is 2 x (H1 + xH2 + x^2H3) = 6
        let one = c(1.0, 0.0);
        let h = HamiltonianVector::from_flat_so4([one, one, one, ZERO, ZERO, ZERO]);
        let model = build_model(d2(), genus2_curve(), h).unwrap();
        let pt1 = model.base().lift_x(c(1.0, 0.0)).unwrap()[0];
        let (_, d_h) = model.partials(c(0.3, 0.4), &pt1);
        assert!((d_h[4] - c(6.0, 0.0)).norm() < 1e-12);

        // dR/dlambda at lambda = 1 with H4 = H5 = H6 = 0 is 4
        let (d_lam, _) = model.partials(one, &pt1);
        assert!((d_lam - c(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn partials_match_finite_differences_across_families() {
        let curve = genus2_curve();
        for (family, rank) in [(Family::A, 2), (Family::B, 2), (Family::C, 2), (Family::D, 3)] {
            let spec = RootSystemSpec::new(family, rank).unwrap();
            let mut h = HamiltonianVector::zeros(&spec, 2);
            let mut seed = 1.0f64;
            for b in h.blocks.iter_mut() {
                for coeff in b.h0.iter_mut().chain(b.h1.iter_mut()) {
                    seed = (seed * 1.618).rem_euclid(1.0) + 0.1;
                    *coeff = c(seed, 0.7 - seed);
                }
            }
            let model = build_model(spec, curve.clone(), h).unwrap();
            let h = model.hamiltonians().clone();
            let pt = curve.lift_x(c(0.6, 0.5)).unwrap()[0];
            let lam = c(0.8, -0.3);
            let (d_lam, d_h) = model.partials(lam, &pt);

            let eps = 1e-6;
            let fd_lam = (model.eval_r(lam + c(eps, 0.0), &pt)
                - model.eval_r(lam - c(eps, 0.0), &pt))
                / c(2.0 * eps, 0.0);
            assert!(
                (fd_lam - d_lam).norm() <= 1e-6 * (1.0 + d_lam.norm()),
                "{family}{rank} dR/dlambda"
            );

            let flat = h.flatten();
            for j in 0..flat.len() {
                let mut plus = flat.clone();
                plus[j] += c(eps, 0.0);
                let mut minus = flat.clone();
                minus[j] -= c(eps, 0.0);
                let mp = SpectralCurveModel {
                    roots: spec,
                    base: curve.clone(),
                    h: h.from_flatten(&plus).unwrap(),
                    degenerate: false,
                };
                let mm = SpectralCurveModel {
                    roots: spec,
                    base: curve.clone(),
                    h: h.from_flatten(&minus).unwrap(),
                    degenerate: false,
                };
                let fd = (mp.eval_r(lam, &pt) - mm.eval_r(lam, &pt)) / c(2.0 * eps, 0.0);
                assert!(
                    (fd - d_h[j]).norm() <= 1e-6 * (1.0 + d_h[j].norm()),
                    "{family}{rank} dR/dH_{j}"
                );
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut h = HamiltonianVector::zeros(&d2(), 2);
        h.blocks[1].h0.pop();
        assert!(matches!(
            build_model(d2(), genus2_curve(), h),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn canonicalization_flips_negative_pfaffian() {
        let h = HamiltonianVector::from_flat_so4([
            c(-0.8, 0.1),
            c(0.3, 0.4),
            c(0.5, -0.2),
            c(0.7, 0.6),
            c(0.2, 0.3),
            c(0.9, -0.5),
        ]);
        let canon = h.canonicalized();
        let flat = canon.to_flat_so4().unwrap();
        assert!((flat[0] - c(0.8, -0.1)).norm() < 1e-15);
        assert!((flat[1] - c(-0.3, -0.4)).norm() < 1e-15);
        // the non-Pfaffian block is untouched
        assert!((flat[3] - c(0.7, 0.6)).norm() < 1e-15);
    }

    #[test]
    fn flatten_roundtrip() {
        let h = HamiltonianVector::from_flat_so4(sample_h());
        let flat = h.flatten();
        assert_eq!(flat.len(), 6);
        let back = h.from_flatten(&flat).unwrap();
        assert_eq!(h, back);
    }
}
