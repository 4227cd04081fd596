//! Continuation of lambda along paths on the spectral cover and the
//! x-discriminant locus where the lambda-fiber degenerates.

use super::{Family, SpectralCurveModel};
use crate::error::{Error, Result};
use crate::hyperelliptic::quadrature::SheetState;
use crate::hyperelliptic::{CurvePoint, XPath};
use crate::polyalg::{companion_roots, ComplexPoly};
use num_complex::Complex64;

/// Fiber roots closer than this (relative to fiber scale) abort continuation.
pub const SHEET_COLLISION_TOL: f64 = 1e-8;

/// Sheet state over the spectral cover: the base lift y and the fiber root
/// lambda, both continued along x.
#[derive(Clone)]
pub struct LambdaState<'a> {
    pub model: &'a SpectralCurveModel,
    pub x: Complex64,
    pub y: Complex64,
    pub lambda: Complex64,
    /// Bisection floor as an absolute step length.
    pub min_step: f64,
}

impl<'a> LambdaState<'a> {
    pub fn new(
        model: &'a SpectralCurveModel,
        pt: CurvePoint,
        lambda: Complex64,
        min_step: f64,
    ) -> Result<Self> {
        let r = model.eval_r(lambda, &pt).norm();
        let scale = model.eval_scale(lambda, &pt);
        if r > 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "continuation start (lambda, x, y) = ({lambda}, {}, {}) has |R| = {r:.3e}",
                pt.x, pt.y
            )));
        }
        Ok(LambdaState {
            model,
            x: pt.x,
            y: pt.y,
            lambda,
            min_step,
        })
    }

    fn step(&mut self, x_to: Complex64) -> Result<()> {
        if (x_to - self.x).norm() < self.min_step {
            return Err(Error::ContinuationStalled(self.min_step));
        }
        let y_new =
            crate::hyperelliptic::continue_y_hop(self.model.base(), self.x, self.y, x_to, 48)?;
        let pt = CurvePoint { x: x_to, y: y_new };

        // first-order predictor along the branch tangent: a zeroth-order
        // predictor lets a coarse step hop a fast-variation zone and land
        // decisively closest to the wrong root (the negated partner, for the
        // even D family)
        let prev_pt = CurvePoint { x: self.x, y: self.y };
        let (d_lam_prev, _) = self.model.partials(self.lambda, &prev_pt);
        let prev_scale = self.model.eval_scale(self.lambda, &prev_pt);
        let mut ok = d_lam_prev.norm() > 1e-10 * prev_scale;
        let mut lam = self.lambda;
        if ok {
            let tangent = -self.model.partial_x_on_curve(self.lambda, &prev_pt) / d_lam_prev;
            let predicted = self.lambda + tangent * (x_to - self.x);

            // corrector: Newton on R(., x, y) in lambda from the predictor
            lam = predicted;
            let mut converged = false;
            for _ in 0..8 {
                let r = self.model.eval_r(lam, &pt);
                let scale = self.model.eval_scale(lam, &pt);
                if r.norm() <= 1e-12 * scale {
                    converged = true;
                    break;
                }
                let (d_lam, _) = self.model.partials(lam, &pt);
                if d_lam.norm() <= 1e-14 * scale {
                    break;
                }
                lam -= r / d_lam;
            }

            ok = converged;
            if converged {
                let fiber = self.model.lambda_fiber(&pt)?;
                let fscale = 1.0 + fiber.iter().map(|r| r.norm()).fold(0.0, f64::max);
                let mut nearest = 0usize;
                let mut d1 = f64::INFINITY;
                for (i, &f) in fiber.iter().enumerate() {
                    let d = (f - predicted).norm();
                    if d < d1 {
                        d1 = d;
                        nearest = i;
                    }
                }
                let mut gap = f64::INFINITY;
                let mut d2 = f64::INFINITY;
                for (i, &f) in fiber.iter().enumerate() {
                    if i != nearest {
                        gap = gap.min((f - fiber[nearest]).norm());
                        d2 = d2.min((f - predicted).norm());
                    }
                }
                if gap < SHEET_COLLISION_TOL * fscale {
                    return Err(Error::SheetCollision { x: x_to, gap });
                }
                // the corrector must agree with the fiber element nearest
                // the prediction, the prediction must be unambiguous, and
                // the step's branch movement must stay well inside the
                // local fiber gap
                if (lam - fiber[nearest]).norm() > 1e-6 * fscale
                    || d1 > 0.3 * d2
                    || (fiber[nearest] - self.lambda).norm() > 0.35 * gap + d1
                {
                    ok = false;
                } else {
                    lam = fiber[nearest];
                }
            }
        }

        if !ok {
            // bisect the step
            let mid = (self.x + x_to) / 2.0;
            self.step(mid)?;
            return self.step(x_to);
        }
        self.x = x_to;
        self.y = pt.y;
        self.lambda = lam;
        Ok(())
    }

    pub fn point(&self) -> CurvePoint {
        CurvePoint {
            x: self.x,
            y: self.y,
        }
    }
}

impl SheetState for LambdaState<'_> {
    fn advance(&mut self, x_to: Complex64) -> Result<()> {
        if (x_to - self.x).norm() == 0.0 {
            return Ok(());
        }
        self.step(x_to)
    }

    fn y(&self) -> Complex64 {
        self.y
    }

    fn lambda(&self) -> Option<Complex64> {
        Some(self.lambda)
    }
}

/// Continues a fiber root along the path by predictor-corrector, returning
/// lambda at the path end. The start triple must satisfy R = 0 and the path
/// must clear the x-discriminant locus.
pub fn continue_lambda(
    model: &SpectralCurveModel,
    path: &XPath,
    y_start: Complex64,
    lambda_start: Complex64,
) -> Result<Complex64> {
    let start = model.base().point(path.start(), y_start)?;
    let min_step = 1e-12 * path.length().max(f64::MIN_POSITIVE);
    let mut state = LambdaState::new(model, start, lambda_start, min_step)?;
    for (a, b) in path.segments() {
        if (b - a).norm() == 0.0 {
            continue;
        }
        let n = 8;
        for k in 1..=n {
            let x_next = a + (b - a) * (k as f64 / n as f64);
            state.advance(x_next)?;
        }
    }
    Ok(state.lambda)
}

/// x-values where the lambda-fiber degenerates, merged with the base branch
/// points. Degenerate models report only the branch points. For so(4) the
/// locus comes from the explicit factorization of the biquadratic
/// discriminant; other families sample the discriminant over both sheets and
/// interpolate it as a polynomial in x.
pub fn x_discriminant_points(model: &SpectralCurveModel) -> Result<Vec<Complex64>> {
    let branch = model.base().branch_points().to_vec();
    if model.is_degenerate() {
        return Ok(branch);
    }

    let mut candidates: Vec<Complex64> = Vec::new();
    let y_free = model
        .hamiltonians()
        .blocks
        .iter()
        .all(|b| b.h1.is_empty());

    if model.roots().family == Family::D && model.roots().rank == 2 && y_free {
        // R = mu^2 + r1 mu + r0^2 in mu = lambda^2; the fiber degenerates
        // where the mu-discriminant r1^2 - 4 r0^2 = (r1 - 2r0)(r1 + 2r0)
        // vanishes, and where mu = 0, i.e. r0 = 0
        let r1 = ComplexPoly::new(model.hamiltonians().blocks[0].h0.clone());
        let r0 = ComplexPoly::new(model.hamiltonians().blocks[1].h0.clone());
        let two_r0 = r0.scale(Complex64::new(2.0, 0.0));
        for poly in [&r1 - &two_r0, &r1 + &two_r0, r0] {
            let trimmed = poly.trim_relative(1e-13);
            if trimmed.is_zero() || trimmed.degree() == 0 {
                continue;
            }
            candidates.extend(companion_roots(&trimmed)?);
        }
    } else {
        candidates.extend(interpolated_collision_points(model)?);
    }

    // keep candidates at which the fiber really collides
    let mut verified = Vec::new();
    for &x in &candidates {
        if branch.iter().any(|&b| (x - b).norm() < 1e-8) {
            continue; // already covered by the branch points
        }
        let lifts = match model.base().lift_x(x) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let mut collides = false;
        for pt in lifts {
            if let Ok(fiber) = model.lambda_fiber(&pt) {
                let fscale = 1.0 + fiber.iter().map(|r| r.norm()).fold(0.0, f64::max);
                for i in 0..fiber.len() {
                    for j in (i + 1)..fiber.len() {
                        if (fiber[i] - fiber[j]).norm() <= 1e-6 * fscale {
                            collides = true;
                        }
                    }
                }
            }
        }
        if collides {
            verified.push(x);
        }
    }

    let mut out = branch;
    let scale = 1.0
        + out
            .iter()
            .chain(verified.iter())
            .map(|p| p.norm())
            .fold(0.0, f64::max);
    for x in verified {
        if !out.iter().any(|&o| (x - o).norm() <= 1e-8 * scale) {
            out.push(x);
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then_with(|| a.im.total_cmp(&b.im)));
    Ok(out)
}

/// Fallback collision finder for models without a closed-form discriminant:
/// interpolate the sheet-product discriminant, then polish each root. The
/// interpolated product has collision roots at even multiplicity, so the
/// companion eigenvalues only localize them to ~1e-3 before polishing.
fn interpolated_collision_points(model: &SpectralCurveModel) -> Result<Vec<Complex64>> {
    let mut out = Vec::new();
    for x in interpolated_discriminant_roots(model)? {
        if let Some(refined) = refine_collision(model, x) {
            out.push(refined);
        }
    }
    Ok(out)
}

/// Squared gap of the closest fiber pair over both sheets at x. Near a
/// simple collision the gap behaves like sqrt(x - x*), so its square is
/// analytic with a simple zero there.
fn min_gap_squared(model: &SpectralCurveModel, x: Complex64) -> Option<Complex64> {
    let lifts = model.base().lift_x(x).ok()?;
    let mut best: Option<Complex64> = None;
    for pt in lifts {
        let fiber = model.lambda_fiber(&pt).ok()?;
        for i in 0..fiber.len() {
            for j in (i + 1)..fiber.len() {
                let d = fiber[i] - fiber[j];
                if best.map_or(true, |b| d.norm_sqr() < b.norm_sqr()) {
                    best = Some(d * d);
                }
            }
        }
    }
    best
}

/// Newton iteration on the squared closest-pair gap, driving an approximate
/// collision candidate onto the discriminant locus.
fn refine_collision(model: &SpectralCurveModel, mut x: Complex64) -> Option<Complex64> {
    for _ in 0..16 {
        let s = min_gap_squared(model, x)?;
        if s.norm() <= 1e-24 {
            break;
        }
        let h = 1e-7 * (1.0 + x.norm());
        let sp = min_gap_squared(model, x + Complex64::new(h, 0.0))?;
        let sm = min_gap_squared(model, x - Complex64::new(h, 0.0))?;
        let ds = (sp - sm) / Complex64::new(2.0 * h, 0.0);
        if ds.norm() == 0.0 {
            break;
        }
        let step = s / ds;
        x -= step;
        if step.norm() <= 1e-13 * (1.0 + x.norm()) {
            break;
        }
    }
    Some(x)
}

/// Samples the product of the lambda-discriminant over both sheets on a
/// circle and recovers its coefficients by an inverse DFT. The product is
/// symmetric under y -> -y, hence a polynomial in x.
fn interpolated_discriminant_roots(model: &SpectralCurveModel) -> Result<Vec<Complex64>> {
    let n_rep = model.n_rep();
    let genus = model.base().genus();
    let max_coeff_deg = model
        .hamiltonians()
        .blocks
        .iter()
        .map(|b| {
            let d0 = b.h0.len().saturating_sub(1);
            let d1 = if b.h1.is_empty() {
                0
            } else {
                b.h1.len() - 1 + 2 * genus + 1
            };
            if b.pfaffian {
                2 * d0.max(d1)
            } else {
                d0.max(d1)
            }
        })
        .max()
        .unwrap_or(0);
    let bound = 2 * (2 * n_rep - 2) * max_coeff_deg.max(1) + 4;
    let m = bound + 1;
    // the sampling radius trades off where roots are resolved best against
    // the dynamic range rho^degree of the recovered coefficients; the locus
    // of interest sits within the branch-point scale
    let radius = 1.5f64.max(0.75 * (1.0 + model.base().branch_diameter()));

    let mut samples = Vec::with_capacity(m);
    for j in 0..m {
        let theta = std::f64::consts::TAU * j as f64 / m as f64;
        let x = Complex64::from_polar(radius, theta);
        let mut product = Complex64::new(1.0, 0.0);
        for pt in model.base().lift_x(x)? {
            let fiber = model.lambda_fiber(&pt)?;
            for i in 0..fiber.len() {
                for k in (i + 1)..fiber.len() {
                    let d = fiber[i] - fiber[k];
                    product *= d * d;
                }
            }
        }
        samples.push(product);
    }

    // inverse DFT, rescaled by the sampling radius
    let mut coeffs = Vec::with_capacity(m);
    let mut rpow = 1.0f64;
    for k in 0..m {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &s) in samples.iter().enumerate() {
            let theta = -std::f64::consts::TAU * (j * k % m) as f64 / m as f64;
            acc += s * Complex64::from_polar(1.0, theta);
        }
        coeffs.push(acc / (m as f64 * rpow));
        rpow *= radius;
    }
    let poly = ComplexPoly::new(coeffs).trim_relative(1e-9);
    if poly.is_zero() || poly.degree() == 0 {
        return Ok(Vec::new());
    }
    companion_roots(&poly)
}
