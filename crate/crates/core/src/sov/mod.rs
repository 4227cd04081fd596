//! Recovering the Hamiltonians from a spectral divisor: the radical pipeline
//! for so(4) and a damped Newton solver for the general case.

pub mod so4;

pub use so4::{so4_eliminate, EliminationState, QForm3, So4Elimination, Stage};

use crate::error::{Error, Result};
use crate::hyperelliptic::HyperellipticCurve;
use crate::spectral::{
    hamiltonian_count, Family, HamiltonianVector, RootSystemSpec,
    SpectralCurveModel, SpectralPoint,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Residual threshold (relative to divisor scale) for accepting a candidate.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// A divisor of N spectral points, all over the same base curve, with
/// pairwise distinct x values.
#[derive(Debug, Clone)]
pub struct SpectralDivisor {
    points: Vec<SpectralPoint>,
}

impl SpectralDivisor {
    pub fn new(curve: &HyperellipticCurve, points: Vec<SpectralPoint>) -> Result<Self> {
        for p in &points {
            curve.point(p.at.x, p.at.y)?;
        }
        let xscale = 1.0 + points.iter().map(|p| p.at.x.norm()).fold(0.0, f64::max);
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if (points[i].at.x - points[j].at.x).norm() <= 1e-8 * xscale {
                    return Err(Error::DegenerateDivisor(format!(
                        "points {i} and {j} share x = {}",
                        points[i].at.x
                    )));
                }
            }
        }
        Ok(SpectralDivisor { points })
    }

    pub fn points(&self) -> &[SpectralPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same divisor with one point replaced; finite-difference probes move
    /// points by amounts far below the separation tolerance, so this skips
    /// revalidation.
    pub fn with_point_replaced(&self, index: usize, point: SpectralPoint) -> SpectralDivisor {
        let mut points = self.points.clone();
        points[index] = point;
        SpectralDivisor { points }
    }
}

/// Pointwise |R| over the divisor together with the magnitude scale that
/// tolerances are measured against.
#[derive(Debug, Clone)]
pub struct Residuals {
    pub per_point: Vec<f64>,
    pub scale: f64,
}

impl Residuals {
    pub fn max_normalized(&self) -> f64 {
        self.per_point.iter().copied().fold(0.0, f64::max) / self.scale
    }
}

pub fn residuals(model: &SpectralCurveModel, divisor: &SpectralDivisor) -> Residuals {
    let mut per_point = Vec::with_capacity(divisor.len());
    let mut scale = 1.0f64;
    for p in divisor.points() {
        per_point.push(model.eval_r(p.lambda, &p.at).norm());
        scale = scale.max(model.eval_scale(p.lambda, &p.at));
    }
    Residuals { per_point, scale }
}

/// One recovered Hamiltonian vector with its normalized residual.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub h: HamiltonianVector,
    pub residual: f64,
}

/// All Hamiltonian vectors found for a divisor, canonicalized, deduplicated
/// and sorted by residual.
#[derive(Debug, Clone)]
pub struct SolutionSet {
    pub candidates: Vec<Candidate>,
}

impl SolutionSet {
    pub fn best(&self) -> Option<&Candidate> {
        self.candidates.first()
    }

    /// The candidate nearest to a reference vector in the flat metric.
    pub fn closest_to(&self, reference: &HamiltonianVector) -> Option<&Candidate> {
        let rf = reference.flatten();
        self.candidates.iter().min_by(|a, b| {
            flat_distance(&a.h.flatten(), &rf).total_cmp(&flat_distance(&b.h.flatten(), &rf))
        })
    }
}

pub fn flat_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn inf_norm(v: &DVector<Complex64>) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn mat_inf(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn eval_f(
    roots: &RootSystemSpec,
    curve: &HyperellipticCurve,
    divisor: &SpectralDivisor,
    shape: &HamiltonianVector,
    flat: &[Complex64],
) -> Result<(DVector<Complex64>, f64)> {
    let h = shape.from_flatten(flat)?;
    let model = SpectralCurveModel::unchecked(*roots, curve.clone(), h);
    let mut f = DVector::from_element(divisor.len(), ZERO);
    let mut scale = 1.0f64;
    for (i, p) in divisor.points().iter().enumerate() {
        f[i] = model.eval_r(p.lambda, &p.at);
        scale = scale.max(model.eval_scale(p.lambda, &p.at));
    }
    Ok((f, scale))
}

fn jacobian(
    roots: &RootSystemSpec,
    curve: &HyperellipticCurve,
    divisor: &SpectralDivisor,
    shape: &HamiltonianVector,
    flat: &[Complex64],
) -> Result<DMatrix<Complex64>> {
    let h = shape.from_flatten(flat)?;
    let model = SpectralCurveModel::unchecked(*roots, curve.clone(), h);
    let n = divisor.len();
    let mut j = DMatrix::from_element(n, flat.len(), ZERO);
    for (i, p) in divisor.points().iter().enumerate() {
        let (_, dh) = model.partials(p.lambda, &p.at);
        for (k, v) in dh.into_iter().enumerate() {
            j[(i, k)] = v;
        }
    }
    Ok(j)
}

fn lu_solve_with_cond(
    j: &DMatrix<Complex64>,
    rhs: &DVector<Complex64>,
) -> Option<(DVector<Complex64>, f64)> {
    let lu = j.clone().lu();
    let u = lu.u();
    let mut dmax = 0.0f64;
    let mut dmin = f64::INFINITY;
    for i in 0..u.nrows().min(u.ncols()) {
        let d = u[(i, i)].norm();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    let cond = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    lu.solve(rhs).map(|delta| (delta, cond))
}

fn lm_solve(j: &DMatrix<Complex64>, f: &DVector<Complex64>, mu: f64) -> Option<DVector<Complex64>> {
    let jh = j.adjoint();
    let mut a = &jh * j;
    let n = a.nrows();
    let shift = Complex64::new(mu, 0.0);
    for i in 0..n {
        a[(i, i)] += shift;
    }
    let rhs = &jh * (-f);
    a.lu().solve(&rhs)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Convergence threshold on the infinity norm of F, relative to scale.
    pub tol: f64,
    pub max_iter: usize,
    /// Condition estimate beyond which a non-improving step aborts.
    pub cond_limit: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 200,
            cond_limit: 1e14,
        }
    }
}

/// Damped Newton iteration on F(H) = (R(lambda_i, x_i, y_i; H))_i with the
/// analytic Jacobian from `partials`. Rank-deficient Jacobians fall back to
/// a Levenberg-Marquardt step so quadratically degenerate directions (a
/// vanishing Pfaffian block) still converge.
pub(crate) fn newton_refine(
    roots: &RootSystemSpec,
    curve: &HyperellipticCurve,
    divisor: &SpectralDivisor,
    start: &HamiltonianVector,
    opts: &NewtonOptions,
) -> Result<(HamiltonianVector, f64)> {
    let mut flat = start.flatten();
    let (mut f, mut scale) = eval_f(roots, curve, divisor, start, &flat)?;
    let mut fnorm = inf_norm(&f);

    for _ in 0..opts.max_iter {
        if fnorm <= opts.tol * scale {
            let h = start.from_flatten(&flat)?;
            return Ok((h, fnorm / scale));
        }
        let j = jacobian(roots, curve, divisor, start, &flat)?;
        let mut tried: Vec<DVector<Complex64>> = Vec::new();
        let mut cond = f64::INFINITY;
        if let Some((delta, c)) = lu_solve_with_cond(&j, &(-&f)) {
            cond = c;
            if c <= 1e12 {
                tried.push(delta);
            }
        }
        let jscale = mat_inf(&j).max(f64::MIN_POSITIVE);
        for mu_rel in [1e-12, 1e-8, 1e-4, 1e-1] {
            if tried.len() >= 3 {
                break;
            }
            if let Some(delta) = lm_solve(&j, &f, mu_rel * jscale * jscale) {
                tried.push(delta);
            }
        }
        if tried.is_empty() {
            return Err(Error::NewtonDiverged(format!(
                "no usable step (condition estimate {cond:.2e})"
            )));
        }

        let mut advanced = false;
        'steps: for delta in &tried {
            let mut alpha = 1.0f64;
            while alpha >= 1e-6 {
                let trial: Vec<Complex64> = flat
                    .iter()
                    .zip(delta.iter())
                    .map(|(h, d)| h + d * alpha)
                    .collect();
                let (ft, st) = eval_f(roots, curve, divisor, start, &trial)?;
                let ftn = inf_norm(&ft);
                if ftn < fnorm {
                    flat = trial;
                    f = ft;
                    scale = st;
                    fnorm = ftn;
                    advanced = true;
                    break 'steps;
                }
                alpha *= 0.5;
            }
        }
        if !advanced {
            if cond > opts.cond_limit {
                return Err(Error::NewtonDiverged(format!(
                    "stalled with condition estimate {cond:.2e} above {:.1e}",
                    opts.cond_limit
                )));
            }
            return Err(Error::NewtonDiverged(format!(
                "line search failed at |F| = {:.3e} (scale {scale:.3e})",
                fnorm
            )));
        }
    }
    Err(Error::NewtonDiverged(format!(
        "no convergence within {} iterations (|F| = {fnorm:.3e}, scale {scale:.3e})",
        opts.max_iter
    )))
}

/// Newton solver over the implicit system R(lambda_i, x_i, y_i; H) = 0,
/// seeded from `h0`. The single reached candidate is returned canonicalized.
pub fn solve_newton(
    roots: &RootSystemSpec,
    curve: &HyperellipticCurve,
    divisor: &SpectralDivisor,
    h0: &HamiltonianVector,
) -> Result<SolutionSet> {
    solve_newton_with(roots, curve, divisor, h0, &NewtonOptions::default())
}

pub fn solve_newton_with(
    roots: &RootSystemSpec,
    curve: &HyperellipticCurve,
    divisor: &SpectralDivisor,
    h0: &HamiltonianVector,
    opts: &NewtonOptions,
) -> Result<SolutionSet> {
    let n = hamiltonian_count(roots, curve.genus());
    if divisor.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "divisor has {} points but {}{} at genus {} needs {n}",
            divisor.len(),
            roots.family,
            roots.rank,
            curve.genus()
        )));
    }
    h0.check_shape(roots, curve.genus())?;
    let (h, residual) = newton_refine(roots, curve, divisor, h0, opts)?;
    Ok(SolutionSet {
        candidates: vec![Candidate {
            h: h.canonicalized(),
            residual,
        }],
    })
}

/// Recovers all so(4) Hamiltonian vectors through a divisor of six points by
/// the radical elimination: linear elimination of H4..H6, diagonalization of
/// the quadratic-term matrix, right-side removal, division by H1 (and by H3
/// under the exchanged role), reduction to a quartic in one ratio, and
/// closed-form back-substitution. Candidates from both role assignments are
/// merged, polished, filtered by residual and canonicalized.
pub fn solve_so4_radicals(
    curve: &HyperellipticCurve,
    divisor: &SpectralDivisor,
) -> Result<SolutionSet> {
    if curve.genus() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "so(4) radical solver requires genus 2, curve has genus {}",
            curve.genus()
        )));
    }
    let roots = RootSystemSpec::new(Family::D, 2)?;
    if divisor.len() != 6 {
        return Err(Error::DegenerateDivisor(format!(
            "so(4) needs a divisor of 6 points, got {}",
            divisor.len()
        )));
    }
    let lscale = 1.0
        + divisor
            .points()
            .iter()
            .map(|p| p.lambda.norm())
            .fold(0.0, f64::max);
    let nonzero = divisor
        .points()
        .iter()
        .filter(|p| p.lambda.norm() > 1e-12 * lscale)
        .count();
    if nonzero < 3 {
        return Err(Error::DegenerateDivisor(format!(
            "only {nonzero} points have nonzero lambda; the linear elimination needs three"
        )));
    }

    let mut raw: Vec<[Complex64; 6]> = Vec::new();
    let mut zero_stratum = false;

    for swapped in [false, true] {
        // a rank-deficient elimination (e.g. all lambda_i^2 equal) is a
        // degenerate stratum handled by the fallbacks below, not a fatal
        // divisor defect
        let elim = match so4_eliminate(divisor, swapped) {
            Ok(e) => e,
            Err(Error::DegenerateDivisor(_)) => {
                zero_stratum = true;
                continue;
            }
            Err(e) => return Err(e),
        };
        if elim.is_identically_reduced_to_zero() {
            zero_stratum = true;
            continue;
        }
        match crate::polyalg::roots_in_radicals(&elim.quartic) {
            Ok(roots_b) => {
                for b in roots_b {
                    if let Some(c) = elim.back_substitute(b) {
                        raw.push(c);
                    }
                }
            }
            Err(Error::ZeroPolynomial) => {
                zero_stratum = true;
            }
            Err(e) => return Err(e),
        }
    }

    if zero_stratum {
        if let Some(c) = vanishing_pfaffian_candidate(divisor) {
            raw.push(c);
        }
    }
    if raw.is_empty() {
        // both role assignments degenerated; fall back to Newton from zero
        let zero_seed = HamiltonianVector::zeros(&roots, 2);
        if let Ok(set) = solve_newton(&roots, curve, divisor, &zero_seed) {
            for c in set.candidates {
                if let Ok(flat) = c.h.to_flat_so4() {
                    raw.push(flat);
                }
            }
        }
    }

    // polish, filter, canonicalize, deduplicate
    let polish_opts = NewtonOptions {
        tol: 1e-14,
        max_iter: 3,
        cond_limit: 1e14,
    };
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut best_seen = f64::INFINITY;
    for flat in raw {
        let h = HamiltonianVector::from_flat_so4(flat);
        let pre = candidate_residual(&roots, curve, divisor, &h);
        best_seen = best_seen.min(pre);
        if pre > 1e-6 {
            continue;
        }
        let polished = match newton_refine(&roots, curve, divisor, &h, &polish_opts) {
            Ok((hp, rp)) if rp <= pre => (hp, rp),
            _ => (h, pre),
        };
        let (h, residual) = polished;
        best_seen = best_seen.min(residual);
        if residual > RESIDUAL_TOL {
            continue;
        }
        candidates.push(Candidate {
            h: h.canonicalized(),
            residual,
        });
    }

    // merge duplicates, keeping the smaller residual
    let mut merged: Vec<Candidate> = Vec::new();
    for c in candidates {
        let mag = 1.0 + c.h.max_magnitude();
        if let Some(existing) = merged
            .iter_mut()
            .find(|e| flat_distance(&e.h.flatten(), &c.h.flatten()) < 1e-7 * mag)
        {
            if c.residual < existing.residual {
                *existing = c;
            }
        } else {
            merged.push(c);
        }
    }
    merged.sort_by(|a, b| {
        a.residual.total_cmp(&b.residual).then_with(|| {
            let fa = a.h.flatten();
            let fb = b.h.flatten();
            for (x, y) in fa.iter().zip(fb.iter()) {
                let ord = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
                if ord != std::cmp::Ordering::Equal {
                    return ord;
                }
            }
            std::cmp::Ordering::Equal
        })
    });

    if merged.is_empty() {
        return Err(Error::NoSolution { best: best_seen });
    }
    Ok(SolutionSet { candidates: merged })
}

/// The v = 0 stratum: the Pfaffian block vanishes and (H4, H5, H6) solve the
/// now-linear system lambda_i^2 (H4 + x_i H5 + x_i^2 H6) = -lambda_i^4 in
/// the least-squares sense over the points with nonzero lambda.
fn vanishing_pfaffian_candidate(divisor: &SpectralDivisor) -> Option<[Complex64; 6]> {
    let pts = divisor.points();
    let lscale = 1.0 + pts.iter().map(|p| p.lambda.norm()).fold(0.0, f64::max);
    let active: Vec<_> = pts
        .iter()
        .filter(|p| p.lambda.norm() > 1e-12 * lscale)
        .collect();
    if active.len() < 3 {
        return None;
    }
    let mut ata = [[ZERO; 3]; 3];
    let mut atb = [ZERO; 3];
    for p in &active {
        let row = [Complex64::new(1.0, 0.0), p.at.x, p.at.x * p.at.x];
        let rhs = -p.lambda * p.lambda;
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i].conj() * row[j];
            }
            atb[i] += row[i].conj() * rhs;
        }
    }
    // normal equations via the same pivoted 3x3 solve as the pipeline
    let w = so4::solve3(ata, atb).ok()?;
    Some([ZERO, ZERO, ZERO, w[0], w[1], w[2]])
}

pub(crate) fn candidate_residual(
    roots: &RootSystemSpec,
    curve: &HyperellipticCurve,
    divisor: &SpectralDivisor,
    h: &HamiltonianVector,
) -> f64 {
    let model = SpectralCurveModel::unchecked(*roots, curve.clone(), h.clone());
    residuals(&model, divisor).max_normalized()
}

/// Draws a reproducible divisor from the model: distinct x values away from
/// the branch points (and, for so(4), the discriminant locus), a random lift
/// per point and a random fiber root, each sampled from the seeded stream.
pub fn sample_divisor(model: &SpectralCurveModel, seed: u64) -> Result<SpectralDivisor> {
    if model.is_degenerate() {
        return Err(Error::DegenerateModel(
            "cannot sample a divisor from an identically degenerate fiber".into(),
        ));
    }
    let n = model.hamiltonian_count();
    let curve = model.base();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut obstacles: Vec<Complex64> = curve.branch_points().to_vec();
    if model.roots().family == Family::D && model.roots().rank == 2 {
        if let Ok(disc) = crate::spectral::x_discriminant_points(model) {
            obstacles = disc;
        }
    }
    let spread = 1.0 + curve.branch_diameter();
    let center = curve.branch_points().iter().sum::<Complex64>()
        / curve.branch_points().len() as f64;
    let margin = 0.1 * spread;

    let mut points: Vec<SpectralPoint> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while points.len() < n {
        attempts += 1;
        if attempts > 4000 {
            return Err(Error::Numerical(format!(
                "divisor sampling failed after {attempts} attempts"
            )));
        }
        let re = rng.random_range(-1.2..1.2) * spread;
        let im = rng.random_range(-1.2..1.2) * spread;
        let x = center + Complex64::new(re, im);
        if obstacles.iter().any(|&o| (x - o).norm() < margin) {
            continue;
        }
        if points.iter().any(|p| (p.at.x - x).norm() < margin) {
            continue;
        }
        // keep |y| = |P(x)|^(1/2) moderate: the canonical coordinate couples
        // to x through dx / y, and extreme lifts make the chart stiff for
        // the finite-difference verification probes
        let p_mag = curve.eval_p(x).norm();
        if !(0.05..=25.0).contains(&p_mag) {
            continue;
        }
        let lifts = match curve.lift_x(x) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let pt = lifts[rng.random_range(0..2usize)];
        let fiber = match model.lambda_fiber(&pt) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let fscale = 1.0 + fiber.iter().map(|r| r.norm()).fold(0.0, f64::max);
        let mut min_gap = f64::INFINITY;
        for i in 0..fiber.len() {
            for j in (i + 1)..fiber.len() {
                min_gap = min_gap.min((fiber[i] - fiber[j]).norm());
            }
        }
        if min_gap < 0.05 * fscale {
            continue;
        }
        let lambda = fiber[rng.random_range(0..fiber.len())];
        let r = model.eval_r(lambda, &pt).norm();
        if r > 1e-10 * model.eval_scale(lambda, &pt) {
            return Err(Error::Numerical(format!(
                "sampled point failed the on-curve check: |R| = {r:.3e}"
            )));
        }
        points.push(SpectralPoint { lambda, at: pt });
    }
    SpectralDivisor::new(curve, points)
}
