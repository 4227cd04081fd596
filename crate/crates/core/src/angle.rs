//! Angle coordinates conjugate to the Hamiltonians: integrals of
//! R'_{H_j} / (y R'_lambda) dx along planned paths on the spectral cover.

use crate::error::{Error, Result};
use crate::hyperelliptic::quadrature::{integrate_path, QuadOptions, SheetState, TraceRow};
use crate::hyperelliptic::{plan_curve_path, CurvePoint, XPath};
use crate::sov::SpectralDivisor;
use crate::spectral::{
    x_discriminant_points, HamiltonianVector, LambdaState, SpectralCurveModel, SpectralPoint,
};
use num_complex::Complex64;
use rayon::prelude::*;

/// Default quadrature tolerance per path.
pub const ANGLE_QUAD_TOL: f64 = 1e-9;

/// Divisor points closer than this (relative) to the discriminant locus are
/// rejected; the integrand genuinely blows up there.
pub const DISCRIMINANT_MARGIN: f64 = 1e-6;

/// How the planner reached one divisor point.
#[derive(Debug, Clone)]
pub struct PathClass {
    pub endpoint_x: Complex64,
    pub waypoint_count: usize,
    pub sheet_loop: bool,
    pub clearance: f64,
}

/// The angle coordinates, reported together with the base point and the
/// planner outputs they depend on. Values are defined modulo periods of the
/// underlying differentials; only path-fixed differences are canonical.
#[derive(Debug, Clone)]
pub struct AngleVector {
    pub phi: Vec<Complex64>,
    pub basepoint: Complex64,
    pub path_class: Vec<PathClass>,
}

/// The separated one-form component: R'_{H_j} / (y R'_lambda) at a point of
/// the spectral cover.
pub fn integrand(
    model: &SpectralCurveModel,
    j: usize,
    lambda: Complex64,
    pt: &CurvePoint,
) -> Result<Complex64> {
    let (d_lambda, d_h) = model.partials(lambda, pt);
    let scale = model.eval_scale(lambda, pt);
    if d_lambda.norm() <= 1e-12 * scale {
        return Err(Error::NearDiscriminant(d_lambda.norm()));
    }
    Ok(d_h[j] / (pt.y * d_lambda))
}

/// Per-point integration record kept by the integrator.
struct PointRun {
    path: XPath,
    sheet_loop: bool,
    /// Fiber root at the base point whose continuation lands on the divisor
    /// point's lambda.
    base_lambda: Complex64,
    /// Integrals of the n_h integrand components and, in the last slot, of
    /// dx / y (the canonical-coordinate differential).
    integrals: Vec<Complex64>,
    /// End state of the continuation, for incremental extensions.
    end_point: CurvePoint,
    end_lambda: Complex64,
    /// Panels per segment accepted by the adaptive pass; probes reuse them.
    schedule: Vec<u32>,
}

/// Increments produced by extending one point's path by a tiny segment.
pub struct PointExtension {
    /// Change of each phi_j (already carrying the defining minus sign).
    pub dphi: Vec<Complex64>,
    /// Change of the canonical coordinate x-tilde.
    pub dxtilde: Complex64,
    /// The continued spectral point at the extension end.
    pub point: SpectralPoint,
}

/// Plans, sheet-matches and integrates all divisor points once, then serves
/// angle vectors, canonical coordinates, incremental extensions and
/// frozen-schedule re-integrations for finite-difference probes.
pub struct Integrator<'a> {
    model: &'a SpectralCurveModel,
    divisor: &'a SpectralDivisor,
    basepoint: Complex64,
    base_lift: Complex64,
    runs: Vec<PointRun>,
    quad_tol: f64,
}

impl<'a> Integrator<'a> {
    pub fn new(
        model: &'a SpectralCurveModel,
        divisor: &'a SpectralDivisor,
        basepoint_x: Complex64,
    ) -> Result<Self> {
        Self::with_tolerance(model, divisor, basepoint_x, ANGLE_QUAD_TOL)
    }

    pub fn with_tolerance(
        model: &'a SpectralCurveModel,
        divisor: &'a SpectralDivisor,
        basepoint_x: Complex64,
        quad_tol: f64,
    ) -> Result<Self> {
        if model.is_degenerate() {
            return Err(Error::DegenerateModel(
                "angle coordinates need a nondegenerate fiber".into(),
            ));
        }
        let obstacles = x_discriminant_points(model)?;
        let oscale = 1.0 + obstacles.iter().map(|o| o.norm()).fold(0.0, f64::max);
        for p in divisor.points() {
            for &o in &obstacles {
                if model.base().branch_points().contains(&o) {
                    continue;
                }
                if (p.at.x - o).norm() <= DISCRIMINANT_MARGIN * oscale {
                    return Err(Error::NearDiscriminant((p.at.x - o).norm()));
                }
            }
        }
        let base_lift = model.base().eval_p(basepoint_x).sqrt();

        let runs: Result<Vec<PointRun>> = divisor
            .points()
            .par_iter()
            .map(|p| integrate_one(model, basepoint_x, base_lift, &obstacles, p, quad_tol, None))
            .collect();
        Ok(Integrator {
            model,
            divisor,
            basepoint: basepoint_x,
            base_lift,
            runs: runs?,
            quad_tol,
        })
    }

    pub fn model(&self) -> &SpectralCurveModel {
        self.model
    }

    pub fn basepoint(&self) -> Complex64 {
        self.basepoint
    }

    fn n_coeffs(&self) -> usize {
        self.model.hamiltonians().len()
    }

    /// phi_j = - sum_i (integral of component j along path i), summed in
    /// divisor order.
    pub fn angles(&self) -> AngleVector {
        let n = self.n_coeffs();
        let mut phi = vec![Complex64::new(0.0, 0.0); n];
        for run in &self.runs {
            for (j, p) in phi.iter_mut().enumerate() {
                *p -= run.integrals[j];
            }
        }
        AngleVector {
            phi,
            basepoint: self.basepoint,
            path_class: self
                .runs
                .iter()
                .map(|r| PathClass {
                    endpoint_x: r.path.end(),
                    waypoint_count: r.path.waypoints.len(),
                    sheet_loop: r.sheet_loop,
                    clearance: r.path.clearance,
                })
                .collect(),
        }
    }

    /// The contribution of a single divisor point to each phi_j.
    pub fn contribution(&self, i: usize) -> Vec<Complex64> {
        self.runs[i].integrals[..self.n_coeffs()]
            .iter()
            .map(|v| -v)
            .collect()
    }

    /// Canonical coordinate of point i: the integral of dx / y along its path.
    pub fn x_tilde(&self, i: usize) -> Complex64 {
        *self.runs[i].integrals.last().unwrap()
    }

    /// Continued (y, lambda) at the end of path i; agrees with the divisor
    /// point by construction.
    pub fn end_state(&self, i: usize) -> (CurvePoint, Complex64) {
        (self.runs[i].end_point, self.runs[i].end_lambda)
    }

    /// Integrates the straight segment from the end of path i to x + dx,
    /// continuing y and lambda from the stored end state. A fixed panel
    /// count keeps the increment a smooth function of dx.
    pub fn extend_point(&self, i: usize, dx: Complex64) -> Result<PointExtension> {
        let run = &self.runs[i];
        let n = self.n_coeffs();
        if dx.norm() == 0.0 {
            return Ok(PointExtension {
                dphi: vec![Complex64::new(0.0, 0.0); n],
                dxtilde: Complex64::new(0.0, 0.0),
                point: SpectralPoint {
                    lambda: run.end_lambda,
                    at: run.end_point,
                },
            });
        }
        let seg = XPath::from_waypoints(
            vec![run.end_point.x, run.end_point.x + dx],
            run.path.clearance,
        );
        let state = LambdaState::new(
            self.model,
            run.end_point,
            run.end_lambda,
            1e-14 * (1.0 + dx.norm()),
        )?;
        let opts = QuadOptions {
            rel_tol: self.quad_tol,
            max_panels: 1 << 20,
            fixed_schedule: Some(vec![4]),
        };
        let mut f = make_integrand(self.model, n);
        let outcome = integrate_path(&seg, state, n + 1, &mut f, &opts, false)?;
        Ok(PointExtension {
            dphi: outcome.values[..n].iter().map(|v| -v).collect(),
            dxtilde: outcome.values[n],
            point: SpectralPoint {
                lambda: outcome.end_state.lambda,
                at: outcome.end_state.point(),
            },
        })
    }

    /// Re-integrates every path under a different Hamiltonian vector, with
    /// endpoints moved to the given spectral points, reusing the frozen
    /// panel schedules. Returns (phi, x_tilde per point).
    pub fn angles_with(
        &self,
        h: &HamiltonianVector,
        endpoints: &[SpectralPoint],
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let model = SpectralCurveModel::unchecked(
            *self.model.roots(),
            self.model.base().clone(),
            h.clone(),
        );
        let n = self.n_coeffs();
        let results: Result<Vec<(Vec<Complex64>, Complex64)>> = self
            .runs
            .par_iter()
            .zip(endpoints.par_iter())
            .map(|(run, target)| {
                // continue the branch continuously in H: start from the
                // fiber root of the new model nearest the base-matched root
                let base_pt = CurvePoint {
                    x: self.basepoint,
                    y: self.base_lift,
                };
                let fiber = model.lambda_fiber(&base_pt)?;
                let lambda0 = fiber
                    .iter()
                    .copied()
                    .min_by(|a, b| {
                        (a - run.base_lambda)
                            .norm()
                            .total_cmp(&(b - run.base_lambda).norm())
                    })
                    .unwrap();
                let mut path = run.path.clone();
                let mut schedule = run.schedule.clone();
                if (target.at.x - path.end()).norm() > 0.0 {
                    path = path.concat(&XPath::from_waypoints(
                        vec![path.end(), target.at.x],
                        path.clearance,
                    ));
                    schedule.push(4);
                }
                let state = LambdaState::new(&model, base_pt, lambda0, 1e-13 * (1.0 + path.length()))?;
                let opts = QuadOptions {
                    rel_tol: self.quad_tol,
                    max_panels: 1 << 20,
                    fixed_schedule: Some(schedule),
                };
                let mut f = make_integrand(&model, n);
                let outcome = integrate_path(&path, state, n + 1, &mut f, &opts, false)?;
                let end = outcome.end_state;
                let ltol = 1e-6 * (1.0 + target.lambda.norm());
                if (end.lambda - target.lambda).norm() > ltol {
                    return Err(Error::SheetMatchFailed {
                        target: target.lambda,
                        found: 0,
                    });
                }
                Ok((outcome.values[..n].to_vec(), outcome.values[n]))
            })
            .collect();
        let results = results?;
        let mut phi = vec![Complex64::new(0.0, 0.0); n];
        let mut xts = Vec::with_capacity(results.len());
        for (vals, xt) in results {
            for (j, p) in phi.iter_mut().enumerate() {
                *p -= vals[j];
            }
            xts.push(xt);
        }
        Ok((phi, xts))
    }
}

fn make_integrand(
    model: &SpectralCurveModel,
    n: usize,
) -> impl FnMut(&LambdaState<'_>, Complex64, &mut [Complex64]) -> Result<()> + '_ {
    move |state: &LambdaState<'_>, _x: Complex64, out: &mut [Complex64]| {
        let pt = state.point();
        let (d_lambda, d_h) = model.partials(state.lambda, &pt);
        let scale = model.eval_scale(state.lambda, &pt);
        if d_lambda.norm() <= 1e-12 * scale {
            return Err(Error::NearDiscriminant(d_lambda.norm()));
        }
        let denom = pt.y * d_lambda;
        for j in 0..n {
            out[j] = d_h[j] / denom;
        }
        out[n] = 1.0 / pt.y;
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn integrate_one(
    model: &SpectralCurveModel,
    basepoint: Complex64,
    base_lift: Complex64,
    obstacles: &[Complex64],
    p: &SpectralPoint,
    quad_tol: f64,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<PointRun> {
    let curve = model.base();
    let (path, sheet_loop) = plan_curve_path(curve, basepoint, base_lift, &p.at, obstacles)?;

    // endpoint matching: continue every base fiber root along the path and
    // keep the unique one landing on the divisor point's lambda
    let base_pt = CurvePoint {
        x: basepoint,
        y: base_lift,
    };
    let fiber = model.lambda_fiber(&base_pt)?;
    let ltol = 1e-6 * (1.0 + p.lambda.norm());
    let min_step = 1e-12 * path.length().max(1e-6);
    let mut matched: Vec<Complex64> = Vec::new();
    for &root in &fiber {
        let mut state = LambdaState::new(model, base_pt, root, min_step)?;
        let mut ok = true;
        'walk: for (a, b) in path.segments() {
            if (b - a).norm() == 0.0 {
                continue;
            }
            for k in 1..=8 {
                let x_next = a + (b - a) * (k as f64 / 8.0);
                if state.advance(x_next).is_err() {
                    ok = false;
                    break 'walk;
                }
            }
        }
        if ok && (state.lambda - p.lambda).norm() <= ltol {
            matched.push(root);
        }
    }
    if matched.len() != 1 {
        return Err(Error::SheetMatchFailed {
            target: p.lambda,
            found: matched.len(),
        });
    }
    let base_lambda = matched[0];

    let n = model.hamiltonians().len();
    let state = LambdaState::new(model, base_pt, base_lambda, min_step)?;
    let opts = QuadOptions {
        rel_tol: quad_tol,
        max_panels: 1 << 20,
        fixed_schedule: None,
    };
    let mut f = make_integrand(model, n);
    let want_trace = trace.is_some();
    let outcome = integrate_path(&path, state, n + 1, &mut f, &opts, want_trace)?;
    if let Some(sink) = trace {
        *sink = outcome.trace;
    }
    let end = outcome.end_state;
    if (end.lambda - p.lambda).norm() > ltol {
        return Err(Error::SheetMatchFailed {
            target: p.lambda,
            found: 77,
        });
    }
    Ok(PointRun {
        path,
        sheet_loop,
        base_lambda,
        integrals: outcome.values,
        end_point: end.point(),
        end_lambda: end.lambda,
        schedule: outcome.schedule,
    })
}

/// The angle coordinates of the divisor: for each Hamiltonian coefficient j,
/// phi_j = - sum over divisor points of the integral of
/// R'_{H_j} / (y R'_lambda) dx from the base point, with y continued from the
/// principal base lift and lambda from the fiber root that lands on the
/// divisor value.
pub fn angle_coordinates(
    model: &SpectralCurveModel,
    divisor: &SpectralDivisor,
    basepoint_x: Complex64,
) -> Result<AngleVector> {
    Ok(Integrator::new(model, divisor, basepoint_x)?.angles())
}

/// Node-by-node trace of the quadrature along each divisor point's path,
/// for CSV emission: (t, x, y, lambda, integrand components).
pub fn trace_paths(
    model: &SpectralCurveModel,
    divisor: &SpectralDivisor,
    basepoint_x: Complex64,
) -> Result<Vec<Vec<TraceRow>>> {
    if model.is_degenerate() {
        return Err(Error::DegenerateModel(
            "angle coordinates need a nondegenerate fiber".into(),
        ));
    }
    let obstacles = x_discriminant_points(model)?;
    let base_lift = model.base().eval_p(basepoint_x).sqrt();
    divisor
        .points()
        .iter()
        .map(|p| {
            let mut rows = Vec::new();
            integrate_one(
                model,
                basepoint_x,
                base_lift,
                &obstacles,
                p,
                ANGLE_QUAD_TOL,
                Some(&mut rows),
            )?;
            Ok(rows)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperelliptic::{default_basepoint, HyperellipticCurve};
    use crate::polyalg::ComplexPoly;
    use crate::sov::sample_divisor;
    use crate::spectral::{build_model, Family, RootSystemSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn random_model(seed: u64) -> SpectralCurveModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(5));
        let flat: [Complex64; 6] = std::array::from_fn(|_| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        build_model(d2(), genus2_curve(), HamiltonianVector::from_flat_so4(flat)).unwrap()
    }

    fn instance(seed: u64) -> (SpectralCurveModel, SpectralDivisor, Complex64) {
        let model = random_model(seed);
        let divisor = sample_divisor(&model, seed).unwrap();
        let obstacles = x_discriminant_points(&model).unwrap();
        let basepoint = default_basepoint(model.base(), &obstacles);
        (model, divisor, basepoint)
    }

    #[test]
    fn integrand_vanishes_where_the_pfaffian_part_does() {
        let model = random_model(2);
        // find an x with H1 + xH2 + x^2 H3 = 0
        let flat = model.hamiltonians().to_flat_so4().unwrap();
        let pf = ComplexPoly::new(vec![flat[0], flat[1], flat[2]]);
        let root = crate::polyalg::companion_roots(&pf).unwrap()[0];
        let pt = model.base().lift_x(root).unwrap()[0];
        // any lambda in the fiber that stays away from R'_lambda = 0
        let fiber = model.lambda_fiber(&pt).unwrap();
        let lam = fiber
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap();
        let v = integrand(&model, 3, lam, &pt).unwrap();
        assert!(v.norm() < 1e-10, "integrand j=1 is {v}");
    }

    #[test]
    fn integrand_quarter_value() {
        // lambda = 1, H4 = H5 = H6 = 0, y = 1, x = 1: numerator lambda^2 x^0,
        // denominator y (4 lambda^3) = 4
        // Build a curve passing through (1, 1): P(1) = 1.
        let p = ComplexPoly::from_real(&[1.0, -1.0, 0.0, 0.0, 0.0, 1.0]);
        let curve = HyperellipticCurve::new(p).unwrap();
        assert!((curve.eval_p(c(1.0, 0.0)) - c(1.0, 0.0)).norm() < 1e-14);
        let h = HamiltonianVector::from_flat_so4([
            c(0.4, 0.0),
            c(0.1, 0.0),
            c(0.2, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
        ]);
        let model = build_model(d2(), curve, h).unwrap();
        let pt = CurvePoint {
            x: c(1.0, 0.0),
            y: c(1.0, 0.0),
        };
        // flatten order: [H4, H5, H6, H1, H2, H3]; j = 0 is dR/dH4
        let v = integrand(&model, 0, c(1.0, 0.0), &pt).unwrap();
        assert!((v - c(0.25, 0.0)).norm() < 1e-14, "got {v}");
    }

    #[test]
    fn integrand_matches_implicit_fiber_derivative() {
        let model = random_model(3);
        let divisor = sample_divisor(&model, 3).unwrap();
        let p = &divisor.points()[0];
        let flat = model.hamiltonians().flatten();
        let eps = 1e-6;
        for j in 0..flat.len() {
            let want = integrand(&model, j, p.lambda, &p.at).unwrap();
            // implicit-function oracle: perturb H_j, re-solve the fiber and
            // track the nearest root
            let mut track = |sign: f64| -> Complex64 {
                let mut f = flat.clone();
                f[j] += c(sign * eps, 0.0);
                let h = model.hamiltonians().from_flatten(&f).unwrap();
                let m = SpectralCurveModel::unchecked(*model.roots(), model.base().clone(), h);
                let fiber = m.lambda_fiber(&p.at).unwrap();
                fiber
                    .into_iter()
                    .min_by(|a, b| (a - p.lambda).norm().total_cmp(&(b - p.lambda).norm()))
                    .unwrap()
            };
            let dlam_dh = (track(1.0) - track(-1.0)) / c(2.0 * eps, 0.0);
            let oracle = -dlam_dh / p.at.y;
            assert!(
                (want - oracle).norm() <= 1e-5 * (1.0 + oracle.norm()),
                "component {j}: {want} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn zero_length_paths_give_zero_angles() {
        let model = random_model(4);
        let curve = model.base();
        let obstacles = x_discriminant_points(&model).unwrap();
        let x0 = default_basepoint(curve, &obstacles);
        let y0 = curve.eval_p(x0).sqrt();
        let pt = CurvePoint { x: x0, y: y0 };
        let fiber = model.lambda_fiber(&pt).unwrap();
        // a single-point divisor sitting exactly at the base lift
        let divisor = SpectralDivisor::new(
            curve,
            vec![SpectralPoint {
                lambda: fiber[1],
                at: pt,
            }],
        )
        .unwrap();
        let angles = angle_coordinates(&model, &divisor, x0).unwrap();
        for v in &angles.phi {
            assert_eq!(*v, c(0.0, 0.0));
        }
    }

    #[test]
    fn forward_backward_path_extension_cancels() {
        let (model, divisor, basepoint) = instance(5);
        let integrator = Integrator::new(&model, &divisor, basepoint).unwrap();
        let dx = c(2e-3, 1e-3);
        let fwd = integrator.extend_point(0, dx).unwrap();
        // walk forward then integrate backward from the moved point
        let moved = fwd.point;
        let back_div = divisor.with_point_replaced(0, moved);
        let integrator2 = Integrator::new(&model, &back_div, basepoint).unwrap();
        let bwd = integrator2.extend_point(0, -dx).unwrap();
        for (a, b) in fwd.dphi.iter().zip(bwd.dphi.iter()) {
            assert!(
                (a + b).norm() <= 1e-8 * (1.0 + a.norm()),
                "extension did not cancel: {a} vs {b}"
            );
        }
    }

    #[test]
    fn angles_are_additive_over_the_divisor() {
        let (model, divisor, basepoint) = instance(6);
        let integrator = Integrator::new(&model, &divisor, basepoint).unwrap();
        let whole = integrator.angles();
        let mut summed = vec![c(0.0, 0.0); whole.phi.len()];
        for i in 0..divisor.len() {
            let single =
                SpectralDivisor::new(model.base(), vec![divisor.points()[i]]).unwrap();
            let phi_i = angle_coordinates(&model, &single, basepoint).unwrap();
            for (s, v) in summed.iter_mut().zip(phi_i.phi.iter()) {
                *s += v;
            }
        }
        for (w, s) in whole.phi.iter().zip(summed.iter()) {
            assert!(
                (w - s).norm() <= 1e-9 * (1.0 + w.norm()),
                "additivity violated: {w} vs {s}"
            );
        }
    }

    #[test]
    fn basepoint_shift_is_a_divisor_independent_constant() {
        // phi is defined modulo periods, so the comparison divisor must use
        // the same sheet selections: build it by continuing each point of
        // the first divisor to a nearby location on its own sheets
        let model = random_model(7);
        let d_a = sample_divisor(&model, 70).unwrap();
        let obstacles = x_discriminant_points(&model).unwrap();
        let oscale = 1.0 + obstacles.iter().map(|o| o.norm()).fold(0.0, f64::max);
        let curve = model.base();
        let mut b_points = Vec::new();
        'points: for (i, p) in d_a.points().iter().enumerate() {
            for attempt in 0..8 {
                let offset =
                    Complex64::from_polar(0.11, 2.1 * i as f64 + 0.7 * attempt as f64);
                let target = p.at.x + offset;
                let seg = XPath::from_waypoints(vec![p.at.x, target], 0.05);
                if obstacles.iter().any(|&o| seg.distance_to(o) < 0.1 * oscale) {
                    continue;
                }
                let y_end =
                    match crate::hyperelliptic::continue_y(curve, &seg, p.at.y) {
                        Ok(y) => y,
                        Err(_) => continue,
                    };
                let lam_end =
                    match crate::spectral::continue_lambda(&model, &seg, p.at.y, p.lambda) {
                        Ok(l) => l,
                        Err(_) => continue,
                    };
                b_points.push(SpectralPoint {
                    lambda: lam_end,
                    at: CurvePoint { x: target, y: y_end },
                });
                continue 'points;
            }
            panic!("could not displace divisor point {i}");
        }
        let d_b = SpectralDivisor::new(curve, b_points).unwrap();

        let x0 = default_basepoint(curve, &obstacles);
        let x1 = x0 * 1.2; // further out along the same exterior ray
        let phi = |d: &SpectralDivisor, bp: Complex64| {
            angle_coordinates(&model, d, bp).unwrap().phi
        };
        let pa0 = phi(&d_a, x0);
        let pa1 = phi(&d_a, x1);
        let pb0 = phi(&d_b, x0);
        let pb1 = phi(&d_b, x1);
        // the difference of differences vanishes when the basepoint shift
        // contributes the same constant for every divisor
        for j in 0..pa0.len() {
            let dd = (pa1[j] - pa0[j]) - (pb1[j] - pb0[j]);
            assert!(
                dd.norm() <= 1e-8 * (1.0 + pa0[j].norm()),
                "component {j}: difference of differences {dd}"
            );
        }
    }

    #[test]
    fn endpoint_derivative_matches_the_integrand() {
        let (model, divisor, basepoint) = instance(8);
        let integrator = Integrator::new(&model, &divisor, basepoint).unwrap();
        for i in 0..divisor.len() {
            let p = &divisor.points()[i];
            let (end_pt, end_lam) = integrator.end_state(i);
            assert!((end_pt.y - p.at.y).norm() <= 1e-7 * (1.0 + p.at.y.norm()));
            assert!((end_lam - p.lambda).norm() <= 1e-7 * (1.0 + p.lambda.norm()));

            let h = 1e-5 * (1.0 + p.at.x.norm());
            let dir = c(0.8, 0.6); // fixed probe direction
            let plus = integrator.extend_point(i, dir * h).unwrap();
            let minus = integrator.extend_point(i, -dir * h).unwrap();
            for j in 0..model.hamiltonians().len() {
                let fd = (plus.dphi[j] - minus.dphi[j]) / (plus.dxtilde - minus.dxtilde);
                let target = -integrand(&model, j, p.lambda, &p.at).unwrap() * p.at.y;
                assert!(
                    (fd - target).norm() <= 1e-5 * (1.0 + target.norm()),
                    "point {i} component {j}: fd {fd} vs {target}"
                );
            }
        }
    }

    #[test]
    fn degenerate_model_is_rejected() {
        let h = HamiltonianVector::from_flat_so4([c(0.0, 0.0); 6]);
        let model = build_model(d2(), genus2_curve(), h).unwrap();
        let curve = genus2_curve();
        let pt = curve.lift_x(c(0.4, 0.2)).unwrap()[0];
        let divisor = SpectralDivisor::new(
            &curve,
            vec![SpectralPoint {
                lambda: c(0.0, 0.0),
                at: pt,
            }],
        )
        .unwrap();
        assert!(matches!(
            angle_coordinates(&model, &divisor, c(4.0, 0.0)),
            Err(Error::DegenerateModel(_))
        ));
    }
}
