//! Verification of canonicity: the canonical chart (lambda_i, x-tilde_i), a
//! finite-difference symplectic test for the map to (H_j, phi_j), and the
//! conjugacy identity residuals.

use crate::angle::Integrator;
use crate::error::{Error, Result};
use crate::hyperelliptic::{abelian_integral, plan_curve_path, HyperellipticCurve};
use crate::sov::{newton_refine, solve_so4_radicals, NewtonOptions, SpectralDivisor};
use crate::spectral::{
    build_model, Family, HamiltonianVector, RootSystemSpec, SpectralCurveModel, SpectralPoint,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

/// One divisor point in the canonical chart.
#[derive(Debug, Clone, Copy)]
pub struct CanonicalPoint {
    pub lambda: Complex64,
    pub x_tilde: Complex64,
}

/// The Darboux half-chart (lambda_i, x-tilde_i) with its base point.
#[derive(Debug, Clone)]
pub struct CanonicalChart {
    pub pairs: Vec<CanonicalPoint>,
    pub basepoint: Complex64,
}

/// Brings the divisor into the canonical chart: x-tilde_i is the integral of
/// dx / y from the base lift to (x_i, y_i) along a planned path.
pub fn canonical_chart(
    curve: &HyperellipticCurve,
    divisor: &SpectralDivisor,
    basepoint_x: Complex64,
) -> Result<CanonicalChart> {
    let y0 = curve.eval_p(basepoint_x).sqrt();
    let pairs: Result<Vec<CanonicalPoint>> = divisor
        .points()
        .iter()
        .map(|p| {
            let (path, _) = plan_curve_path(curve, basepoint_x, y0, &p.at, &[])?;
            let x_tilde = abelian_integral(curve, &path, y0, 0)?;
            Ok(CanonicalPoint {
                lambda: p.lambda,
                x_tilde,
            })
        })
        .collect();
    Ok(CanonicalChart {
        pairs: pairs?,
        basepoint: basepoint_x,
    })
}

/// Outcome of the symplectic finite-difference test at a step and its half.
#[derive(Debug, Clone, Copy)]
pub struct SymplecticReport {
    pub fd_step: f64,
    pub defect: f64,
    pub defect_half: f64,
    /// defect / defect_half; second-order central differences put this near 4.
    pub ratio: f64,
}

/// Entrywise residuals of the separation identity, with the scale that the
/// acceptance thresholds are measured against.
#[derive(Debug, Clone)]
pub struct ConjugacyReport {
    /// entries[i][j] = |FD d(phi_j)/d(x-tilde_i) + R'_{H_j} / R'_lambda|.
    pub entries: Vec<Vec<f64>>,
    pub scale: f64,
}

impl ConjugacyReport {
    pub fn max_entry(&self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }
}

/// Fixed context for the forward map (lambda, x-tilde) -> (H, phi): the base
/// integrator freezes paths, sheet selections and quadrature schedules so
/// every probe evaluates a smooth deterministic function.
struct ForwardMap<'a> {
    integrator: Integrator<'a>,
    divisor: &'a SpectralDivisor,
    roots: RootSystemSpec,
    curve: &'a HyperellipticCurve,
    h0: &'a HamiltonianVector,
    base_xtilde: Vec<Complex64>,
}

impl ForwardMap<'_> {
    /// Inverts the abelian coordinate increment: finds dx with
    /// integral_{x_i}^{x_i + dx} dx / y = delta, by Newton with derivative y.
    fn invert_xtilde(&self, i: usize, delta: Complex64) -> Result<(Complex64, SpectralPoint)> {
        if delta.norm() == 0.0 {
            let ext = self.integrator.extend_point(i, Complex64::new(0.0, 0.0))?;
            return Ok((Complex64::new(0.0, 0.0), ext.point));
        }
        let p = &self.divisor.points()[i];
        let mut dx = delta * p.at.y;
        let mut last = None;
        for _ in 0..16 {
            let ext = self.integrator.extend_point(i, dx)?;
            let resid = ext.dxtilde - delta;
            last = Some((dx, ext));
            if resid.norm() <= 1e-13 * (1.0 + delta.norm()) {
                break;
            }
            dx -= resid * last.as_ref().unwrap().1.point.at.y;
        }
        let (dx, ext) = last.unwrap();
        let check = (ext.dxtilde - delta).norm();
        if check > 1e-11 * (1.0 + delta.norm()) {
            return Err(Error::Numerical(format!(
                "x-tilde inversion stalled at residual {check:.3e}"
            )));
        }
        Ok((dx, ext.point))
    }

    /// Evaluates the full map for perturbed inputs. `dlambda` and `dxtilde`
    /// are per-point complex increments.
    fn eval(&self, dlambda: &[Complex64], dxtilde: &[Complex64]) -> Result<Vec<f64>> {
        let n = self.divisor.len();
        let mut moved = Vec::with_capacity(n);
        for i in 0..n {
            let (_, pt) = self.invert_xtilde(i, dxtilde[i])?;
            moved.push(SpectralPoint {
                lambda: self.divisor.points()[i].lambda + dlambda[i],
                at: pt.at,
            });
        }
        let mut new_divisor = self.divisor.clone();
        for (i, p) in moved.iter().enumerate() {
            new_divisor = new_divisor.with_point_replaced(i, *p);
        }
        let opts = NewtonOptions {
            tol: 1e-13,
            max_iter: 60,
            cond_limit: 1e14,
        };
        let (h, _) = newton_refine(&self.roots, self.curve, &new_divisor, self.h0, &opts)?;
        let (phi, _) = self.integrator.angles_with(&h, &moved)?;

        let h_flat = h.flatten();
        let mut out = Vec::with_capacity(4 * n);
        out.extend(h_flat.iter().map(|c| c.re));
        out.extend(h_flat.iter().map(|c| c.im));
        out.extend(phi.iter().map(|c| c.re));
        out.extend(phi.iter().map(|c| c.im));
        Ok(out)
    }
}

fn symplectic_pairing(n: usize) -> DMatrix<f64> {
    // coordinates ordered (Re a_1..a_n, Im a_1..a_n, Re b_1..b_n, Im b_1..b_n)
    // with the real part of sum_i da_i ^ db_i as the form
    let mut j = DMatrix::zeros(4 * n, 4 * n);
    for i in 0..n {
        j[(i, 2 * n + i)] = 1.0;
        j[(2 * n + i, i)] = -1.0;
        j[(n + i, 3 * n + i)] = -1.0;
        j[(3 * n + i, n + i)] = 1.0;
    }
    j
}

fn fd_jacobian(map: &ForwardMap<'_>, fd_step: f64) -> Result<DMatrix<f64>> {
    let n = map.divisor.len();
    let dim = 4 * n;
    let zero = Complex64::new(0.0, 0.0);

    let columns: Result<Vec<Vec<f64>>> = (0..dim)
        .into_par_iter()
        .map(|k| {
            let mut probe = |sign: f64| -> Result<Vec<f64>> {
                let mut dlambda = vec![zero; n];
                let mut dxtilde = vec![zero; n];
                let i = k % n;
                let val = match k / n {
                    0 => {
                        dlambda[i] = Complex64::new(sign * fd_step, 0.0);
                        &mut dlambda
                    }
                    1 => {
                        dlambda[i] = Complex64::new(0.0, sign * fd_step);
                        &mut dlambda
                    }
                    2 => {
                        dxtilde[i] = Complex64::new(sign * fd_step, 0.0);
                        &mut dxtilde
                    }
                    _ => {
                        dxtilde[i] = Complex64::new(0.0, sign * fd_step);
                        &mut dxtilde
                    }
                };
                let _ = val;
                map.eval(&dlambda, &dxtilde)
            };
            let plus = probe(1.0)?;
            let minus = probe(-1.0)?;
            Ok(plus
                .iter()
                .zip(minus.iter())
                .map(|(p, m)| (p - m) / (2.0 * fd_step))
                .collect())
        })
        .collect();
    let columns = columns?;

    let mut m = DMatrix::zeros(dim, dim);
    for (k, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            m[(r, k)] = *v;
        }
    }
    Ok(m)
}

fn defect_at(map: &ForwardMap<'_>, fd_step: f64) -> Result<f64> {
    let n = map.divisor.len();
    let m = fd_jacobian(map, fd_step)?;
    let j = symplectic_pairing(n);
    let defect_matrix = m.transpose() * &j * &m - &j;
    Ok(defect_matrix.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Assembles the finite-difference Jacobian of (H, phi) with respect to
/// (lambda, x-tilde) in the real form and reports the entrywise norm of
/// M^T J M - J at the given step and at half the step.
pub fn symplectic_defect_report(
    curve: &HyperellipticCurve,
    roots: &RootSystemSpec,
    divisor: &SpectralDivisor,
    basepoint_x: Complex64,
    fd_step: f64,
    h0: &HamiltonianVector,
) -> Result<SymplecticReport> {
    let h0 = h0.canonicalized();
    let model = build_model(*roots, curve.clone(), h0.clone())?;
    let integrator = Integrator::new(&model, divisor, basepoint_x)?;
    let base_xtilde: Vec<Complex64> = (0..divisor.len()).map(|i| integrator.x_tilde(i)).collect();
    let map = ForwardMap {
        integrator,
        divisor,
        roots: *roots,
        curve,
        h0: &h0,
        base_xtilde,
    };
    let defect = defect_at(&map, fd_step)?;
    let defect_half = defect_at(&map, fd_step / 2.0)?;
    let ratio = defect / defect_half.max(f64::MIN_POSITIVE);
    Ok(SymplecticReport {
        fd_step,
        defect,
        defect_half,
        ratio,
    })
}

/// The symplectic defect for a divisor whose Hamiltonians are recovered by
/// the radical solver (so(4)); errors as FDUnstable when halving the step
/// changes the defect by more than a factor of ten.
pub fn symplectic_defect(
    curve: &HyperellipticCurve,
    roots: &RootSystemSpec,
    divisor: &SpectralDivisor,
    basepoint_x: Complex64,
    fd_step: f64,
) -> Result<f64> {
    if !(roots.family == Family::D && roots.rank == 2) {
        return Err(Error::Numerical(
            "automatic Hamiltonian recovery is only wired for so(4); \
             use symplectic_defect_report with an explicit seed"
                .into(),
        ));
    }
    let set = solve_so4_radicals(curve, divisor)?;
    let h0 = &set.best().unwrap().h;
    let report = symplectic_defect_report(curve, roots, divisor, basepoint_x, fd_step, h0)?;
    if report.ratio > 10.0 || report.ratio < 0.1 {
        return Err(Error::FDUnstable(report.ratio));
    }
    Ok(report.defect)
}

/// Residuals of the separation identity: moving point i along its path
/// direction, the finite-difference derivative of phi_j with respect to
/// x-tilde_i must cancel R'_{H_j} / R'_lambda at the point.
pub fn conjugacy_residual(
    model: &SpectralCurveModel,
    divisor: &SpectralDivisor,
    basepoint_x: Complex64,
) -> Result<ConjugacyReport> {
    let integrator = Integrator::new(model, divisor, basepoint_x)?;
    let n_h = model.hamiltonians().len();
    let mut entries = Vec::with_capacity(divisor.len());
    let mut scale = 1.0f64;
    for (i, p) in divisor.points().iter().enumerate() {
        scale = scale.max(model.eval_scale(p.lambda, &p.at));
        let h = 1e-5 * (1.0 + p.at.x.norm());
        let dir = Complex64::new(0.8, 0.6);
        let plus = integrator.extend_point(i, dir * h)?;
        let minus = integrator.extend_point(i, -dir * h)?;
        let dxt = plus.dxtilde - minus.dxtilde;
        let (d_lambda, d_h) = model.partials(p.lambda, &p.at);
        let mut row = Vec::with_capacity(n_h);
        for j in 0..n_h {
            let fd = (plus.dphi[j] - minus.dphi[j]) / dxt;
            row.push((fd + d_h[j] / d_lambda).norm());
        }
        entries.push(row);
    }
    Ok(ConjugacyReport { entries, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperelliptic::{continue_y, default_basepoint, XPath};
    use crate::polyalg::ComplexPoly;
    use crate::sov::sample_divisor;
    use crate::spectral::x_discriminant_points;
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

    fn instance(seed: u64) -> (SpectralCurveModel, SpectralDivisor, Complex64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(97).wrapping_add(13));
        let flat: [Complex64; 6] = std::array::from_fn(|_| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let model =
            build_model(d2(), genus2_curve(), HamiltonianVector::from_flat_so4(flat)).unwrap();
        let divisor = sample_divisor(&model, seed).unwrap();
        let obstacles = x_discriminant_points(&model).unwrap();
        let basepoint = default_basepoint(model.base(), &obstacles);
        (model, divisor, basepoint)
    }

    #[test]
    fn chart_at_the_basepoint_is_zero() {
        let curve = genus2_curve();
        let x0 = default_basepoint(&curve, &[]);
        let y0 = curve.eval_p(x0).sqrt();
        let pt = crate::hyperelliptic::CurvePoint { x: x0, y: y0 };
        let divisor = SpectralDivisor::new(
            &curve,
            vec![SpectralPoint {
                lambda: c(1.0, 0.0),
                at: pt,
            }],
        )
        .unwrap();
        let chart = canonical_chart(&curve, &divisor, x0).unwrap();
        assert_eq!(chart.pairs[0].x_tilde, c(0.0, 0.0));
        assert_eq!(chart.pairs[0].lambda, c(1.0, 0.0));
    }

    #[test]
    fn chart_is_additive_along_concatenated_paths() {
        let curve = genus2_curve();
        let x0 = default_basepoint(&curve, &[]);
        let y0 = curve.eval_p(x0).sqrt();
        let mid = c(0.9, 0.9);
        let end = c(0.4, -0.6);
        let p1 = XPath::from_waypoints(vec![x0, mid], 0.1);
        let i1 = abelian_integral(&curve, &p1, y0, 0).unwrap();
        let y_mid = continue_y(&curve, &p1, y0).unwrap();
        let p2 = XPath::from_waypoints(vec![mid, end], 0.1);
        let i2 = abelian_integral(&curve, &p2, y_mid, 0).unwrap();
        let whole = abelian_integral(&curve, &p1.concat(&p2), y0, 0).unwrap();
        assert!((whole - (i1 + i2)).norm() <= 1e-9);
    }

    #[test]
    fn chart_derivative_is_reciprocal_lift() {
        // moving the endpoint by dx changes x-tilde by dx / y + O(dx^2)
        let (model, divisor, basepoint) = instance(31);
        let integrator = Integrator::new(&model, &divisor, basepoint).unwrap();
        for (i, p) in divisor.points().iter().enumerate() {
            let h = 1e-5 * (1.0 + p.at.x.norm());
            let plus = integrator.extend_point(i, c(h, 0.0)).unwrap();
            let minus = integrator.extend_point(i, c(-h, 0.0)).unwrap();
            let fd = (plus.dxtilde - minus.dxtilde) / c(2.0 * h, 0.0);
            let want = 1.0 / p.at.y;
            assert!(
                (fd - want).norm() <= 1e-5 * (1.0 + want.norm()),
                "point {i}: {fd} vs {want}"
            );
        }
    }

    #[test]
    fn conjugacy_identity_holds_on_random_instances() {
        for seed in [41u64, 42] {
            let (model, divisor, basepoint) = instance(seed);
            let report = conjugacy_residual(&model, &divisor, basepoint).unwrap();
            assert!(
                report.max_entry() <= 1e-5 * report.scale,
                "seed {seed}: max entry {:.3e} vs scale {:.3e}",
                report.max_entry(),
                report.scale
            );
        }
    }

    #[test]
    fn conjugacy_entry_at_vanishing_numerator() {
        // where the Pfaffian part vanishes the j = 1 numerator is zero and
        // the entry reduces to the bare FD derivative, which must be small
        let (model, divisor, basepoint) = instance(43);
        let report = conjugacy_residual(&model, &divisor, basepoint).unwrap();
        for row in &report.entries {
            // flatten order [H4, H5, H6, H1, H2, H3]: index 3 is dR/dH1
            assert!(row[3] <= 1e-4 * report.scale);
        }
    }

    #[test]
    fn symplectic_defect_is_small_and_second_order() {
        let (model, divisor, basepoint) = instance(44);
        let report = symplectic_defect_report(
            model.base(),
            &d2(),
            &divisor,
            basepoint,
            1e-5,
            model.hamiltonians(),
        )
        .unwrap();
        assert!(
            report.defect <= 1e-3,
            "defect {:.3e} too large",
            report.defect
        );
        assert!(
            report.ratio >= 2.0 && report.ratio <= 8.0,
            "halving ratio {:.2} outside the second-order band",
            report.ratio
        );
    }

    #[test]
    fn defect_is_invariant_under_divisor_relabeling() {
        let (model, divisor, basepoint) = instance(45);
        let h0 = model.hamiltonians();
        let d1 = defect_at(
            &ForwardMap {
                integrator: Integrator::new(&model, &divisor, basepoint).unwrap(),
                divisor: &divisor,
                roots: d2(),
                curve: model.base(),
                h0,
                base_xtilde: Vec::new(),
            },
            1e-5,
        )
        .unwrap();
        let mut pts = divisor.points().to_vec();
        pts.swap(0, 3);
        pts.swap(1, 5);
        let shuffled = SpectralDivisor::new(model.base(), pts).unwrap();
        let d2_val = defect_at(
            &ForwardMap {
                integrator: Integrator::new(&model, &shuffled, basepoint).unwrap(),
                divisor: &shuffled,
                roots: d2(),
                curve: model.base(),
                h0,
                base_xtilde: Vec::new(),
            },
            1e-5,
        )
        .unwrap();
        assert!(
            (d1 - d2_val).abs() <= 1e-10 + 1e-6 * d1,
            "defect changed under relabeling: {d1:.6e} vs {d2_val:.6e}"
        );
    }

    #[test]
    fn hamiltonian_blocks_match_implicit_differentiation() {
        let (model, divisor, basepoint) = instance(46);
        let h0 = model.hamiltonians();
        let n = divisor.len();
        let map = ForwardMap {
            integrator: Integrator::new(&model, &divisor, basepoint).unwrap(),
            divisor: &divisor,
            roots: d2(),
            curve: model.base(),
            h0,
            base_xtilde: Vec::new(),
        };
        let fd_step = 1e-5;
        // dH blocks with respect to Re(lambda_i) via the map
        let zero = c(0.0, 0.0);
        for i in 0..n {
            let mut dl = vec![zero; n];
            dl[i] = c(fd_step, 0.0);
            let plus = map.eval(&dl, &vec![zero; n]).unwrap();
            dl[i] = c(-fd_step, 0.0);
            let minus = map.eval(&dl, &vec![zero; n]).unwrap();
            let dh_fd: Vec<Complex64> = (0..n)
                .map(|j| {
                    c(
                        (plus[j] - minus[j]) / (2.0 * fd_step),
                        (plus[n + j] - minus[n + j]) / (2.0 * fd_step),
                    )
                })
                .collect();

            // oracle: (dR/dH) dH = -R'_lambda e_i
            let mut jac = DMatrix::from_element(n, n, zero);
            let mut rhs = nalgebra::DVector::from_element(n, zero);
            for (k, p) in divisor.points().iter().enumerate() {
                let (d_lam, d_h) = model.partials(p.lambda, &p.at);
                for (j, v) in d_h.iter().enumerate() {
                    jac[(k, j)] = *v;
                }
                if k == i {
                    rhs[k] = -d_lam;
                }
            }
            let sol = jac.lu().solve(&rhs).unwrap();
            for j in 0..n {
                assert!(
                    (dh_fd[j] - sol[j]).norm() <= 1e-5 * (1.0 + sol[j].norm()),
                    "dH_{j}/dlambda_{i}: fd {} vs implicit {}",
                    dh_fd[j],
                    sol[j]
                );
            }
        }
    }
}

#[cfg(test)]
mod debug_match {
    use super::*;
    use crate::polyalg::ComplexPoly;
    use crate::sov::{sample_divisor, SpectralDivisor};
    use crate::spectral::*;
    use crate::hyperelliptic::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 { Complex64::new(re, im) }

    #[test]
    fn debug_match41() {
        let seed = 41u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(97).wrapping_add(13));
        let flat: [Complex64; 6] = std::array::from_fn(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let curve = HyperellipticCurve::new(ComplexPoly::from_real(&[-1.0, -1.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        let spec = RootSystemSpec::new(Family::D, 2).unwrap();
        let model = build_model(spec, curve.clone(), HamiltonianVector::from_flat_so4(flat)).unwrap();
        let divisor = sample_divisor(&model, seed).unwrap();
        let obstacles = x_discriminant_points(&model).unwrap();
        let basepoint = default_basepoint(model.base(), &obstacles);
        let y0 = curve.eval_p(basepoint).sqrt();
        let base_pt = CurvePoint { x: basepoint, y: y0 };
        let fiber = model.lambda_fiber(&base_pt).unwrap();
        for (i, p) in divisor.points().iter().enumerate() {
            let (path, looped) = plan_curve_path(&curve, basepoint, y0, &p.at, &obstacles).unwrap();
            let mind = obstacles.iter().map(|&o| path.distance_to(o)).fold(f64::INFINITY, f64::min);
            eprintln!("point {i}: x {:.4} lambda {:.6} |looped {looped} wp {} clear {:.4} mind {:.4}", p.at.x, p.lambda, path.waypoints.len(), path.clearance, mind);
            for (k, &root) in fiber.iter().enumerate() {
                match continue_lambda(&model, &path, y0, root) {
                    Ok(e) => eprintln!("   root{k} -> {:.8} (miss {:.3e})", e, (e - p.lambda).norm()),
                    Err(err) => eprintln!("   root{k} -> ERR {err}"),
                }
            }
        }
    }
}
