//! Closed-form root formulas: stable complex quadratic, Cardano cubic and the
//! Ferrari resolvent-cubic quartic.

use super::ComplexPoly;
use crate::error::{Error, Result};
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative floor below which a leading coefficient is treated as degenerate.
pub const LEADING_COEFF_FLOOR: f64 = 1e-13;

fn sort_lex(roots: &mut [Complex64]) {
    roots.sort_by(|a, b| {
        a.re.total_cmp(&b.re)
            .then_with(|| a.im.total_cmp(&b.im))
    });
}

/// Roots of z^2 + b z + c, computed so the larger-magnitude root is formed
/// without cancellation and the other recovered from the product.
fn monic_quadratic(b: Complex64, c: Complex64) -> [Complex64; 2] {
    let d = (b * b - 4.0 * c).sqrt();
    // pick the sign that grows |b ± d|
    let s = if (b.conj() * d).re >= 0.0 { b + d } else { b - d };
    if s == ZERO {
        return [ZERO, ZERO];
    }
    let r1 = -s / 2.0;
    let r2 = c / r1;
    [r1, r2]
}

/// All three roots of c3 z^3 + c2 z^2 + c1 z + c0 by Cardano's formula with
/// principal branches. The caller guarantees a usable leading coefficient.
pub fn cubic_roots_radicals(
    c0: Complex64,
    c1: Complex64,
    c2: Complex64,
    c3: Complex64,
) -> Result<[Complex64; 3]> {
    let scale = [c0, c1, c2, c3].iter().map(|c| c.norm()).fold(0.0, f64::max);
    if c3.norm() < LEADING_COEFF_FLOOR * scale || scale == 0.0 {
        return Err(Error::DegenerateLeadingCoefficient {
            magnitude: c3.norm(),
            floor: LEADING_COEFF_FLOOR * scale,
        });
    }
    let a = c2 / c3;
    let b = c1 / c3;
    let c = c0 / c3;
    // depress: z = w - a/3
    let off = a / 3.0;
    let p = b - a * a / 3.0;
    let q = c - a * b / 3.0 + 2.0 * a * a * a / 27.0;

    let mut roots = if p == ZERO && q == ZERO {
        [ZERO, ZERO, ZERO]
    } else {
        let d = (q * q / 4.0 + p * p * p / 27.0).sqrt();
        let s_plus = -q / 2.0 + d;
        let s_minus = -q / 2.0 - d;
        let s = if s_plus.norm() >= s_minus.norm() {
            s_plus
        } else {
            s_minus
        };
        let u = s.cbrt();
        let v = if u == ZERO { ZERO } else { -p / (3.0 * u) };
        let omega = Complex64::new(-0.5, 0.75f64.sqrt());
        let omega2 = omega.conj();
        [u + v, omega * u + omega2 * v, omega2 * u + omega * v]
    };
    for r in roots.iter_mut() {
        *r -= off;
    }
    sort_lex(&mut roots);
    Ok(roots)
}

/// All four roots (with multiplicity) of c4 t^4 + c3 t^3 + c2 t^2 + c1 t + c0
/// via the resolvent cubic. Among the three cubic roots the one of largest
/// magnitude is used, which keeps the subsequent square roots away from
/// cancellation near double roots. Roots are polished by two Newton steps and
/// returned in lexicographic (re, im) order.
pub fn quartic_roots_radicals(
    c0: Complex64,
    c1: Complex64,
    c2: Complex64,
    c3: Complex64,
    c4: Complex64,
) -> Result<[Complex64; 4]> {
    let scale = [c0, c1, c2, c3, c4]
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    if c4.norm() < LEADING_COEFF_FLOOR * scale || scale == 0.0 {
        return Err(Error::DegenerateLeadingCoefficient {
            magnitude: c4.norm(),
            floor: LEADING_COEFF_FLOOR * scale,
        });
    }
    let a = c3 / c4;
    let b = c2 / c4;
    let c = c1 / c4;
    let d = c0 / c4;

    // depress: t = u - a/4 gives u^4 + p u^2 + q u + r
    let a2 = a * a;
    let p = b - 3.0 * a2 / 8.0;
    let q = c - a * b / 2.0 + a2 * a / 8.0;
    let r = d - a * c / 4.0 + a2 * b / 16.0 - 3.0 * a2 * a2 / 256.0;

    // resolvent cubic y^3 + p y^2 + (p^2/4 - r) y - q^2/8
    let ys = cubic_roots_radicals(
        -q * q / 8.0,
        p * p / 4.0 - r,
        p,
        Complex64::new(1.0, 0.0),
    )?;
    let y = ys
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap();

    let u_scale = p.norm().sqrt() + q.norm().cbrt() + r.norm().sqrt().sqrt();
    let mut us = [ZERO; 4];
    if (2.0 * y).norm().sqrt() <= 1e-14 * (1.0 + u_scale) {
        // p, q, r all negligible or exactly biquadratic at the origin
        let zs = monic_quadratic(p, r);
        let u0 = zs[0].sqrt();
        let u1 = zs[1].sqrt();
        us = [u0, -u0, u1, -u1];
    } else {
        let s = (2.0 * y).sqrt();
        let qs = q / (2.0 * s);
        // u^2 + p/2 + y = ±(s u - q/(2s))
        let q1 = monic_quadratic(-s, p / 2.0 + y + qs);
        let q2 = monic_quadratic(s, p / 2.0 + y - qs);
        us[0] = q1[0];
        us[1] = q1[1];
        us[2] = q2[0];
        us[3] = q2[1];
    }

    let quarter = a / 4.0;
    let mut roots = [ZERO; 4];
    for (t, &u) in roots.iter_mut().zip(us.iter()) {
        *t = u - quarter;
    }

    // two Newton steps on the original quartic
    let eval = |t: Complex64| ((c4 * t + c3) * t + c2) * t * t + c1 * t + c0;
    let eval_d = |t: Complex64| ((4.0 * c4 * t + 3.0 * c3) * t + 2.0 * c2) * t + c1;
    for t in roots.iter_mut() {
        for _ in 0..2 {
            let dp = eval_d(*t);
            if dp.norm() < 1e-14 * scale * (1.0 + t.norm()).powi(3) {
                break;
            }
            *t -= eval(*t) / dp;
        }
    }
    sort_lex(&mut roots);
    Ok(roots)
}

/// Radical-formula roots of a polynomial of effective degree at most four.
/// Leading coefficients within `LEADING_COEFF_FLOOR` of zero (relative to
/// coefficient scale) are dropped before dispatch, so a degenerate quartic
/// degrades to the cubic, quadratic or linear formula.
pub fn roots_in_radicals(p: &ComplexPoly) -> Result<Vec<Complex64>> {
    let trimmed = p.trim_relative(LEADING_COEFF_FLOOR);
    if trimmed.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let c = |k: usize| trimmed.coeff(k);
    match trimmed.degree() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![-c(0) / c(1)]),
        2 => {
            let mut rs = monic_quadratic(c(1) / c(2), c(0) / c(2)).to_vec();
            sort_lex(&mut rs);
            Ok(rs)
        }
        3 => Ok(cubic_roots_radicals(c(0), c(1), c(2), c(3))?.to_vec()),
        4 => Ok(quartic_roots_radicals(c(0), c(1), c(2), c(3), c(4))?.to_vec()),
        d => Err(Error::Numerical(format!(
            "no radical formula for degree {d}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{companion_roots, max_paired_distance};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn residual_ok(roots: &[Complex64], coeffs: &[Complex64]) {
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let deg = coeffs.len() - 1;
        for &t in roots {
            let mut v = ZERO;
            for &ck in coeffs.iter().rev() {
                v = v * t + ck;
            }
            let tol = 1e-10 * scale * (1.0f64.max(t.norm())).powi(deg as i32);
            assert!(
                v.norm() <= tol,
                "residual {:.3e} above {:.3e} at root {t}",
                v.norm(),
                tol
            );
        }
    }

    #[test]
    fn quadruple_root_at_origin() {
        let roots = quartic_roots_radicals(ZERO, ZERO, ZERO, ZERO, c(1.0, 0.0)).unwrap();
        for r in roots {
            assert!(r.norm() < 1e-10);
        }
    }

    #[test]
    fn biquadratic_with_integer_roots() {
        // (t^2-1)(t^2-4) = t^4 - 5t^2 + 4
        let coeffs = [c(4.0, 0.0), ZERO, c(-5.0, 0.0), ZERO, c(1.0, 0.0)];
        let roots =
            quartic_roots_radicals(coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4]).unwrap();
        residual_ok(&roots, &coeffs);
        let want = [c(-2.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)];
        assert!(max_paired_distance(&roots, &want) < 1e-10);
        let oracle = companion_roots(&ComplexPoly::new(coeffs.to_vec())).unwrap();
        assert!(max_paired_distance(&roots, &oracle) < 1e-8);
    }

    #[test]
    fn one_two_three_four() {
        let coeffs = [
            c(24.0, 0.0),
            c(-50.0, 0.0),
            c(35.0, 0.0),
            c(-10.0, 0.0),
            c(1.0, 0.0),
        ];
        let roots =
            quartic_roots_radicals(coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4]).unwrap();
        residual_ok(&roots, &coeffs);
        let want = [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        assert!(max_paired_distance(&roots, &want) < 1e-9);
        let oracle = companion_roots(&ComplexPoly::new(coeffs.to_vec())).unwrap();
        assert!(max_paired_distance(&roots, &oracle) < 1e-8);
    }

    #[test]
    fn degenerate_leading_coefficient_is_rejected() {
        let err = quartic_roots_radicals(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), ZERO, c(1e-20, 0.0));
        assert!(matches!(
            err,
            Err(Error::DegenerateLeadingCoefficient { .. })
        ));
    }

    #[test]
    fn cubic_with_known_roots() {
        // (t-1)(t-i)(t+2) = t^3 + (1-i) t^2 + (-2-i) t + 2i
        let roots =
            cubic_roots_radicals(c(0.0, 2.0), c(-2.0, -1.0), c(1.0, -1.0), c(1.0, 0.0)).unwrap();
        let want = [c(1.0, 0.0), c(0.0, 1.0), c(-2.0, 0.0)];
        assert!(max_paired_distance(&roots, &want) < 1e-10);
    }

    #[test]
    fn radical_chain_degrades_degree() {
        // effectively linear: 1e-20 t^4 + 2 t - 4
        let p = ComplexPoly::new(vec![c(-4.0, 0.0), c(2.0, 0.0), ZERO, ZERO, c(1e-20, 0.0)]);
        let roots = roots_in_radicals(&p).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn random_quartics_match_companion_oracle() {
        // deterministic LCG so the test is reproducible
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        for _ in 0..200 {
            let coeffs: Vec<Complex64> = (0..4).map(|_| c(next(), next())).collect();
            let mut coeffs = coeffs;
            coeffs.push(c(1.0, 0.0) + c(0.2 * next(), 0.2 * next()));
            let radical =
                quartic_roots_radicals(coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4])
                    .unwrap();
            let oracle = companion_roots(&ComplexPoly::new(coeffs.clone())).unwrap();
            assert!(
                max_paired_distance(&radical, &oracle) < 1e-8,
                "radical/companion mismatch for {coeffs:?}"
            );
        }
    }
}
