//! Polynomial roots as eigenvalues of the companion matrix.

use super::ComplexPoly;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// All complex roots of `p`, with multiplicity, as eigenvalues of the
/// (monicized) companion matrix, each polished by Newton iteration and
/// returned in lexicographic (re, im) order. Exact zero roots are deflated
/// first so that e.g. `t^4` reports four exact zeros.
pub fn companion_roots(p: &ComplexPoly) -> Result<Vec<Complex64>> {
    if p.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let mut coeffs: Vec<Complex64> = p.coeffs().to_vec();
    let mut roots = Vec::with_capacity(p.degree());

    // deflate exact roots at the origin
    while coeffs.len() > 1 && coeffs[0] == Complex64::new(0.0, 0.0) {
        roots.push(Complex64::new(0.0, 0.0));
        coeffs.remove(0);
    }
    let n = coeffs.len() - 1;
    if n > 0 {
        let lead = coeffs[n];
        let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for i in 1..n {
            m[(i, i - 1)] = Complex64::new(1.0, 0.0);
        }
        for i in 0..n {
            m[(i, n - 1)] = -coeffs[i] / lead;
        }
        let eig = m
            .eigenvalues()
            .ok_or_else(|| Error::Numerical("companion eigenvalue iteration failed".into()))?;

        let poly = ComplexPoly::new(coeffs);
        let dpoly = poly.derivative();
        let scale = poly.max_coeff_magnitude();
        for &e in eig.iter() {
            let mut t = e;
            for _ in 0..3 {
                let d = dpoly.eval(t);
                if d.norm() < 1e-14 * scale * (1.0 + t.norm()).powi(n as i32 - 1) {
                    break;
                }
                let step = poly.eval(t) / d;
                if !step.re.is_finite() || !step.im.is_finite() {
                    break;
                }
                t -= step;
            }
            roots.push(t);
        }
    }

    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then_with(|| a.im.total_cmp(&b.im)));
    Ok(roots)
}

/// Maximum pointwise distance between two equal-length root multisets under
/// the assignment that minimizes it. Brute-force over permutations; intended
/// for the small multisets produced by fiber and quartic solves.
pub fn max_paired_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len(), "root multisets must have equal length");
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    assert!(n <= 8, "permutation matching limited to 8 roots");
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut idx, 0, &mut |perm| {
        let worst = a
            .iter()
            .zip(perm.iter().map(|&j| b[j]))
            .map(|(&x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        if worst < best {
            best = worst;
        }
    });
    best
}

fn permute(idx: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == idx.len() {
        visit(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permute(idx, k + 1, visit);
        idx.swap(k, i);
    }
}
