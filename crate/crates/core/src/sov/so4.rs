//! Radical-solvable elimination for the so(4) spectral system: six equations
//! lambda_i^4 + lambda_i^2 (H4 + x_i H5 + x_i^2 H6) + (H1 + x_i H2 + x_i^2 H3)^2 = 0
//! reduce to one quartic in a single ratio variable.

use super::SpectralDivisor;
use crate::error::{Error, Result};
use crate::polyalg::ComplexPoly;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Symmetric 3x3 quadratic form v^T M v in the Pfaffian coefficients.
#[derive(Debug, Clone, Copy)]
pub struct QForm3 {
    pub m: [[Complex64; 3]; 3],
}

impl QForm3 {
    fn zero() -> Self {
        QForm3 { m: [[ZERO; 3]; 3] }
    }

    fn from_row_outer(row: [Complex64; 3]) -> Self {
        let mut m = [[ZERO; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = row[i] * row[j];
            }
        }
        QForm3 { m }
    }

    fn add_scaled(&mut self, other: &QForm3, s: Complex64) {
        for i in 0..3 {
            for j in 0..3 {
                self.m[i][j] += other.m[i][j] * s;
            }
        }
    }

    fn scaled(&self, s: Complex64) -> QForm3 {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn eval(&self, v: [Complex64; 3]) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..3 {
            for j in 0..3 {
                acc += self.m[i][j] * v[i] * v[j];
            }
        }
        acc
    }

    /// Coefficient of v_k^2.
    pub fn square_coefficient(&self, k: usize) -> Complex64 {
        self.m[k][k]
    }

    /// Coefficient of the v_i v_j term, i != j.
    pub fn cross_coefficient(&self, i: usize, j: usize) -> Complex64 {
        self.m[i][j] + self.m[j][i]
    }

    pub fn max_magnitude(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Assembled,
    Diagonalized,
}

/// Snapshot of the three quadratic-form equations forms[t](v) = rhs[t]
/// together with the affine dependence of (H4, H5, H6) on the squared
/// Pfaffian values from the linear elimination.
#[derive(Debug, Clone)]
pub struct EliminationState {
    /// Divisor indices of the equations used to eliminate H4..H6 (largest
    /// |lambda| first, ties broken by index).
    pub selected: [usize; 3],
    /// The other three divisor indices, ascending.
    pub remaining: [usize; 3],
    /// w = w0 + sum_s wq[s] * q_{selected[s]}, q_j = (H1 + x_j H2 + x_j^2 H3)^2.
    pub w0: [Complex64; 3],
    pub wq: [[Complex64; 3]; 3],
    pub forms: [QForm3; 3],
    pub rhs: [Complex64; 3],
    pub stage: Stage,
}

/// One elimination run under one variable-role assignment, retaining every
/// intermediate stage for inspection and back-substitution.
#[derive(Debug, Clone)]
pub struct So4Elimination {
    pub assembled: EliminationState,
    pub diagonalized: EliminationState,
    /// Homogeneous quadratic forms after the right sides are subtracted out;
    /// reduced[0] has no v2^2 term and reduced[1] no v1^2 term.
    pub reduced: [QForm3; 2],
    /// Quartic in the ratio b = v2/v0 of the working coordinates: H3/H1 in
    /// the plain role, H1/H3 in the swapped role.
    pub quartic: ComplexPoly,
    pub swapped: bool,
    /// Magnitude scale of the reduced forms; both vanishing relative to the
    /// assembled scale signals the v = 0 stratum.
    pub reduced_scale: f64,
    xs: [Complex64; 6],
}

fn basis_row(x: Complex64, swapped: bool) -> [Complex64; 3] {
    if swapped {
        [x * x, x, ONE]
    } else {
        [ONE, x, x * x]
    }
}

pub(crate) fn solve3(m: [[Complex64; 3]; 3], b: [Complex64; 3]) -> Result<[Complex64; 3]> {
    let mut a = m;
    let mut rhs = b;
    let scale = a.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        if a[pivot_row][col].norm() <= 1e-12 * scale {
            return Err(Error::DegenerateDivisor(
                "linear elimination of H4..H6 is rank deficient".into(),
            ));
        }
        a.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    Ok([rhs[0] / a[0][0], rhs[1] / a[1][1], rhs[2] / a[2][2]])
}

/// Runs the elimination for one role assignment. `swapped = true` exchanges
/// the roles of H1 and H3, so the eventual division is by H3 instead of H1.
pub fn so4_eliminate(divisor: &SpectralDivisor, swapped: bool) -> Result<So4Elimination> {
    let pts = divisor.points();
    if pts.len() != 6 {
        return Err(Error::DegenerateDivisor(format!(
            "so(4) elimination needs 6 points, got {}",
            pts.len()
        )));
    }
    let xs: [Complex64; 6] = std::array::from_fn(|i| pts[i].at.x);

    let lambda_scale = 1.0 + pts.iter().map(|p| p.lambda.norm()).fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&i, &j| {
        pts[j]
            .lambda
            .norm()
            .total_cmp(&pts[i].lambda.norm())
            .then(i.cmp(&j))
    });
    let selected = [order[0], order[1], order[2]];
    let mut remaining = [order[3], order[4], order[5]];
    remaining.sort_unstable();
    if pts[selected[2]].lambda.norm() <= 1e-12 * lambda_scale {
        return Err(Error::DegenerateDivisor(
            "fewer than three points with nonzero lambda".into(),
        ));
    }

    // stage 1: divide the selected equations by lambda^2 and solve the 3x3
    // linear system for (H4, H5, H6) as an affine function of the q values
    let m = std::array::from_fn(|s| basis_row(xs[selected[s]], false));
    let lam2: [Complex64; 3] =
        std::array::from_fn(|s| pts[selected[s]].lambda * pts[selected[s]].lambda);
    let w0 = solve3(m, [-lam2[0], -lam2[1], -lam2[2]])?;
    let mut wq = [[ZERO; 3]; 3];
    for s in 0..3 {
        let mut e = [ZERO; 3];
        e[s] = -ONE / lam2[s];
        wq[s] = solve3(m, e)?;
    }

    // stage 2: substitute into the remaining equations; each becomes a
    // quadratic form in the working Pfaffian coordinates
    let mut forms = [QForm3::zero(); 3];
    let mut rhs = [ZERO; 3];
    for (t_idx, &t) in remaining.iter().enumerate() {
        let bt = basis_row(xs[t], false);
        let lt2 = pts[t].lambda * pts[t].lambda;
        let mut f = QForm3::from_row_outer(basis_row(xs[t], swapped));
        for (s_idx, &s) in selected.iter().enumerate() {
            let c_ts = lt2 * (bt[0] * wq[s_idx][0] + bt[1] * wq[s_idx][1] + bt[2] * wq[s_idx][2]);
            f.add_scaled(&QForm3::from_row_outer(basis_row(xs[s], swapped)), c_ts);
        }
        forms[t_idx] = f;
        rhs[t_idx] = -lt2 * lt2 - lt2 * (bt[0] * w0[0] + bt[1] * w0[1] + bt[2] * w0[2]);
    }
    let assembled = EliminationState {
        selected,
        remaining,
        w0,
        wq,
        forms,
        rhs,
        stage: Stage::Assembled,
    };

    // stage 3: Gauss-Jordan with partial pivoting on the square-term
    // coefficients, carrying the full forms and right sides along
    let mut dforms = forms;
    let mut drhs = rhs;
    let sq_scale = dforms
        .iter()
        .map(|f| f.max_magnitude())
        .fold(0.0, f64::max);
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&i, &j| {
                dforms[i]
                    .square_coefficient(col)
                    .norm()
                    .total_cmp(&dforms[j].square_coefficient(col).norm())
            })
            .unwrap();
        if dforms[pivot_row].square_coefficient(col).norm() <= 1e-13 * sq_scale {
            return Err(Error::DegenerateDivisor(
                "square-coefficient matrix is rank deficient".into(),
            ));
        }
        dforms.swap(col, pivot_row);
        drhs.swap(col, pivot_row);
        let pivot = dforms[col].square_coefficient(col);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = dforms[row].square_coefficient(col) / pivot;
            let sub = dforms[col].scaled(f);
            dforms[row].add_scaled(&sub, -ONE);
            drhs[row] -= f * drhs[col];
            dforms[row].m[col][col] = ZERO;
        }
    }
    let diagonalized = EliminationState {
        selected,
        remaining,
        w0,
        wq,
        forms: dforms,
        rhs: drhs,
        stage: Stage::Diagonalized,
    };

    // stages 4-5: eliminate the right sides by cross-scaled subtraction.
    // Rescaling rows to a common right side and subtracting would divide by
    // rhs values that may vanish; the cross-scaled form is equivalent where
    // both are defined and regular everywhere.
    //   reduced[0] = rhs[0] * eq_1 - rhs[1] * eq_0   (v1^2 and v0^2, no v2^2)
    //   reduced[1] = rhs[0] * eq_2 - rhs[2] * eq_0   (v2^2 and v0^2, no v1^2)
    let mut reduced = [QForm3::zero(); 2];
    for k in 0..2 {
        let mut e = dforms[k + 1].scaled(drhs[0]);
        e.add_scaled(&dforms[0], -drhs[k + 1]);
        reduced[k] = e;
    }
    let reduced_scale = reduced
        .iter()
        .map(|f| f.max_magnitude())
        .fold(0.0, f64::max);

    // stages 6-7: divide by v0^2 (the H1 != 0 branch in the plain role),
    // express a = v1/v0 from reduced[1] which is linear in it, substitute
    // into reduced[0] and clear denominators: a quartic in b = v2/v0
    let r0 = &reduced[0];
    let r1 = &reduced[1];
    let num = ComplexPoly::new(vec![
        -r1.square_coefficient(0),
        -r1.cross_coefficient(0, 2),
        -r1.square_coefficient(2),
    ]);
    let den = ComplexPoly::new(vec![
        r1.cross_coefficient(0, 1),
        r1.cross_coefficient(1, 2),
    ]);
    let alpha1 = r0.square_coefficient(1);
    let lin_a = ComplexPoly::new(vec![
        r0.cross_coefficient(0, 1),
        r0.cross_coefficient(1, 2),
    ]);
    let const_b = ComplexPoly::new(vec![
        r0.square_coefficient(0),
        r0.cross_coefficient(0, 2),
    ]);
    let quartic = &(&(&num * &num).scale(alpha1) + &(&(&lin_a * &num) * &den))
        + &(&(&const_b * &den) * &den);

    Ok(So4Elimination {
        assembled,
        diagonalized,
        reduced,
        quartic,
        swapped,
        reduced_scale,
        xs,
    })
}

impl So4Elimination {
    /// Back-substitutes one quartic root b = v2/v0 through stages 7 -> 6 ->
    /// 2 -> 1 to a full candidate (H1..H6). Returns None when this branch
    /// divides by a vanishing quantity; genuine candidates lost this way are
    /// recovered by the other role assignment.
    pub fn back_substitute(&self, b: Complex64) -> Option<[Complex64; 6]> {
        let r1 = &self.reduced[1];
        let den = r1.cross_coefficient(0, 1) + r1.cross_coefficient(1, 2) * b;
        let scale = self.reduced_scale * (1.0 + b.norm());
        if den.norm() <= 1e-12 * scale {
            return None;
        }
        let num = -(r1.square_coefficient(0)
            + r1.cross_coefficient(0, 2) * b
            + r1.square_coefficient(2) * b * b);
        self.candidate_from_ratios(num / den, b)
    }

    /// Recovers the overall scale v0 from the best-conditioned diagonal
    /// equation, undoes the role permutation and completes to (H1..H6).
    pub fn candidate_from_ratios(&self, a: Complex64, b: Complex64) -> Option<[Complex64; 6]> {
        let ratios = [ONE, a, b];
        let mut best: Option<(f64, Complex64, Complex64)> = None;
        for t in 0..3 {
            let denom = self.diagonalized.forms[t].eval(ratios);
            if best.map_or(true, |(d, _, _)| denom.norm() > d) {
                best = Some((denom.norm(), denom, self.diagonalized.rhs[t]));
            }
        }
        let (dnorm, denom, rhs) = best?;
        let dscale = self
            .diagonalized
            .forms
            .iter()
            .map(|f| f.max_magnitude())
            .fold(0.0, f64::max)
            * (1.0 + a.norm() + b.norm()).powi(2);
        if dnorm <= 1e-12 * dscale {
            return None;
        }
        let v0 = (rhs / denom).sqrt();
        let mut u = [v0, v0 * a, v0 * b];
        if self.swapped {
            u.swap(0, 2);
        }
        Some(self.complete(u))
    }

    /// Completes a Pfaffian-block vector (in the unswapped H1..H3 order) to
    /// the full candidate via the stage-1 affine relation.
    pub fn complete(&self, v: [Complex64; 3]) -> [Complex64; 6] {
        let mut w = self.assembled.w0;
        for (s_idx, &s) in self.assembled.selected.iter().enumerate() {
            let x = self.xs[s];
            let lin = v[0] + x * v[1] + x * x * v[2];
            let q = lin * lin;
            for k in 0..3 {
                w[k] += self.assembled.wq[s_idx][k] * q;
            }
        }
        [v[0], v[1], v[2], w[0], w[1], w[2]]
    }

    /// The reduced pair vanished identically: every equation is satisfied by
    /// v = 0 with w determined linearly.
    pub fn is_identically_reduced_to_zero(&self) -> bool {
        let base = self
            .diagonalized
            .forms
            .iter()
            .map(|f| f.max_magnitude())
            .fold(0.0, f64::max)
            * (1.0
                + self
                    .diagonalized
                    .rhs
                    .iter()
                    .map(|c| c.norm())
                    .fold(0.0, f64::max));
        self.reduced_scale <= 1e-10 * base.max(f64::MIN_POSITIVE)
    }
}
