//! Adaptive panel-doubling Gauss quadrature along piecewise-linear paths,
//! threading an analytic-continuation state through the ordered nodes.

use super::path::{continue_y_hop, XPath};
use super::HyperellipticCurve;
use crate::error::{Error, Result};
use num_complex::Complex64;

/// Default relative quadrature tolerance (times path length times the
/// largest sampled integrand magnitude).
pub const QUAD_REL_TOL: f64 = 1e-10;

/// Hard panel budget per path.
pub const MAX_PANELS: u64 = 1 << 20;

/// 7-point Gauss-Legendre rule mapped to [0, 1].
const GL_NODES: [f64; 7] = [
    0.025446043828620757,
    0.12923440720030277,
    0.29707742431130146,
    0.5,
    0.7029225756886985,
    0.8707655927996972,
    0.9745539561713792,
];
const GL_WEIGHTS: [f64; 7] = [
    0.06474248308443485,
    0.13985269574463833,
    0.1909150252525595,
    0.20897959183673468,
    0.1909150252525595,
    0.13985269574463833,
    0.06474248308443485,
];

/// Continuation state carried along a path while integrating.
pub(crate) trait SheetState: Clone {
    fn advance(&mut self, x_to: Complex64) -> Result<()>;
    fn y(&self) -> Complex64;
    fn lambda(&self) -> Option<Complex64> {
        None
    }
}

/// One recorded quadrature node, for CSV traces.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: f64,
    pub x: Complex64,
    pub y: Complex64,
    pub lambda: Option<Complex64>,
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub(crate) struct QuadOptions {
    pub rel_tol: f64,
    pub max_panels: u64,
    /// When set, integrate with exactly this many panels per segment and no
    /// adaptive refinement. Finite-difference probes use a schedule frozen
    /// from the unperturbed configuration so the quadrature error varies
    /// smoothly with the inputs.
    pub fixed_schedule: Option<Vec<u32>>,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: QUAD_REL_TOL,
            max_panels: MAX_PANELS,
            fixed_schedule: None,
        }
    }
}

pub(crate) struct QuadOutcome<S> {
    pub values: Vec<Complex64>,
    pub end_state: S,
    /// Panels used per segment, reusable as a frozen schedule.
    pub schedule: Vec<u32>,
    pub trace: Vec<TraceRow>,
}

/// Integrates a vector-valued integrand along the path. `f` is evaluated at
/// ordered Gauss nodes with the state continued hop by hop; refinement
/// doubles the panel count per segment until the embedded estimate (the
/// difference between successive levels) meets the tolerance.
pub(crate) fn integrate_path<S: SheetState>(
    path: &XPath,
    state0: S,
    dim: usize,
    f: &mut dyn FnMut(&S, Complex64, &mut [Complex64]) -> Result<()>,
    opts: &QuadOptions,
    want_trace: bool,
) -> Result<QuadOutcome<S>> {
    let segments: Vec<(Complex64, Complex64, f64)> = path
        .segments()
        .filter(|(a, b)| (b - a).norm() > 0.0)
        .map(|(a, b)| (a, b, (b - a).norm()))
        .collect();
    let zero = Complex64::new(0.0, 0.0);
    let mut totals = vec![zero; dim];
    let mut schedule = Vec::with_capacity(segments.len());
    let mut trace = Vec::new();

    if segments.is_empty() {
        return Ok(QuadOutcome {
            values: totals,
            end_state: state0,
            schedule,
            trace,
        });
    }

    let total_len: f64 = segments.iter().map(|s| s.2).sum();
    let mut max_f = 0.0f64;
    let mut panels_spent: u64 = 0;
    let mut state = state0;
    let mut len_before = 0.0f64;
    let mut buf = vec![zero; dim];

    for (seg_idx, &(a, b, len)) in segments.iter().enumerate() {
        let fixed = opts
            .fixed_schedule
            .as_ref()
            .map(|s| *s.get(seg_idx).unwrap_or(&1));

        let mut panels: u32 = fixed.unwrap_or(1);
        let mut prev: Option<Vec<Complex64>> = None;
        let (seg_value, end_state, used) = loop {
            panels_spent += panels as u64;
            if panels_spent > opts.max_panels {
                return Err(Error::QuadratureNotConverged(opts.max_panels));
            }
            let mut acc = vec![zero; dim];
            let mut walk = state.clone();
            let mut rows = Vec::new();
            for p in 0..panels {
                for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                    let t = (p as f64 + node) / panels as f64;
                    let x = a + (b - a) * t;
                    walk.advance(x)?;
                    f(&walk, x, &mut buf)?;
                    let mag = buf.iter().map(|v| v.norm()).fold(0.0, f64::max);
                    max_f = max_f.max(mag);
                    let w = weight / panels as f64;
                    for (av, bv) in acc.iter_mut().zip(buf.iter()) {
                        *av += bv * w;
                    }
                    if want_trace {
                        rows.push(TraceRow {
                            t: (len_before + t * len) / total_len,
                            x,
                            y: walk.y(),
                            lambda: walk.lambda(),
                            values: buf.clone(),
                        });
                    }
                }
            }
            walk.advance(b)?;
            let value: Vec<Complex64> = acc.iter().map(|v| v * (b - a)).collect();

            let accepted = if fixed.is_some() {
                true
            } else if let Some(prev_value) = &prev {
                let err = value
                    .iter()
                    .zip(prev_value.iter())
                    .map(|(v, p)| (v - p).norm())
                    .fold(0.0, f64::max);
                let tol_seg = opts.rel_tol * len * max_f.max(f64::MIN_POSITIVE);
                let val_scale = 1.0 + value.iter().map(|v| v.norm()).fold(0.0, f64::max);
                err <= tol_seg || err <= 1e-15 * val_scale
            } else {
                false
            };
            if accepted {
                if want_trace {
                    trace.append(&mut rows);
                }
                break (value, walk, panels);
            }
            prev = Some(value);
            panels *= 2;
        };
        for (tv, sv) in totals.iter_mut().zip(seg_value.iter()) {
            *tv += sv;
        }
        schedule.push(used);
        state = end_state;
        len_before += len;
    }

    Ok(QuadOutcome {
        values: totals,
        end_state: state,
        schedule,
        trace,
    })
}

/// Sheet state that tracks only the base-curve lift y.
#[derive(Clone)]
pub(crate) struct YState<'a> {
    pub curve: &'a HyperellipticCurve,
    pub x: Complex64,
    pub y: Complex64,
}

impl SheetState for YState<'_> {
    fn advance(&mut self, x_to: Complex64) -> Result<()> {
        if (x_to - self.x).norm() == 0.0 {
            return Ok(());
        }
        self.y = continue_y_hop(self.curve, self.x, self.y, x_to, 48)?;
        self.x = x_to;
        Ok(())
    }

    fn y(&self) -> Complex64 {
        self.y
    }
}

/// The incomplete abelian integral of x^k dx / y along the path, with y
/// continued from `y_start`. Only holomorphic differentials are accepted
/// (k <= g - 1); k = 0 yields the canonical coordinate.
pub fn abelian_integral(
    curve: &HyperellipticCurve,
    path: &XPath,
    y_start: Complex64,
    k: usize,
) -> Result<Complex64> {
    if k + 1 > curve.genus() {
        return Err(Error::Numerical(format!(
            "differential index {} exceeds g - 1 = {}",
            k,
            curve.genus() - 1
        )));
    }
    abelian_integral_with(curve, path, y_start, k, &QuadOptions::default()).map(|(v, _)| v)
}

pub(crate) fn abelian_integral_with(
    curve: &HyperellipticCurve,
    path: &XPath,
    y_start: Complex64,
    k: usize,
    opts: &QuadOptions,
) -> Result<(Complex64, Complex64)> {
    let p0 = curve.eval_p(path.start());
    let defect = (y_start * y_start - p0).norm();
    if defect > super::ON_CURVE_TOL * (1.0 + p0.norm()) {
        return Err(Error::PointNotOnCurve {
            x: path.start(),
            y: y_start,
            defect,
        });
    }
    let state = YState {
        curve,
        x: path.start(),
        y: y_start,
    };
    let mut f = |s: &YState, x: Complex64, out: &mut [Complex64]| {
        out[0] = x.powu(k as u32) / s.y;
        Ok(())
    };
    let outcome = integrate_path(path, state, 1, &mut f, opts, false)?;
    Ok((outcome.values[0], outcome.end_state.y))
}
