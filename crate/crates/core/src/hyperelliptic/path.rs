//! Piecewise-linear paths in the x-plane, obstacle-avoiding planning and
//! analytic continuation of y along them.

use super::{CurvePoint, HyperellipticCurve, ON_CURVE_TOL};
use crate::error::{Error, Result};
use num_complex::Complex64;

/// Fraction of the branch-point diameter used as the default clearance.
pub const CLEARANCE_FRACTION: f64 = 1e-2;

/// Detour arcs run at this multiple of the clearance radius so their
/// polyline chords still respect the clearance.
const ARC_RADIUS_FACTOR: f64 = 1.25;

/// Interior waypoints per detour arc (entry + interior + exit <= 16).
const ARC_INTERIOR_POINTS: usize = 14;

/// A piecewise-linear path in the x-plane together with the clearance its
/// segments keep from every registered obstacle.
#[derive(Debug, Clone)]
pub struct XPath {
    pub waypoints: Vec<Complex64>,
    pub clearance: f64,
}

impl XPath {
    /// Builds a path from explicit waypoints without obstacle checking.
    /// The clearance field is then the caller's promise, not a verified fact.
    pub fn from_waypoints(waypoints: Vec<Complex64>, clearance: f64) -> Self {
        assert!(!waypoints.is_empty(), "path needs at least one waypoint");
        XPath { waypoints, clearance }
    }

    pub fn start(&self) -> Complex64 {
        self.waypoints[0]
    }

    pub fn end(&self) -> Complex64 {
        *self.waypoints.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        self.waypoints.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn reversed(&self) -> XPath {
        let mut waypoints = self.waypoints.clone();
        waypoints.reverse();
        XPath {
            waypoints,
            clearance: self.clearance,
        }
    }

    /// Concatenation; the end of `self` must coincide with the start of `other`.
    pub fn concat(&self, other: &XPath) -> XPath {
        assert!(
            (self.end() - other.start()).norm() < 1e-12,
            "paths do not share an endpoint"
        );
        let mut waypoints = self.waypoints.clone();
        waypoints.extend_from_slice(&other.waypoints[1..]);
        XPath {
            waypoints,
            clearance: self.clearance.min(other.clearance),
        }
    }

    /// Minimum distance from any segment to the given point.
    pub fn distance_to(&self, p: Complex64) -> f64 {
        if self.waypoints.len() == 1 {
            return (self.waypoints[0] - p).norm();
        }
        self.segments()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn point_segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a) * ab.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn dedupe_obstacles(points: &[Complex64]) -> Vec<Complex64> {
    let scale = 1.0 + points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let mut out: Vec<Complex64> = Vec::new();
    for &p in points {
        if !out.iter().any(|&q| (p - q).norm() <= 1e-12 * scale) {
            out.push(p);
        }
    }
    out
}

/// Default clearance: a small fraction of the branch-point diameter, shrunk
/// when registered obstacles sit closer together than detour arcs require.
fn effective_clearance(curve: &HyperellipticCurve, obstacles: &[Complex64]) -> f64 {
    let mut c = CLEARANCE_FRACTION * curve.branch_diameter();
    let mut min_gap = f64::INFINITY;
    for i in 0..obstacles.len() {
        for j in (i + 1)..obstacles.len() {
            min_gap = min_gap.min((obstacles[i] - obstacles[j]).norm());
        }
    }
    if min_gap.is_finite() {
        c = c.min(0.4 * min_gap);
    }
    c
}

/// Plans a piecewise-linear path from `x_from` to `x_to` that keeps the
/// default clearance from all branch points and caller obstacles. The
/// straight segment is returned when it already clears everything; otherwise
/// each violating obstacle is detoured by a circular arc of at most 16
/// waypoints.
pub fn plan_path(
    curve: &HyperellipticCurve,
    x_from: Complex64,
    x_to: Complex64,
    obstacles: &[Complex64],
) -> Result<XPath> {
    let mut all: Vec<Complex64> = curve.branch_points().to_vec();
    all.extend_from_slice(obstacles);
    let all = dedupe_obstacles(&all);
    let clearance = effective_clearance(curve, &all);
    plan_path_with_clearance(x_from, x_to, &all, clearance)
}

/// Planner core with an explicit obstacle set and clearance.
pub fn plan_path_with_clearance(
    x_from: Complex64,
    x_to: Complex64,
    obstacles: &[Complex64],
    clearance: f64,
) -> Result<XPath> {
    for &o in obstacles {
        if (x_from - o).norm() <= clearance {
            return Err(Error::PathBlocked(x_from, clearance));
        }
        if (x_to - o).norm() <= clearance {
            return Err(Error::PathBlocked(x_to, clearance));
        }
    }
    let mut waypoints = vec![x_from, x_to];
    if (x_from - x_to).norm() == 0.0 {
        return Ok(XPath {
            waypoints: vec![x_from],
            clearance,
        });
    }

    let mut insertions = 0usize;
    let budget = 4 * obstacles.len().max(1);
    let mut seg = 0usize;
    while seg + 1 < waypoints.len() {
        let a = waypoints[seg];
        let b = waypoints[seg + 1];
        // nearest violating obstacle by projection parameter along the segment
        let mut hit: Option<(f64, Complex64)> = None;
        for &o in obstacles {
            let d = point_segment_distance(o, a, b);
            if d < clearance * 0.999 {
                let t = (((o - a) * (b - a).conj()).re / (b - a).norm_sqr()).clamp(0.0, 1.0);
                if hit.map_or(true, |(tb, _)| t < tb) {
                    hit = Some((t, o));
                }
            }
        }
        match hit {
            None => seg += 1,
            Some((_, o)) => {
                if insertions >= budget {
                    return Err(Error::Numerical(
                        "path planner failed to clear obstacles within its insertion budget"
                            .into(),
                    ));
                }
                insertions += 1;
                let detour = detour_around(a, b, o, clearance);
                waypoints.splice(seg + 1..seg + 1, detour);
                // re-scan from the current segment: the lead-in may now
                // violate a different obstacle
            }
        }
    }
    Ok(XPath { waypoints, clearance })
}

/// Waypoints (strictly between `a` and `b`) walking around `o` on a circle of
/// radius `ARC_RADIUS_FACTOR * clearance`, on the side away from the obstacle.
fn detour_around(a: Complex64, b: Complex64, o: Complex64, clearance: f64) -> Vec<Complex64> {
    let r = ARC_RADIUS_FACTOR * clearance;
    let u = (b - a) / (b - a).norm();
    let w = (o - a) / u; // segment frame: re = along, im = offset
    let s = w.im;
    let side = if s >= 0.0 { 1.0 } else { -1.0 };

    let entry = if (a - o).norm() <= r {
        o + (a - o) / (a - o).norm() * r
    } else {
        let half = (r * r - s * s).max(0.0).sqrt();
        a + u * (w.re - half)
    };
    let exit = if (b - o).norm() <= r {
        o + (b - o) / (b - o).norm() * r
    } else {
        let half = (r * r - s * s).max(0.0).sqrt();
        a + u * (w.re + half)
    };

    let alpha = (entry - o).arg();
    let beta = (exit - o).arg();
    let far = (-Complex64::i() * side * u).arg();
    let tau = std::f64::consts::TAU;
    let ccw = (beta - alpha).rem_euclid(tau);
    let far_off = (far - alpha).rem_euclid(tau);
    let sweep = if far_off <= ccw { ccw } else { ccw - tau };

    let mut pts = Vec::with_capacity(ARC_INTERIOR_POINTS + 2);
    pts.push(entry);
    for k in 1..=ARC_INTERIOR_POINTS {
        let theta = alpha + sweep * k as f64 / (ARC_INTERIOR_POINTS + 1) as f64;
        pts.push(o + Complex64::from_polar(r, theta));
    }
    pts.push(exit);
    pts
}

/// A base point in the x-plane well outside the branch-point configuration,
/// at distance at least one (and at least half the diameter) from every
/// branch point and obstacle.
pub fn default_basepoint(curve: &HyperellipticCurve, obstacles: &[Complex64]) -> Complex64 {
    let branch = curve.branch_points();
    let centroid = branch.iter().sum::<Complex64>() / branch.len() as f64;
    let spread = branch
        .iter()
        .map(|b| (b - centroid).norm())
        .fold(0.0, f64::max);
    let radius = spread + 1.0f64.max(0.5 * curve.branch_diameter());
    let mut all: Vec<Complex64> = branch.to_vec();
    all.extend_from_slice(obstacles);

    let mut best = centroid + Complex64::new(radius, 0.0);
    let mut best_gap = f64::NEG_INFINITY;
    for k in 0..16 {
        let theta = std::f64::consts::TAU * k as f64 / 16.0;
        let cand = centroid + Complex64::from_polar(radius, theta);
        let gap = all
            .iter()
            .map(|&o| (cand - o).norm())
            .fold(f64::INFINITY, f64::min);
        if gap > best_gap {
            best_gap = gap;
            best = cand;
        }
    }
    best
}

/// One continuation hop along a straight segment, bisecting until the nearer
/// square root is unambiguous.
pub(crate) fn continue_y_hop(
    curve: &HyperellipticCurve,
    x_from: Complex64,
    y_from: Complex64,
    x_to: Complex64,
    depth: u32,
) -> Result<Complex64> {
    let s = curve.eval_p(x_to).sqrt();
    let d_plus = (s - y_from).norm();
    let d_minus = (s + y_from).norm();
    let (chosen, d_chosen, d_other) = if d_plus <= d_minus {
        (s, d_plus, d_minus)
    } else {
        (-s, d_minus, d_plus)
    };
    if d_chosen <= 0.5 * d_other {
        return Ok(chosen);
    }
    if depth == 0 {
        return Err(Error::ContinuationStalled(1e-12));
    }
    let mid = (x_from + x_to) / 2.0;
    let y_mid = continue_y_hop(curve, x_from, y_from, mid, depth - 1)?;
    continue_y_hop(curve, mid, y_mid, x_to, depth - 1)
}

/// Analytic continuation of y along the whole path, starting from a value
/// consistent with the curve at the path start. Steps are bisected until the
/// nearer square root is decisively closer to the predictor.
pub fn continue_y(
    curve: &HyperellipticCurve,
    path: &XPath,
    y_start: Complex64,
) -> Result<Complex64> {
    let p0 = curve.eval_p(path.start());
    let defect = (y_start * y_start - p0).norm();
    if defect > ON_CURVE_TOL * (1.0 + p0.norm()) {
        return Err(Error::PointNotOnCurve {
            x: path.start(),
            y: y_start,
            defect,
        });
    }
    let mut y = y_start;
    for (a, b) in path.segments() {
        if (b - a).norm() == 0.0 {
            continue;
        }
        // initial mesh of 8 steps per segment; hops bisect on their own
        let n = 8;
        let mut x_prev = a;
        for k in 1..=n {
            let x_next = a + (b - a) * (k as f64 / n as f64);
            y = continue_y_hop(curve, x_prev, y, x_next, 48)?;
            x_prev = x_next;
        }
    }
    Ok(y)
}

/// Plans a path on the curve itself: from the base lift (x0, y0) to the
/// target point, inserting one loop around a branch point when the planned
/// x-path alone would land on the opposite sheet. Returns the path and
/// whether a sheet-correcting loop was inserted.
pub fn plan_curve_path(
    curve: &HyperellipticCurve,
    x0: Complex64,
    y0: Complex64,
    target: &CurvePoint,
    obstacles: &[Complex64],
) -> Result<(XPath, bool)> {
    let direct = plan_path(curve, x0, target.x, obstacles)?;
    let y_end = continue_y(curve, &direct, y0)?;
    let ytol = ON_CURVE_TOL * (1.0 + target.y.norm());
    if (y_end - target.y).norm() <= ytol.max(1e-7 * (1.0 + target.y.norm())) {
        return Ok((direct, false));
    }
    if (y_end + target.y).norm() > ytol.max(1e-7 * (1.0 + target.y.norm())) {
        return Err(Error::Numerical(format!(
            "continued y {} matches neither sheet of target {}",
            y_end, target.y
        )));
    }

    // wrong sheet: loop once around the most isolated branch point
    let mut all: Vec<Complex64> = curve.branch_points().to_vec();
    all.extend_from_slice(obstacles);
    let all = dedupe_obstacles(&all);
    let clearance = direct.clearance;

    let mut best: Option<(f64, Complex64)> = None;
    for &b in curve.branch_points() {
        let isolation = all
            .iter()
            .filter(|&&o| (o - b).norm() > 1e-12)
            .map(|&o| (o - b).norm())
            .fold(f64::INFINITY, f64::min)
            .min((x0 - b).norm())
            .min((target.x - b).norm());
        if best.map_or(true, |(iso, _)| isolation > iso) {
            best = Some((isolation, b));
        }
    }
    let (isolation, b) = best.unwrap();
    let ring_radius = (0.4 * isolation).min(8.0 * clearance);
    if ring_radius < ARC_RADIUS_FACTOR * clearance {
        return Err(Error::Numerical(
            "no branch point isolated enough for a sheet-correcting loop".into(),
        ));
    }
    let p_ring = b + (x0 - b) / (x0 - b).norm() * ring_radius;

    let path_a = plan_path(curve, x0, p_ring, obstacles)?;
    let path_b = plan_path(curve, p_ring, target.x, obstacles)?;
    // the detour through the ring point may already wind differently from
    // the direct path; the loop multiplies the sheet by -1, so exactly one
    // of the two compositions lands on the requested lift
    let without_loop = path_a.concat(&path_b);
    let y_without = continue_y(curve, &without_loop, y0)?;
    let tol = ytol.max(1e-7 * (1.0 + target.y.norm()));
    if (y_without - target.y).norm() <= tol {
        return Ok((without_loop, false));
    }
    let mut loop_pts = Vec::with_capacity(17);
    let theta0 = (p_ring - b).arg();
    for k in 0..=16 {
        let theta = theta0 + std::f64::consts::TAU * k as f64 / 16.0;
        loop_pts.push(b + Complex64::from_polar(ring_radius, theta));
    }
    let loop_path = XPath::from_waypoints(loop_pts, clearance);
    let full = path_a.concat(&loop_path).concat(&path_b);

    let y_check = continue_y(curve, &full, y0)?;
    if (y_check - target.y).norm() > tol {
        return Err(Error::Numerical(
            "sheet-correcting loop failed to land on the target lift".into(),
        ));
    }
    Ok((full, true))
}
