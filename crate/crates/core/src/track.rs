//! Reference tracks: arc-length parameterized paths, a segment-based
//! generator (straights, arcs, clothoids) with a piecewise-linear speed
//! profile, and a CSV loader for recorded centerlines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default arc-length resampling step, m.
pub const DEFAULT_DS: f64 = 0.5;

/// Integration substep for generating curved geometry, m.
const GEN_SUBSTEP: f64 = 0.125;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("cannot read track file: {0}")]
    Io(String),
    #[error("bad track header {found:?}, expected \"x_m,y_m,v_mps\" with optional \",psi_rad\"")]
    BadHeader { found: String },
    #[error("row {row}: expected {expected} numeric cells, found {found}")]
    BadRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: cell {cell:?} is not a number")]
    BadCell { row: usize, cell: String },
    #[error("row {row}: duplicate of the previous point")]
    DuplicatePoint { row: usize },
    #[error("track needs at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("invalid track spec: {0}")]
    BadSpec(String),
    #[error("reference speed must be positive everywhere, got {v} at s = {s}")]
    BadSpeed { s: f64, v: f64 },
    #[error("path too short after resampling ({0} points)")]
    TooShort(usize),
    #[error("heading/curvature inconsistent with the point geometry at s = {s}: {detail}")]
    Inconsistent { s: f64, detail: String },
}

/// One resampled path point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    /// Arc length from the start, m.
    pub s: f64,
    pub x: f64,
    pub y: f64,
    /// Tangent heading, rad, unwrapped (continuous along the path).
    pub heading: f64,
    /// Signed curvature, 1/m, positive turning left.
    pub curvature: f64,
    /// Reference speed, m/s.
    pub v_ref: f64,
}

/// Interpolated path quantities at an arbitrary arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
    pub v_ref: f64,
    /// Slope of the speed profile, (m/s)/m, by central difference.
    pub dv_ref_ds: f64,
}

/// Result of projecting a position onto the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest path point.
    pub s: f64,
    /// Signed lateral offset, m, positive left of the path tangent.
    pub d: f64,
    /// Path heading at the projection, rad.
    pub heading: f64,
}

/// Arc-length parameterized reference path on a uniform grid.
#[derive(Debug, Clone)]
pub struct RefPath {
    ds: f64,
    points: Vec<PathPoint>,
    dv_ds: Vec<f64>,
    /// Recorded yaw reference from a CSV 4th column, if present. Not used
    /// for geometry.
    psi_ref: Option<Vec<f64>>,
}

impl RefPath {
    /// Builds a path from already-uniform samples with analytic heading and
    /// curvature, cross-checking both against finite differences of the
    /// point geometry.
    pub fn from_analytic(ds: f64, points: Vec<PathPoint>) -> Result<Self, TrackError> {
        let path = Self::assemble(ds, points, None)?;
        path.check_consistency()?;
        Ok(path)
    }

    /// Builds a path from raw `(x, y, v)` polyline points: resamples to a
    /// uniform arc-length grid and derives heading and curvature by central
    /// finite differences.
    pub fn from_xy_v(
        raw: &[(f64, f64, f64)],
        psi: Option<&[f64]>,
        ds: f64,
    ) -> Result<Self, TrackError> {
        if raw.len() < 2 {
            return Err(TrackError::TooShort(raw.len()));
        }
        // chord arc length of the input polyline
        let mut arc = Vec::with_capacity(raw.len());
        let mut acc = 0.0;
        arc.push(0.0);
        for i in 1..raw.len() {
            let dx = raw[i].0 - raw[i - 1].0;
            let dy = raw[i].1 - raw[i - 1].1;
            acc += (dx * dx + dy * dy).sqrt();
            arc.push(acc);
        }
        let total = acc;
        let n_out = (total / ds).floor() as usize + 1;
        if n_out < 4 {
            return Err(TrackError::TooShort(n_out));
        }
        let psi_unwrapped = psi.map(unwrap_angles);
        let mut xs = Vec::with_capacity(n_out);
        let mut ys = Vec::with_capacity(n_out);
        let mut vs = Vec::with_capacity(n_out);
        let mut psis = psi.map(|_| Vec::with_capacity(n_out));
        let mut seg = 0;
        for k in 0..n_out {
            let target = k as f64 * ds;
            while seg + 2 < arc.len() && arc[seg + 1] < target {
                seg += 1;
            }
            let span = (arc[seg + 1] - arc[seg]).max(1e-300);
            let w = ((target - arc[seg]) / span).clamp(0.0, 1.0);
            xs.push(raw[seg].0 + w * (raw[seg + 1].0 - raw[seg].0));
            ys.push(raw[seg].1 + w * (raw[seg + 1].1 - raw[seg].1));
            vs.push(raw[seg].2 + w * (raw[seg + 1].2 - raw[seg].2));
            if let (Some(out), Some(p)) = (psis.as_mut(), psi_unwrapped.as_ref()) {
                out.push(p[seg] + w * (p[seg + 1] - p[seg]));
            }
        }
        // headings by central difference, one-sided at the ends, unwrapped
        let n = xs.len();
        let mut heading = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            heading.push((ys[b] - ys[a]).atan2(xs[b] - xs[a]));
        }
        let heading = unwrap_angles(&heading);
        // curvature as the arc-length derivative of the unwrapped heading
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let curvature = if i == 0 {
                (heading[1] - heading[0]) / ds
            } else if i == n - 1 {
                (heading[n - 1] - heading[n - 2]) / ds
            } else {
                (heading[i + 1] - heading[i - 1]) / (2.0 * ds)
            };
            points.push(PathPoint {
                s: i as f64 * ds,
                x: xs[i],
                y: ys[i],
                heading: heading[i],
                curvature,
                v_ref: vs[i],
            });
        }
        Self::assemble(ds, points, psis)
    }

    fn assemble(
        ds: f64,
        points: Vec<PathPoint>,
        psi_ref: Option<Vec<f64>>,
    ) -> Result<Self, TrackError> {
        if points.len() < 4 {
            return Err(TrackError::TooShort(points.len()));
        }
        for p in &points {
            if !(p.v_ref > 0.0) {
                return Err(TrackError::BadSpeed { s: p.s, v: p.v_ref });
            }
        }
        let n = points.len();
        let mut dv_ds = Vec::with_capacity(n);
        for i in 0..n {
            let d = if i == 0 {
                (points[1].v_ref - points[0].v_ref) / ds
            } else if i == n - 1 {
                (points[n - 1].v_ref - points[n - 2].v_ref) / ds
            } else {
                (points[i + 1].v_ref - points[i - 1].v_ref) / (2.0 * ds)
            };
            dv_ds.push(d);
        }
        Ok(Self {
            ds,
            points,
            dv_ds,
            psi_ref,
        })
    }

    /// Cross-checks analytic heading/curvature against finite differences of
    /// the stored points. Points straddling a curvature discontinuity
    /// (straight-to-arc joins) are skipped; the check targets smooth spans.
    fn check_consistency(&self) -> Result<(), TrackError> {
        let n = self.points.len();
        let jump =
            |i: usize| (self.points[i + 1].curvature - self.points[i].curvature).abs() > 5e-3;
        for i in 1..n - 1 {
            if jump(i - 1) || jump(i) {
                continue;
            }
            let p = &self.points[i];
            let fd_heading = (self.points[i + 1].y - self.points[i - 1].y)
                .atan2(self.points[i + 1].x - self.points[i - 1].x);
            let dh = wrap_angle(fd_heading - p.heading).abs();
            if dh > 1e-3 {
                return Err(TrackError::Inconsistent {
                    s: p.s,
                    detail: format!("heading differs from finite difference by {dh:.2e} rad"),
                });
            }
            let fd_curv =
                (self.points[i + 1].heading - self.points[i - 1].heading) / (2.0 * self.ds);
            let dk = (fd_curv - p.curvature).abs();
            if dk > 1e-3 * p.curvature.abs().max(1.0) {
                return Err(TrackError::Inconsistent {
                    s: p.s,
                    detail: format!("curvature differs from finite difference by {dk:.2e} 1/m"),
                });
            }
        }
        Ok(())
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn points(&self) -> &[PathPoint] {
        &self.points
    }

    pub fn psi_ref(&self) -> Option<&[f64]> {
        self.psi_ref.as_deref()
    }

    /// Total arc length.
    pub fn length(&self) -> f64 {
        (self.points.len() - 1) as f64 * self.ds
    }

    /// Interpolates path quantities at arc length `s`, clamped to the ends.
    pub fn sample(&self, s: f64) -> PathSample {
        let n = self.points.len();
        let u = (s / self.ds).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        let w = u - i as f64;
        let a = &self.points[i];
        let b = &self.points[i + 1];
        PathSample {
            x: a.x + w * (b.x - a.x),
            y: a.y + w * (b.y - a.y),
            heading: a.heading + w * (b.heading - a.heading),
            curvature: a.curvature + w * (b.curvature - a.curvature),
            v_ref: a.v_ref + w * (b.v_ref - a.v_ref),
            dv_ref_ds: self.dv_ds[i] + w * (self.dv_ds[i + 1] - self.dv_ds[i]),
        }
    }

    /// Projects `(x, y)` onto the path near `hint_s`, falling back to a
    /// global scan when the local window does not contain the minimum.
    ///
    /// `d` is positive when the point lies left of the local path tangent
    /// (z component of tangent x offset). On forward driving, feeding the
    /// returned `s` back as the next hint keeps the projection continuous.
    pub fn project(&self, x: f64, y: f64, hint_s: f64) -> Projection {
        const WINDOW: usize = 60; // points, i.e. +-30 m at the default ds
        let n = self.points.len();
        let hint_idx = ((hint_s / self.ds).round() as isize).clamp(0, (n - 1) as isize) as usize;
        let lo = hint_idx.saturating_sub(WINDOW);
        let hi = (hint_idx + WINDOW).min(n - 2);
        let local = self.project_in(x, y, lo, hi);
        // A minimum pinned to the window edge (while more path exists) means
        // the hint was bad; rescan globally.
        let at_edge = (local.index == lo && lo > 0) || (local.index == hi && hi < n - 2);
        let best = if at_edge {
            self.project_in(x, y, 0, n - 2)
        } else {
            local
        };
        self.finish_projection(x, y, best)
    }

    fn project_in(&self, x: f64, y: f64, lo: usize, hi: usize) -> SegmentHit {
        let mut best = SegmentHit {
            index: lo,
            t: 0.0,
            dist2: f64::INFINITY,
        };
        for i in lo..=hi {
            let a = &self.points[i];
            let b = &self.points[i + 1];
            let (ex, ey) = (b.x - a.x, b.y - a.y);
            let len2 = ex * ex + ey * ey;
            let t = if len2 > 0.0 {
                (((x - a.x) * ex + (y - a.y) * ey) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (px, py) = (a.x + t * ex, a.y + t * ey);
            let dist2 = (x - px) * (x - px) + (y - py) * (y - py);
            if dist2 < best.dist2 {
                best = SegmentHit { index: i, t, dist2 };
            }
        }
        best
    }

    fn finish_projection(&self, x: f64, y: f64, hit: SegmentHit) -> Projection {
        let a = &self.points[hit.index];
        let b = &self.points[hit.index + 1];
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let len = (ex * ex + ey * ey).sqrt().max(1e-300);
        let (tx, ty) = (ex / len, ey / len);
        let (px, py) = (a.x + hit.t * ex, a.y + hit.t * ey);
        let d = tx * (y - py) - ty * (x - px);
        Projection {
            s: a.s + hit.t * (b.s - a.s),
            d,
            heading: a.heading + hit.t * (b.heading - a.heading),
        }
    }
}

struct SegmentHit {
    index: usize,
    t: f64,
    dist2: f64,
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r > std::f64::consts::PI {
        r -= two_pi;
    } else if r <= -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

fn unwrap_angles(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut offset = 0.0;
    for (i, &a) in raw.iter().enumerate() {
        if i > 0 {
            let jump = a - raw[i - 1];
            offset += wrap_angle(jump) - jump;
        }
        out.push(a + offset);
    }
    out
}

// ---------------------------------------------------------------------------
// Track generator
// ---------------------------------------------------------------------------

/// Turn direction of an arc segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnDirection {
    Left,
    Right,
}

/// One geometric segment of a generated track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segment {
    Straight {
        length: f64,
    },
    Arc {
        radius: f64,
        /// Magnitude of the heading change, rad.
        angle: f64,
        direction: TurnDirection,
    },
    Clothoid {
        length: f64,
        curvature_from: f64,
        curvature_to: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, angle, .. } => radius * angle,
            Segment::Clothoid { length, .. } => length,
        }
    }

    fn curvature_endpoints(&self) -> (f64, f64) {
        match *self {
            Segment::Straight { .. } => (0.0, 0.0),
            Segment::Arc {
                radius, direction, ..
            } => {
                let k = match direction {
                    TurnDirection::Left => 1.0 / radius,
                    TurnDirection::Right => -1.0 / radius,
                };
                (k, k)
            }
            Segment::Clothoid {
                curvature_from,
                curvature_to,
                ..
            } => (curvature_from, curvature_to),
        }
    }
}

/// A generated track: ordered segments plus a piecewise-linear speed profile
/// over arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub segments: Vec<Segment>,
    /// `(s, v)` breakpoints, m and m/s; linear between, clamped outside.
    pub speed_breakpoints: Vec<(f64, f64)>,
}

impl TrackSpec {
    /// Validates the spec. Returns warnings for curvature discontinuities
    /// between non-clothoid segments; clothoids whose endpoint curvature
    /// does not match their neighbors are errors.
    pub fn validate(&self) -> Result<Vec<String>, TrackError> {
        if self.segments.is_empty() {
            return Err(TrackError::BadSpec("no segments".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            match *seg {
                Segment::Straight { length } | Segment::Clothoid { length, .. } => {
                    if !(length > 0.0) {
                        return Err(TrackError::BadSpec(format!(
                            "segment {i}: length must be > 0, got {length}"
                        )));
                    }
                }
                Segment::Arc { radius, angle, .. } => {
                    if !(radius > 0.0) {
                        return Err(TrackError::BadSpec(format!(
                            "segment {i}: radius must be > 0, got {radius}"
                        )));
                    }
                    if !(angle > 0.0) {
                        return Err(TrackError::BadSpec(format!(
                            "segment {i}: angle must be > 0, got {angle}"
                        )));
                    }
                }
            }
        }
        let mut warnings = Vec::new();
        for i in 1..self.segments.len() {
            let (_, prev_end) = self.segments[i - 1].curvature_endpoints();
            let (next_start, _) = self.segments[i].curvature_endpoints();
            if (prev_end - next_start).abs() > 1e-12 {
                let any_clothoid = matches!(self.segments[i - 1], Segment::Clothoid { .. })
                    || matches!(self.segments[i], Segment::Clothoid { .. });
                if any_clothoid {
                    return Err(TrackError::BadSpec(format!(
                        "clothoid endpoint curvature discontinuous at segment {i}: {prev_end} -> {next_start}"
                    )));
                }
                warnings.push(format!(
                    "curvature jump {prev_end:.4} -> {next_start:.4} 1/m at segment {i} (s = {:.1} m)",
                    self.segments[..i].iter().map(Segment::length).sum::<f64>()
                ));
            }
        }
        if self.speed_breakpoints.is_empty() {
            return Err(TrackError::BadSpec("no speed breakpoints".into()));
        }
        for w in self.speed_breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(TrackError::BadSpec(format!(
                    "speed breakpoints must have strictly increasing s: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(s, v) in &self.speed_breakpoints {
            if !(v > 0.0) {
                return Err(TrackError::BadSpeed { s, v });
            }
        }
        Ok(warnings)
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// Speed profile lookup, clamped at the ends.
    pub fn speed_at(&self, s: f64) -> f64 {
        let bp = &self.speed_breakpoints;
        if s <= bp[0].0 {
            return bp[0].1;
        }
        if s >= bp[bp.len() - 1].0 {
            return bp[bp.len() - 1].1;
        }
        let i = bp.partition_point(|&(bs, _)| bs <= s) - 1;
        let (s0, v0) = bp[i];
        let (s1, v1) = bp[i + 1];
        v0 + (v1 - v0) * (s - s0) / (s1 - s0)
    }

    /// Arc-length positions of the speed-profile breakpoints that fall on
    /// the track.
    pub fn speed_breakpoint_positions(&self) -> Vec<f64> {
        let total = self.total_length();
        self.speed_breakpoints
            .iter()
            .map(|&(s, _)| s)
            .filter(|&s| s > 0.0 && s < total)
            .collect()
    }

    /// Generates the path on a uniform `ds` grid, integrating positions with
    /// RK4 over the heading ODE `theta'(s) = kappa(s)`; heading and
    /// curvature are evaluated in closed form per segment.
    pub fn generate(&self, ds: f64) -> Result<(RefPath, Vec<String>), TrackError> {
        let warnings = self.validate()?;
        let total = self.total_length();
        let n_out = (total / ds + 1e-9).floor() as usize + 1;
        if n_out < 4 {
            return Err(TrackError::TooShort(n_out));
        }
        let mut points: Vec<PathPoint> = Vec::with_capacity(n_out);
        let mut x = 0.0_f64;
        let mut y = 0.0_f64;
        let mut theta_seg = 0.0_f64; // heading at the current segment start
        let mut s_seg = 0.0_f64; // arc length at the current segment start
        let mut next_k = 0usize;

        for seg in &self.segments {
            let len = seg.length();
            let (k0, k1) = seg.curvature_endpoints();
            let dk_ds = (k1 - k0) / len;
            let theta_at = |u: f64| theta_seg + k0 * u + 0.5 * dk_ds * u * u;
            let kappa_at = |u: f64| k0 + dk_ds * u;

            let mut u = 0.0_f64; // local arc length within the segment
            loop {
                // emit any grid points at the current position
                while next_k < n_out && (next_k as f64 * ds) - (s_seg + u) <= 1e-9 {
                    let s_here = next_k as f64 * ds;
                    points.push(PathPoint {
                        s: s_here,
                        x,
                        y,
                        heading: theta_at(u),
                        curvature: kappa_at(u),
                        v_ref: self.speed_at(s_here),
                    });
                    next_k += 1;
                }
                if u >= len - 1e-9 {
                    break;
                }
                let next_emit = next_k as f64 * ds - s_seg;
                let stop = next_emit.min(len).min(u + GEN_SUBSTEP);
                let h = stop - u;
                // RK4 on x' = cos(theta(s)), y' = sin(theta(s)); the RHS
                // depends on s only, so the stages collapse to Simpson.
                let (sin1, cos1) = theta_at(u).sin_cos();
                let (sin2, cos2) = theta_at(u + 0.5 * h).sin_cos();
                let (sin4, cos4) = theta_at(u + h).sin_cos();
                x += h / 6.0 * (cos1 + 4.0 * cos2 + cos4);
                y += h / 6.0 * (sin1 + 4.0 * sin2 + sin4);
                u = stop;
            }
            theta_seg = theta_at(len);
            s_seg += len;
        }
        debug_assert_eq!(points.len(), n_out);
        let path = RefPath::from_analytic(ds, points)?;
        Ok((path, warnings))
    }
}

// ---------------------------------------------------------------------------
// Desk-scale reference tracks
// ---------------------------------------------------------------------------

const KMH: f64 = 1.0 / 3.6;

/// Desk-scale test track with strong lateral and longitudinal demands:
/// straight, clothoid into a tight left arc (R = 50 m) and back out, a
/// straight, a direct right arc (R = 80 m), then a long run-out straight.
/// 90 km/h on straights, 40 km/h in the tight arc, 55 km/h in the wide arc,
/// with linear speed ramps into and out of the arcs.
pub fn satory_mini() -> TrackSpec {
    use Segment::*;
    let segments = vec![
        Straight { length: 200.0 },
        Clothoid {
            length: 40.0,
            curvature_from: 0.0,
            curvature_to: 1.0 / 50.0,
        },
        Arc {
            radius: 50.0,
            angle: std::f64::consts::FRAC_PI_2,
            direction: TurnDirection::Left,
        },
        Clothoid {
            length: 40.0,
            curvature_from: 1.0 / 50.0,
            curvature_to: 0.0,
        },
        Straight { length: 150.0 },
        Arc {
            radius: 80.0,
            angle: 2.0 * std::f64::consts::FRAC_PI_3,
            direction: TurnDirection::Right,
        },
        Straight { length: 2200.0 },
    ];
    // cumulative segment boundaries
    let arc1_in = 200.0;
    let arc1_start = 240.0;
    let arc1_end = arc1_start + 50.0 * std::f64::consts::FRAC_PI_2;
    let arc1_out = arc1_end + 40.0;
    let arc2_start = arc1_out + 150.0;
    let arc2_end = arc2_start + 80.0 * 2.0 * std::f64::consts::FRAC_PI_3;
    let speed_breakpoints = vec![
        (0.0, 90.0 * KMH),
        (arc1_in, 90.0 * KMH),
        (arc1_start, 40.0 * KMH),
        (arc1_end, 40.0 * KMH),
        (arc1_out, 90.0 * KMH),
        (arc2_start - 100.0, 90.0 * KMH),
        (arc2_start, 55.0 * KMH),
        (arc2_end, 55.0 * KMH),
        (arc2_end + 100.0, 90.0 * KMH),
    ];
    TrackSpec {
        segments,
        speed_breakpoints,
    }
}

/// Gentle variant: all radii at or above 200 m, constant 60 km/h.
pub fn satory_mini_gentle() -> TrackSpec {
    use Segment::*;
    let segments = vec![
        Straight { length: 200.0 },
        Clothoid {
            length: 60.0,
            curvature_from: 0.0,
            curvature_to: 1.0 / 200.0,
        },
        Arc {
            radius: 200.0,
            angle: std::f64::consts::FRAC_PI_2,
            direction: TurnDirection::Left,
        },
        Clothoid {
            length: 60.0,
            curvature_from: 1.0 / 200.0,
            curvature_to: 0.0,
        },
        Straight { length: 150.0 },
        Clothoid {
            length: 60.0,
            curvature_from: 0.0,
            curvature_to: -1.0 / 250.0,
        },
        Arc {
            radius: 250.0,
            angle: std::f64::consts::FRAC_PI_3,
            direction: TurnDirection::Right,
        },
        Clothoid {
            length: 60.0,
            curvature_from: -1.0 / 250.0,
            curvature_to: 0.0,
        },
        Straight { length: 1200.0 },
    ];
    TrackSpec {
        segments,
        speed_breakpoints: vec![(0.0, 60.0 * KMH)],
    }
}

/// Looks up a named preset.
pub fn preset(name: &str) -> Option<TrackSpec> {
    match name {
        "satory-mini" => Some(satory_mini()),
        "satory-mini-gentle" => Some(satory_mini_gentle()),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// CSV load/dump
// ---------------------------------------------------------------------------

/// Loads a track CSV with header `x_m,y_m,v_mps` and an optional `psi_rad`
/// column, resampling to a uniform `ds` grid.
pub fn load_track_csv(content: &str, ds: f64) -> Result<RefPath, TrackError> {
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| TrackError::BadHeader {
        found: String::new(),
    })?;
    let header = header.trim_end_matches('\r').trim();
    let has_psi = match header {
        "x_m,y_m,v_mps" => false,
        "x_m,y_m,v_mps,psi_rad" => true,
        other => {
            return Err(TrackError::BadHeader {
                found: other.to_string(),
            })
        }
    };
    let expected = if has_psi { 4 } else { 3 };
    let mut raw: Vec<(f64, f64, f64)> = Vec::new();
    let mut psi: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let row = idx + 1; // 1-based, header is row 1
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected {
            return Err(TrackError::BadRow {
                row,
                expected,
                found: cells.len(),
            });
        }
        let mut nums = [0.0f64; 4];
        for (j, cell) in cells.iter().enumerate() {
            nums[j] = cell.trim().parse().map_err(|_| TrackError::BadCell {
                row,
                cell: cell.trim().to_string(),
            })?;
        }
        if let Some(&(px, py, _)) = raw.last() {
            if (nums[0] - px).abs() < 1e-9 && (nums[1] - py).abs() < 1e-9 {
                return Err(TrackError::DuplicatePoint { row });
            }
        }
        raw.push((nums[0], nums[1], nums[2]));
        if has_psi {
            psi.push(nums[3]);
        }
    }
    if raw.len() < 10 {
        return Err(TrackError::TooFewRows {
            needed: 10,
            found: raw.len(),
        });
    }
    RefPath::from_xy_v(&raw, has_psi.then_some(psi.as_slice()), ds)
}

/// Reads and loads a track CSV file.
pub fn load_track_file(path: &std::path::Path, ds: f64) -> Result<RefPath, TrackError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| TrackError::Io(format!("{}: {e}", path.display())))?;
    load_track_csv(&content, ds)
}

/// Dumps a path as loadable CSV (`x_m,y_m,v_mps,psi_rad`), the path heading
/// standing in as the yaw reference.
pub fn dump_track_csv(path: &RefPath) -> String {
    let mut out = String::from("x_m,y_m,v_mps,psi_rad\n");
    for p in path.points() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.x,
            p.y,
            p.v_ref,
            wrap_angle(p.heading)
        ));
    }
    out
}
