//! Adaptive Dormand-Prince 5(4) integration across chart transitions, with
//! section-crossing detection, closed-orbit detection and streaming
//! observers.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::atlas::{wrap_diff, AtlasKind, SurfaceAtlas, SurfacePoint};
use crate::error::{FlowError, Result};
use crate::field::{FieldSpec, Section};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    StepLimit,
    ConvergedToSing { point: SurfacePoint },
    ClosedUp { period: f64 },
    /// An observer requested the stop.
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub tol: f64,
    pub t_budget: f64,
    pub max_steps: u64,
    /// Largest chart displacement per step.
    pub max_disp: f64,
    /// Minimum elapsed time between recorded samples (0 records every step).
    pub record_dt: f64,
    /// Recorded samples are decimated by two whenever this cap is exceeded.
    pub max_samples: usize,
    pub detect_closure: bool,
    /// Scale the local error target by the step length (capped at one), so
    /// that `tol` bounds the global error per unit time.
    pub per_unit_step: bool,
    pub closure_tol: f64,
    pub sing_speed: f64,
    pub sing_dist: f64,
    pub sections: Vec<Section>,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            tol: 1e-10,
            t_budget: 1e4,
            max_steps: 10_000_000,
            max_disp: 0.1,
            record_dt: 0.01,
            max_samples: 200_000,
            detect_closure: true,
            per_unit_step: false,
            closure_tol: 1e-8,
            sing_speed: 1e-9,
            sing_dist: 1e-6,
            sections: Vec::new(),
        }
    }
}

impl IntegratorSettings {
    pub fn with_budget(t_budget: f64) -> Self {
        IntegratorSettings { t_budget, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(1e-14..=1e-3).contains(&self.tol) {
            return Err(FlowError::InvalidParameter(format!("tolerance {} outside [1e-14, 1e-3]", self.tol)));
        }
        if !(self.t_budget >= 0.0 && self.t_budget.is_finite()) {
            return Err(FlowError::InvalidParameter("time budget must be finite and nonnegative".into()));
        }
        if !(self.max_disp > 0.0) {
            return Err(FlowError::InvalidParameter("max_disp must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    /// Signed time (negative for backward runs).
    pub t: f64,
    /// Coordinate along the section (`v` for `CircleU`, `u` for `CircleV`,
    /// radius for `Ray`).
    pub coord: f64,
    pub sign: i8,
    pub point: SurfacePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionCrossings {
    pub section: Section,
    pub hits: Vec<Hit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(signed time, point)`; times strictly monotone in `direction`.
    pub samples: Vec<(f64, SurfacePoint)>,
    pub direction: Direction,
    pub termination: Termination,
    pub final_point: SurfacePoint,
    /// Elapsed (unsigned) time at termination.
    pub elapsed: f64,
    pub steps: u64,
    pub rejected: u64,
    pub crossings: Vec<SectionCrossings>,
}

impl Trajectory {
    pub fn crossings_for(&self, section: &Section) -> Option<&SectionCrossings> {
        self.crossings.iter().find(|c| &c.section == section)
    }

    /// Line-delimited `t chart u v` text.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.samples.len() * 48);
        s.push_str("# t chart u v\n");
        for (t, p) in &self.samples {
            let _ = writeln!(s, "{t:.12e} {} {:.15e} {:.15e}", p.chart, p.u, p.v);
        }
        s
    }
}

/// One accepted step with cubic Hermite dense output. `p0` and `p1` share
/// the chart of `p0`; `p1` may lie outside the chart rectangle.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub s0: f64,
    pub s1: f64,
    pub p0: SurfacePoint,
    pub p1: SurfacePoint,
    pub k0: [f64; 2],
    pub k1: [f64; 2],
    pub atlas: &'a SurfaceAtlas,
}

impl Segment<'_> {
    /// Dense-output point at elapsed time `s` in `[s0, s1]` (raw chart).
    pub fn at(&self, s: f64) -> SurfacePoint {
        let h = self.s1 - self.s0;
        if h <= 0.0 {
            return self.p0;
        }
        let th = ((s - self.s0) / h).clamp(0.0, 1.0);
        let (t2, t3) = (th * th, th * th * th);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + th;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        SurfacePoint::new(
            self.p0.chart,
            h00 * self.p0.u + h10 * h * self.k0[0] + h01 * self.p1.u + h11 * h * self.k1[0],
            h00 * self.p0.v + h10 * h * self.k0[1] + h01 * self.p1.v + h11 * h * self.k1[1],
        )
    }

    pub fn displacement(&self) -> f64 {
        (self.p1.u - self.p0.u).hypot(self.p1.v - self.p0.v)
    }
}

/// Receives every accepted step; returning `false` stops the run.
pub trait Observer {
    fn segment(&mut self, seg: &Segment<'_>) -> bool;
}

pub struct NoObserver;

impl Observer for NoObserver {
    fn segment(&mut self, _seg: &Segment<'_>) -> bool {
        true
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Signed field used by one run.
struct Rhs<'a> {
    spec: &'a FieldSpec,
    sign: f64,
}

impl Rhs<'_> {
    fn f(&self, p: &SurfacePoint) -> [f64; 2] {
        let v = self.spec.eval_raw(p);
        [self.sign * v[0], self.sign * v[1]]
    }

    /// One Dormand-Prince step. Returns the 5th order point, error norm and
    /// the derivative at the new point.
    fn step(&self, p: &SurfacePoint, k1: [f64; 2], h: f64) -> (SurfacePoint, f64, [f64; 2]) {
        let mut k = [[0.0; 2]; 7];
        k[0] = k1;
        for i in 1..7 {
            let (mut du, mut dv) = (0.0, 0.0);
            for j in 0..i {
                du += A[i][j] * k[j][0];
                dv += A[i][j] * k[j][1];
            }
            let q = SurfacePoint::new(p.chart, p.u + h * du, p.v + h * dv);
            k[i] = self.f(&q);
        }
        let (mut du, mut dv) = (0.0, 0.0);
        for j in 0..6 {
            du += A[6][j] * k[j][0];
            dv += A[6][j] * k[j][1];
        }
        let (mut eu, mut ev) = (0.0, 0.0);
        for j in 0..7 {
            eu += E[j] * k[j][0];
            ev += E[j] * k[j][1];
        }
        let err = (h * eu).abs().max((h * ev).abs());
        (SurfacePoint::new(p.chart, p.u + h * du, p.v + h * dv), err, k[6])
    }
}

/// Scalar defining function of a section along a step, unwrapped so that it
/// is continuous within the step.
struct SectionTrack {
    section: Section,
    period_u: Option<f64>,
    period_v: Option<f64>,
}

impl SectionTrack {
    fn new(section: Section, atlas: &SurfaceAtlas) -> Result<Self> {
        let d = atlas.fundamental_domain();
        let (pu, pv) = match atlas.kind() {
            AtlasKind::Torus => (Some(1.0), Some(1.0)),
            AtlasKind::ClosedAnnulus => (Some(d.width()), None),
            AtlasKind::MappingTorus => (None, Some(1.0)),
            AtlasKind::Sphere => (None, None),
        };
        match section {
            Section::Ray { chart, r0, r1, .. } => {
                if atlas.kind() != AtlasKind::Sphere || chart as usize >= atlas.chart_count() || !(r1 > r0) {
                    return Err(FlowError::InvalidParameter("ray sections need a sphere chart and r1 > r0".into()));
                }
            }
            _ => {
                if atlas.kind() == AtlasKind::Sphere {
                    return Err(FlowError::InvalidParameter("coordinate circles are not sections of the sphere".into()));
                }
            }
        }
        Ok(SectionTrack { section, period_u: pu, period_v: pv })
    }

    fn wrap(x: f64, period: Option<f64>) -> f64 {
        period.map_or(x, |p| wrap_diff(x, p))
    }

    /// Value at the step start and the continuous increment to `q`
    /// (both in the chart of `p`).
    fn value(&self, atlas: &SurfaceAtlas, p: &SurfacePoint) -> Option<f64> {
        Some(match self.section {
            Section::CircleU { c } => Self::wrap(p.u - c, self.period_u),
            Section::CircleV { c } => Self::wrap(p.v - c, self.period_v),
            Section::Ray { chart, angle, .. } => {
                let q = atlas.transition(p, chart).ok()?;
                wrap_diff(q.v.atan2(q.u) - angle, TAU)
            }
        })
    }

    fn increment(&self, atlas: &SurfaceAtlas, p: &SurfacePoint, q: &SurfacePoint) -> Option<f64> {
        Some(match self.section {
            Section::CircleU { .. } => q.u - p.u,
            Section::CircleV { .. } => q.v - p.v,
            Section::Ray { chart, .. } => {
                let a = atlas.transition(p, chart).ok()?;
                let b = atlas.transition(q, chart).ok()?;
                wrap_diff(b.v.atan2(b.u) - a.v.atan2(a.u), TAU)
            }
        })
    }

    fn coord(&self, atlas: &SurfaceAtlas, q: &SurfacePoint) -> Option<f64> {
        match self.section {
            Section::CircleU { .. } => Some(q.v),
            Section::CircleV { .. } => Some(q.u),
            Section::Ray { chart, r0, r1, .. } => {
                let a = atlas.transition(q, chart).ok()?;
                let r = a.u.hypot(a.v);
                (r >= r0 && r <= r1).then_some(r)
            }
        }
    }

    /// Unit normal of the section at `q` in the chart of `q`.
    fn normal(&self, atlas: &SurfaceAtlas, q: &SurfacePoint) -> Option<[f64; 2]> {
        match self.section {
            Section::CircleU { .. } => Some([1.0, 0.0]),
            Section::CircleV { .. } => Some([0.0, 1.0]),
            Section::Ray { chart, .. } => {
                let a = atlas.transition(q, chart).ok()?;
                let r2 = a.u * a.u + a.v * a.v;
                if r2 == 0.0 {
                    return None;
                }
                // gradient of the polar angle, pushed into q's chart
                let g = [-a.v / r2, a.u / r2];
                if q.chart == chart {
                    let n = g[0].hypot(g[1]);
                    Some([g[0] / n, g[1] / n])
                } else {
                    // covector pullback through w = 1/z equals pushing the
                    // dual vector; use a finite difference of the angle
                    let eps = 1e-7;
                    let th = |u: f64, v: f64| {
                        atlas.transition(&SurfacePoint::new(q.chart, u, v), chart).map(|b| b.v.atan2(b.u)).ok()
                    };
                    let t0 = th(q.u, q.v)?;
                    let gu = wrap_diff(th(q.u + eps, q.v)? - t0, TAU) / eps;
                    let gv = wrap_diff(th(q.u, q.v + eps)? - t0, TAU) / eps;
                    let n = gu.hypot(gv);
                    Some([gu / n, gv / n])
                }
            }
        }
    }
}

/// Checks that the base field is transverse to `section` at 100 points
/// along it (declared singular points excluded).
pub fn check_transverse(spec: &FieldSpec, section: &Section) -> Result<()> {
    let track = SectionTrack::new(*section, &spec.atlas)?;
    let d = spec.atlas.fundamental_domain();
    for i in 0..100 {
        let s = (i as f64 + 0.5) / 100.0;
        let p = match *section {
            Section::CircleU { c } => SurfacePoint::at(c, d.v0 + s * d.height()),
            Section::CircleV { c } => SurfacePoint::at(d.u0 + s * d.width(), c),
            Section::Ray { chart, angle, r0, r1 } => {
                let r = r0 + s * (r1 - r0);
                SurfacePoint::new(chart, r * angle.cos(), r * angle.sin())
            }
        };
        if spec.sing_distance(&p) < 1e-6 {
            continue;
        }
        let Some(n) = track.normal(&spec.atlas, &p) else { continue };
        let f = spec.base_eval_raw(&p);
        if (n[0] * f[0] + n[1] * f[1]).abs() <= 1e-9 {
            return Err(FlowError::NotTransverse(i));
        }
    }
    Ok(())
}

/// Offset of `q` from `x0` in the chart of `x0`.
fn chart_offset(atlas: &SurfaceAtlas, x0: &SurfacePoint, q: &SurfacePoint) -> Option<(f64, f64)> {
    let q = atlas.transition(q, x0.chart).ok()?;
    let q = match atlas.kind() {
        AtlasKind::MappingTorus => atlas.normalize(&q).ok()?,
        _ => q,
    };
    let (du, dv) = (q.u - x0.u, q.v - x0.v);
    Some(match atlas.kind() {
        AtlasKind::Torus => (wrap_diff(du, 1.0), wrap_diff(dv, 1.0)),
        AtlasKind::ClosedAnnulus => (wrap_diff(du, atlas.fundamental_domain().width()), dv),
        AtlasKind::MappingTorus => (du, wrap_diff(dv, 1.0)),
        AtlasKind::Sphere => (du, dv),
    })
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Bisection on the fraction of a single step where `g` changes sign.
fn bisect_step(rhs: &Rhs<'_>, p: &SurfacePoint, k1: [f64; 2], h: f64, g: impl Fn(&SurfacePoint) -> f64) -> (f64, SurfacePoint) {
    let (mut lo, mut hi) = (0.0, 1.0);
    let g0 = g(p);
    let mut best = (1.0, rhs.step(p, k1, h).0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let q = rhs.step(p, k1, mid * h).0;
        let gm = g(&q);
        best = (mid, q);
        if gm.abs() < 1e-13 {
            break;
        }
        if (gm > 0.0) == (g0 > 0.0) && gm != 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    best
}

/// Integrates `spec` from `x0` in `direction`, streaming accepted steps to
/// `observer`.
pub fn integrate_observed(
    spec: &FieldSpec,
    x0: &SurfacePoint,
    settings: &IntegratorSettings,
    direction: Direction,
    observer: &mut dyn Observer,
) -> Result<Trajectory> {
    settings.validate()?;
    let atlas = &spec.atlas;
    let rhs = Rhs { spec, sign: direction.sign() };
    let sgn = direction.sign();
    let start = atlas.normalize(x0)?;
    let mut p = start;
    let mut k1 = rhs.f(&p);
    let tracks: Vec<SectionTrack> =
        settings.sections.iter().map(|s| SectionTrack::new(*s, atlas)).collect::<Result<_>>()?;
    let mut crossings: Vec<SectionCrossings> =
        settings.sections.iter().map(|s| SectionCrossings { section: *s, hits: Vec::new() }).collect();

    let mut traj = Trajectory {
        samples: vec![(0.0, p)],
        direction,
        termination: Termination::BudgetExhausted,
        final_point: p,
        elapsed: 0.0,
        steps: 0,
        rejected: 0,
        crossings: Vec::new(),
    };
    let mut record_dt = settings.record_dt;
    let mut last_record = 0.0;

    let n0 = {
        let n = norm(k1);
        (n > 0.0).then(|| [k1[0] / n, k1[1] / n])
    };
    let mut armed = false;

    let sing_check = |q: &SurfacePoint, k: [f64; 2]| norm(k) < settings.sing_speed && spec.sing_distance(q) < settings.sing_dist;
    if norm(k1) == 0.0 || sing_check(&p, k1) {
        traj.termination = Termination::ConvergedToSing { point: p };
        traj.crossings = crossings;
        return Ok(traj);
    }

    let mut s = 0.0;
    let mut h = (settings.max_disp / norm(k1)).min(0.01).min(settings.t_budget.max(1e-300));
    let h_min = 1e-15;
    loop {
        if s >= settings.t_budget {
            traj.termination = Termination::BudgetExhausted;
            break;
        }
        if traj.steps >= settings.max_steps {
            traj.termination = Termination::StepLimit;
            break;
        }
        let speed = norm(k1);
        if speed > 0.0 {
            // never step across more than half the gap to Sing
            let d = spec.sing_distance(&p);
            let cap = if d.is_finite() { settings.max_disp.min(0.5 * d) } else { settings.max_disp };
            h = h.min(cap / speed);
        }
        let last = h >= settings.t_budget - s;
        if last {
            h = settings.t_budget - s;
        }
        let (q, err, kq) = rhs.step(&p, k1, h);
        let target = if settings.per_unit_step { settings.tol * h.min(1.0) } else { settings.tol };
        if !(err <= target) || !q.u.is_finite() || !q.v.is_finite() {
            traj.rejected += 1;
            let fac = if err.is_finite() && err > 0.0 { (0.9 * (target / err).powf(0.2)).max(0.1) } else { 0.1 };
            h *= fac;
            if h < h_min {
                if spec.sing_distance(&p) < settings.sing_dist.max(1e-6) {
                    traj.termination = Termination::ConvergedToSing { point: p };
                    break;
                }
                return Err(FlowError::StiffnessAbort { t: sgn * s });
            }
            continue;
        }
        traj.steps += 1;
        let s1 = if last { settings.t_budget } else { s + h };
        let seg = Segment { s0: s, s1, p0: p, p1: q, k0: k1, k1: kq, atlas };
        let keep_going = observer.segment(&seg);

        for (track, out) in tracks.iter().zip(crossings.iter_mut()) {
            let (Some(v0), Some(dv)) = (track.value(atlas, &p), track.increment(atlas, &p, &q)) else { continue };
            let v1 = v0 + dv;
            let crossed = (v0 < 0.0 && v1 >= 0.0) || (v0 > 0.0 && v1 <= 0.0);
            if !crossed {
                continue;
            }
            let (th, x) = bisect_step(&rhs, &p, k1, h, |y| v0 + track.increment(atlas, &p, y).unwrap_or(0.0));
            let Ok(xn) = atlas.normalize(&x) else { continue };
            let Some(coord) = track.coord(atlas, &xn) else { continue };
            out.hits.push(Hit { t: sgn * (s + th * h), coord, sign: if v1 > v0 { 1 } else { -1 }, point: xn });
        }

        if settings.detect_closure {
            if let Some(n) = n0 {
                let off1 = chart_offset(atlas, &start, &q);
                if !armed {
                    if let Some((du, dv)) = off1 {
                        armed = du.hypot(dv) > 1e-4;
                    }
                } else if let (Some(o0), Some(o1)) = (chart_offset(atlas, &start, &p), off1) {
                    let g0 = o0.0 * n[0] + o0.1 * n[1];
                    let g1 = o1.0 * n[0] + o1.1 * n[1];
                    let near = o1.0.hypot(o1.1) < 0.2;
                    if near && g0 < 0.0 && g1 >= -1e-12 {
                        let g = |y: &SurfacePoint| chart_offset(atlas, &start, y).map_or(1.0, |o| o.0 * n[0] + o.1 * n[1]);
                        let (th, x) = if g1 >= 0.0 { bisect_step(&rhs, &p, k1, h, g) } else { (1.0, q) };
                        if let Some(o) = chart_offset(atlas, &start, &x) {
                            if o.0.hypot(o.1) < settings.closure_tol {
                                let period = s + th * h;
                                traj.elapsed = period;
                                traj.final_point = atlas.normalize(&x)?;
                                traj.samples.push((sgn * period, traj.final_point));
                                traj.termination = Termination::ClosedUp { period };
                                traj.crossings = crossings;
                                return Ok(traj);
                            }
                        }
                    }
                }
            }
        }

        let moved = atlas.settle(&q)?;
        k1 = if moved.chart == q.chart && moved.u == q.u && moved.v == q.v { kq } else { rhs.f(&moved) };
        p = moved;
        s = s1;
        if s - last_record >= record_dt || last {
            traj.samples.push((sgn * s, atlas.normalize(&p)?));
            last_record = s;
            if traj.samples.len() > settings.max_samples {
                let kept: Vec<_> = traj.samples.iter().step_by(2).copied().collect();
                traj.samples = kept;
                record_dt = (record_dt * 2.0).max(1e-12);
            }
        }
        if sing_check(&p, k1) {
            traj.termination = Termination::ConvergedToSing { point: atlas.normalize(&p)? };
            break;
        }
        if !keep_going {
            traj.termination = Termination::Stopped;
            break;
        }
        let fac = if err > 0.0 { (0.9 * (target / err).powf(0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h *= fac;
    }
    traj.elapsed = s;
    traj.final_point = atlas.normalize(&p)?;
    if traj.samples.last().map(|x| x.0) != Some(sgn * s) {
        traj.samples.push((sgn * s, traj.final_point));
    }
    traj.crossings = crossings;
    Ok(traj)
}

/// Integrates without an observer.
pub fn integrate(
    spec: &FieldSpec,
    x0: &SurfacePoint,
    settings: &IntegratorSettings,
    direction: Direction,
) -> Result<Trajectory> {
    integrate_observed(spec, x0, settings, direction, &mut NoObserver)
}

/// Time-`t` map of the flow (`t` may be negative); `tol` is an error
/// target per unit time.
pub fn flow_map(spec: &FieldSpec, x: &SurfacePoint, t: f64, tol: f64) -> Result<SurfacePoint> {
    let settings = IntegratorSettings {
        tol,
        per_unit_step: true,
        t_budget: t.abs(),
        detect_closure: false,
        record_dt: f64::INFINITY,
        sing_speed: 0.0,
        ..IntegratorSettings::default()
    };
    let dir = if t >= 0.0 { Direction::Forward } else { Direction::Backward };
    Ok(integrate(spec, x, &settings, dir)?.final_point)
}

/// Crossings of `section` by `traj`. Recorded crossings are returned
/// directly; otherwise consecutive samples are scanned and each crossing is
/// refined by bisection on re-integrated single steps.
pub fn poincare_crossings(spec: &FieldSpec, traj: &Trajectory, section: &Section) -> Result<SectionCrossings> {
    check_transverse(spec, section)?;
    if let Some(c) = traj.crossings_for(section) {
        return Ok(c.clone());
    }
    let atlas = &spec.atlas;
    let track = SectionTrack::new(*section, atlas)?;
    let sgn = traj.direction.sign();
    let rhs = Rhs { spec, sign: sgn };
    let mut hits = Vec::new();
    for w in traj.samples.windows(2) {
        let (t0, a) = w[0];
        let (t1, _) = w[1];
        let dt = (t1 - t0).abs();
        if dt <= 0.0 {
            continue;
        }
        // re-integrate the sample interval in small steps and look for a
        // sign change of the continuous section value
        let n = ((dt / 0.01).ceil() as usize).max(1);
        let hstep = dt / n as f64;
        let mut p = a;
        let mut k = rhs.f(&p);
        let mut s = t0.abs();
        for _ in 0..n {
            let (q, _, kq) = rhs.step(&p, k, hstep);
            if let (Some(v0), Some(dv)) = (track.value(atlas, &p), track.increment(atlas, &p, &q)) {
                let v1 = v0 + dv;
                if (v0 < 0.0 && v1 >= 0.0) || (v0 > 0.0 && v1 <= 0.0) {
                    let (th, x) = bisect_step(&rhs, &p, k, hstep, |y| v0 + track.increment(atlas, &p, y).unwrap_or(0.0));
                    if let Ok(xn) = atlas.normalize(&x) {
                        if let Some(coord) = track.coord(atlas, &xn) {
                            hits.push(Hit { t: sgn * (s + th * hstep), coord, sign: if v1 > v0 { 1 } else { -1 }, point: xn });
                        }
                    }
                }
            }
            let moved = atlas.settle(&q)?;
            k = if moved == q { kq } else { rhs.f(&moved) };
            p = moved;
            s += hstep;
        }
    }
    Ok(SectionCrossings { section: *section, hits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_map::golden_rotation;
    use crate::field::{HeightId, FieldSpec};
    use crate::surgery::{apply_surgery, StripPlacement, SurgerySpec};

    #[test]
    fn rational_linear_closes() {
        let f = FieldSpec::linear_torus(0.5);
        let tr = integrate(&f, &SurfacePoint::at(0.0, 0.0), &IntegratorSettings::with_budget(2.0), Direction::Forward).unwrap();
        match tr.termination {
            Termination::ClosedUp { period } => assert!((period - 2.0).abs() < 1e-9, "{period}"),
            t => panic!("unexpected {t:?}"),
        }
        assert!(f.atlas.distance(&tr.final_point, &SurfacePoint::at(0.0, 0.0)).unwrap() < 1e-9);
    }

    #[test]
    fn strip_backward_converges() {
        let base = FieldSpec::trivial_annulus();
        let placement = StripPlacement::Affine { chart: 0, origin: [0.0, 0.0], scale: [1.0, 1.0] };
        let f = apply_surgery(&base, SurgerySpec::cantor_strip(placement, 5).unwrap()).unwrap();
        let tr = integrate(&f, &SurfacePoint::at(0.75, 0.5), &IntegratorSettings::with_budget(100.0), Direction::Backward).unwrap();
        match tr.termination {
            Termination::ConvergedToSing { point } => {
                assert!((point.u - 0.5).abs() < 1e-6 && (point.v - 0.5).abs() < 1e-9, "{point:?}");
            }
            t => panic!("unexpected {t:?}"),
        }
    }

    #[test]
    fn sphere_gradient_reaches_pole() {
        let f = FieldSpec::gradient(HeightId::SphereHeight);
        let tr = integrate(&f, &SurfacePoint::new(0, 0.7, -0.2), &IntegratorSettings::with_budget(200.0), Direction::Forward).unwrap();
        match tr.termination {
            Termination::ConvergedToSing { point } => {
                let north = SurfacePoint::new(1, 0.0, 0.0);
                assert!(f.atlas.distance(&point, &north).unwrap() < 1e-6);
            }
            t => panic!("unexpected {t:?}"),
        }
    }

    #[test]
    fn linear_section_hits_are_rotation() {
        let rho = golden_rotation();
        let f = FieldSpec::linear_torus(rho);
        let sec = Section::CircleU { c: 0.0 };
        let settings = IntegratorSettings { sections: vec![sec], ..IntegratorSettings::with_budget(50.5) };
        let tr = integrate(&f, &SurfacePoint::at(0.5, 0.1), &settings, Direction::Forward).unwrap();
        let hits = &tr.crossings[0].hits;
        assert_eq!(hits.len(), 50);
        for (n, hit) in hits.iter().enumerate() {
            let expect = (0.1 + rho * (0.5 + n as f64)).rem_euclid(1.0);
            assert!(wrap_diff(hit.coord - expect, 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn denjoy_hits_reproduce_iterates() {
        let f = FieldSpec::denjoy_suspension(golden_rotation(), 0.1, 200).unwrap();
        let g = f.atlas.monodromy().unwrap().clone();
        let sec = Section::CircleU { c: 0.5 };
        let settings = IntegratorSettings { sections: vec![sec], ..IntegratorSettings::with_budget(40.0) };
        let tr = integrate(&f, &SurfacePoint::at(0.5 - 1e-3, 0.3), &settings, Direction::Forward).unwrap();
        let mut v = 0.3;
        for hit in &tr.crossings[0].hits {
            assert!((hit.coord - v).abs() < 1e-9);
            v = g.apply(v);
        }
        assert_eq!(tr.crossings[0].hits.len(), 40);
    }

    #[test]
    fn limit_cycle_hits_decrease() {
        let f = FieldSpec::single_limit_cycle_torus();
        let sec = Section::CircleU { c: 0.0 };
        let settings = IntegratorSettings { sections: vec![sec], ..IntegratorSettings::with_budget(200.0) };
        let tr = integrate(&f, &SurfacePoint::at(0.3, 0.5), &settings, Direction::Forward).unwrap();
        // y increases toward 1 = 0; the distance to the cycle decreases
        let d: Vec<f64> = tr.crossings[0].hits.iter().map(|h| wrap_diff(h.coord, 1.0).abs()).collect();
        assert!(d.len() > 100);
        assert!(d.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn reversal_returns_to_start() {
        let f = FieldSpec::morse_smale_sphere();
        let x = SurfacePoint::new(0, 0.4, 0.3);
        let y = flow_map(&f, &x, 3.0, 1e-10).unwrap();
        let z = flow_map(&f, &y, -3.0, 1e-10).unwrap();
        assert!(f.atlas.distance(&x, &z).unwrap() < 30.0 * 1e-10);
    }

    #[test]
    fn poincare_from_samples_matches_recorded() {
        let f = FieldSpec::linear_torus(golden_rotation());
        let sec = Section::CircleU { c: 0.0 };
        let settings = IntegratorSettings { sections: vec![sec], ..IntegratorSettings::with_budget(10.5) };
        let tr = integrate(&f, &SurfacePoint::at(0.5, 0.1), &settings, Direction::Forward).unwrap();
        let mut bare = tr.clone();
        bare.crossings.clear();
        let a = poincare_crossings(&f, &tr, &sec).unwrap();
        let b = poincare_crossings(&f, &bare, &sec).unwrap();
        assert_eq!(a.hits.len(), b.hits.len());
        for (x, y) in a.hits.iter().zip(&b.hits) {
            assert!((x.coord - y.coord).abs() < 1e-9);
        }
    }

    #[test]
    fn non_transverse_section_rejected() {
        let f = FieldSpec::linear_torus(0.0);
        assert!(matches!(check_transverse(&f, &Section::CircleV { c: 0.2 }), Err(FlowError::NotTransverse(_))));
    }

    #[test]
    fn text_export() {
        let f = FieldSpec::linear_torus(0.5);
        let tr = integrate(&f, &SurfacePoint::at(0.1, 0.1), &IntegratorSettings::with_budget(0.5), Direction::Forward).unwrap();
        let txt = tr.to_text();
        assert!(txt.starts_with("# t chart u v\n"));
        assert_eq!(txt.lines().count(), tr.samples.len() + 1);
    }
}
