//! Vector-field surgeries: multiplication by a scalar factor `f` in `[0, 1]`
//! with a prescribed zero set.
//!
//! Every factor has the form `f = f0 (1 - phi) + phi` where `phi` is a
//! smooth step equal to 0 on an inner box and 1 outside the support box, and
//! `f0 = 1 - exp(-d / tau)` with `d` the distance to the zero set.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::atlas::{wrap_diff, AtlasKind, Rect, SurfaceAtlas, SurfacePoint};
use crate::cantor::CantorStripSet;
use crate::error::{FlowError, Result};
use crate::field::{BaseField, FieldSpec};

pub const DEFAULT_TAU: f64 = 0.02;
pub const SECTION_TAU: f64 = 0.005;

/// How the unit box `[-1/2, 3/2]^2` of a Cantor strip sits in a chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StripPlacement {
    /// `(u, v) = origin + (sx * x, sy * w)`.
    Affine { chart: u8, origin: [f64; 2], scale: [f64; 2] },
    /// `theta = theta0 + x * dtheta`, `r = r0 + w * dr` in polar chart
    /// coordinates.
    Polar { chart: u8, theta0: f64, dtheta: f64, r0: f64, dr: f64 },
}

impl StripPlacement {
    fn chart(&self) -> u8 {
        match *self {
            StripPlacement::Affine { chart, .. } | StripPlacement::Polar { chart, .. } => chart,
        }
    }

    fn to_chart(&self, x: f64, w: f64) -> (f64, f64) {
        match *self {
            StripPlacement::Affine { origin, scale, .. } => (origin[0] + scale[0] * x, origin[1] + scale[1] * w),
            StripPlacement::Polar { theta0, dtheta, r0, dr, .. } => {
                let (th, r) = (theta0 + x * dtheta, r0 + w * dr);
                (r * th.cos(), r * th.sin())
            }
        }
    }

    /// Scale from box lengths to chart lengths (lower bound).
    fn min_scale(&self) -> f64 {
        match *self {
            StripPlacement::Affine { scale, .. } => scale[0].abs().min(scale[1].abs()),
            StripPlacement::Polar { dtheta, r0, dr, .. } => (dtheta.abs() * (r0 - 0.5 * dr.abs())).min(dr.abs()),
        }
    }
}

/// Optional positive modulation `m = 1 - amp * (1 + sin(2 pi (ku u + kv v) + phase)) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub amp: f64,
    pub ku: f64,
    pub kv: f64,
    pub phase: f64,
}

impl Modulation {
    fn value(&self, p: &SurfacePoint) -> f64 {
        1.0 - self.amp * 0.5 * (1.0 + (TAU * (self.ku * p.u + self.kv * p.v) + self.phase).sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurgeryKind {
    /// Single zero inserted into a regular orbit.
    FakeSaddle { point: SurfacePoint, radius: f64 },
    /// Zero set `M_k` inside a flow box.
    CantorStrip { placement: StripPlacement, depth: u32 },
    /// Zero set `{u = section} x K` where `K` is the finite-depth minimal
    /// set of the Denjoy monodromy.
    SingularizeSection { section: f64, half_width: f64 },
    /// Finitely many point zeros with an optional positive modulation.
    GenericBump { zeros: Vec<SurfacePoint>, radius: f64, modulation: Option<Modulation> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgerySpec {
    pub kind: SurgeryKind,
    pub tau: f64,
    #[serde(skip)]
    strip: Option<CantorStripSet>,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Offset `p - c` in chart coordinates, wrapped along periodic directions.
fn offset(atlas: &SurfaceAtlas, p: &SurfacePoint, cu: f64, cv: f64) -> (f64, f64) {
    let (du, dv) = (p.u - cu, p.v - cv);
    match atlas.kind() {
        AtlasKind::Torus => (wrap_diff(du, 1.0), wrap_diff(dv, 1.0)),
        AtlasKind::ClosedAnnulus => (wrap_diff(du, atlas.fundamental_domain().width()), dv),
        AtlasKind::MappingTorus => (du, wrap_diff(dv, 1.0)),
        AtlasKind::Sphere => (du, dv),
    }
}

fn in_chart(atlas: &SurfaceAtlas, p: &SurfacePoint, chart: u8) -> Option<SurfacePoint> {
    atlas.transition(p, chart).ok()
}

impl SurgerySpec {
    pub fn new(kind: SurgeryKind, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(FlowError::InvalidParameter(format!("surgery tau must be positive, got {tau}")));
        }
        let strip = match &kind {
            SurgeryKind::FakeSaddle { radius, .. } | SurgeryKind::GenericBump { radius, .. } if *radius <= 0.0 => {
                return Err(FlowError::InvalidParameter("bump radius must be positive".into()));
            }
            SurgeryKind::GenericBump { modulation: Some(m), .. } if !(0.0..=0.9).contains(&m.amp) => {
                return Err(FlowError::InvalidParameter("modulation amplitude must lie in [0, 0.9]".into()));
            }
            SurgeryKind::CantorStrip { depth, placement } => {
                if !(1..=12).contains(depth) {
                    return Err(FlowError::InvalidParameter(format!("strip depth {depth} outside 1..=12")));
                }
                if let StripPlacement::Polar { dtheta, r0, dr, .. } = placement {
                    if dtheta.abs() >= PI || *r0 - 0.5 * dr.abs() <= 0.0 {
                        return Err(FlowError::InvalidParameter("polar strip placement wraps or crosses the origin".into()));
                    }
                }
                Some(CantorStripSet::new(*depth))
            }
            SurgeryKind::SingularizeSection { half_width, .. } if *half_width <= 0.0 || *half_width >= 0.5 => {
                return Err(FlowError::InvalidParameter("section band half width must lie in (0, 1/2)".into()));
            }
            _ => None,
        };
        Ok(SurgerySpec { kind, tau, strip })
    }

    pub fn fake_saddle(point: SurfacePoint, radius: f64) -> Result<Self> {
        Self::new(SurgeryKind::FakeSaddle { point, radius }, DEFAULT_TAU)
    }

    pub fn cantor_strip(placement: StripPlacement, depth: u32) -> Result<Self> {
        Self::new(SurgeryKind::CantorStrip { placement, depth }, DEFAULT_TAU)
    }

    pub fn singularize(section: f64) -> Result<Self> {
        Self::new(SurgeryKind::SingularizeSection { section, half_width: 0.1 }, SECTION_TAU)
    }

    pub fn identity() -> Self {
        SurgerySpec {
            kind: SurgeryKind::GenericBump { zeros: Vec::new(), radius: 1.0, modulation: None },
            tau: DEFAULT_TAU,
            strip: None,
        }
    }

    /// Restores cached data after deserialization.
    pub fn rebuilt(self) -> Result<Self> {
        Self::new(self.kind, self.tau)
    }

    fn strip(&self) -> CantorStripSet {
        match (&self.strip, &self.kind) {
            (Some(s), _) => s.clone(),
            (None, SurgeryKind::CantorStrip { depth, .. }) => CantorStripSet::new(*depth),
            _ => unreachable!("strip data requested for a non-strip surgery"),
        }
    }

    fn f0(&self, d: f64) -> f64 {
        -(-d / self.tau).exp_m1()
    }

    /// Box coordinates `(x, w)` of `p` for a strip placement.
    fn strip_coords(placement: &StripPlacement, atlas: &SurfaceAtlas, p: &SurfacePoint) -> Option<(f64, f64)> {
        let q = in_chart(atlas, p, placement.chart())?;
        Some(match *placement {
            StripPlacement::Affine { origin, scale, .. } => {
                let (cu, cv) = (origin[0] + 0.5 * scale[0], origin[1] + 0.5 * scale[1]);
                let (du, dv) = offset(atlas, &q, cu, cv);
                (du / scale[0] + 0.5, dv / scale[1] + 0.5)
            }
            StripPlacement::Polar { theta0, dtheta, r0, dr, .. } => {
                let th = q.v.atan2(q.u);
                let x = wrap_diff(th - (theta0 + 0.5 * dtheta), TAU) / dtheta + 0.5;
                (x, (q.u.hypot(q.v) - r0) / dr)
            }
        })
    }

    /// Scalar factor at `p`.
    pub fn factor(&self, atlas: &SurfaceAtlas, p: &SurfacePoint) -> f64 {
        match &self.kind {
            SurgeryKind::FakeSaddle { point, radius } => self.point_factor(atlas, p, point, *radius),
            SurgeryKind::GenericBump { zeros, radius, modulation } => {
                let base: f64 = zeros.iter().map(|z| self.point_factor(atlas, p, z, *radius)).product();
                base * modulation.map_or(1.0, |m| m.value(p))
            }
            SurgeryKind::CantorStrip { placement, .. } => {
                let Some((x, w)) = Self::strip_coords(placement, atlas, p) else { return 1.0 };
                let cheb = (x - 0.5).abs().max((w - 0.5).abs());
                let phi = smoothstep((cheb - 0.75) / 0.25);
                if phi >= 1.0 {
                    return 1.0;
                }
                let d = self.strip().distance(x, w);
                self.f0(d) * (1.0 - phi) + phi
            }
            SurgeryKind::SingularizeSection { section, half_width } => {
                let Some(g) = atlas.monodromy().and_then(|g| g.as_denjoy()) else { return 1.0 };
                let du = p.u - section;
                let phi = smoothstep((du.abs() / half_width - 0.5) / 0.5);
                if phi >= 1.0 {
                    return 1.0;
                }
                let d = du.hypot(g.distance_to_cantor(p.v));
                self.f0(d) * (1.0 - phi) + phi
            }
        }
    }

    fn point_factor(&self, atlas: &SurfaceAtlas, p: &SurfacePoint, z: &SurfacePoint, radius: f64) -> f64 {
        let Some(q) = in_chart(atlas, p, z.chart) else { return 1.0 };
        let (du, dv) = offset(atlas, &q, z.u, z.v);
        let phi = smoothstep((du.abs().max(dv.abs()) / radius - 0.5) / 0.5);
        if phi >= 1.0 {
            return 1.0;
        }
        self.f0(du.hypot(dv)) * (1.0 - phi) + phi
    }

    /// Chart-metric distance from `p` to the zero set (a lower-bound
    /// estimate for placed strips).
    pub fn zero_set_distance(&self, atlas: &SurfaceAtlas, p: &SurfacePoint) -> f64 {
        let point_dist = |z: &SurfacePoint| {
            in_chart(atlas, p, z.chart).map_or(f64::INFINITY, |q| {
                let (du, dv) = offset(atlas, &q, z.u, z.v);
                du.hypot(dv)
            })
        };
        match &self.kind {
            SurgeryKind::FakeSaddle { point, .. } => point_dist(point),
            SurgeryKind::GenericBump { zeros, .. } => zeros.iter().map(point_dist).fold(f64::INFINITY, f64::min),
            SurgeryKind::CantorStrip { placement, .. } => Self::strip_coords(placement, atlas, p)
                .map_or(f64::INFINITY, |(x, w)| self.strip().distance(x, w) * placement.min_scale()),
            SurgeryKind::SingularizeSection { section, .. } => match atlas.monodromy().and_then(|g| g.as_denjoy()) {
                Some(g) => (p.u - section).hypot(g.distance_to_cantor(p.v)),
                None => f64::INFINITY,
            },
        }
    }

    /// Chart and rectangle outside which the factor is identically one, or
    /// `None` when the support is the whole surface.
    pub fn support_box(&self) -> Option<(u8, Rect)> {
        match &self.kind {
            SurgeryKind::FakeSaddle { point, radius } => {
                Some((point.chart, Rect::new(point.u - radius, point.u + radius, point.v - radius, point.v + radius)))
            }
            SurgeryKind::CantorStrip { placement, .. } => {
                let mut r = Rect::new(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
                for i in 0..=16 {
                    for j in 0..=16 {
                        let (u, v) = placement.to_chart(-0.5 + i as f64 / 8.0, -0.5 + j as f64 / 8.0);
                        r = Rect::new(r.u0.min(u), r.u1.max(u), r.v0.min(v), r.v1.max(v));
                    }
                }
                Some((placement.chart(), r))
            }
            SurgeryKind::SingularizeSection { section, half_width } => {
                Some((0, Rect::new(section - half_width, section + half_width, 0.0, 1.0)))
            }
            SurgeryKind::GenericBump { .. } => None,
        }
    }

    /// Centre and radius of a ball containing the zero set.
    pub fn zero_hull(&self, atlas: &SurfaceAtlas) -> Vec<(SurfacePoint, f64)> {
        match &self.kind {
            SurgeryKind::FakeSaddle { point, .. } => vec![(*point, 0.0)],
            SurgeryKind::GenericBump { zeros, .. } => zeros.iter().map(|z| (*z, 0.0)).collect(),
            SurgeryKind::CantorStrip { placement, .. } => {
                // M_k lies in the parallelogram x in [0, 1/2], w - x in [0, 1/2]
                let (cu, cv) = placement.to_chart(0.25, 0.5);
                let c = SurfacePoint::new(placement.chart(), cu, cv);
                let mut rad: f64 = 0.0;
                for (x, w) in [(0.0, 0.0), (0.5, 0.5), (0.5, 1.0), (0.0, 0.5), (0.25, 0.0), (0.25, 1.0)] {
                    let (u, v) = placement.to_chart(x, w);
                    if let Ok(d) = atlas.distance(&c, &SurfacePoint::new(placement.chart(), u, v)) {
                        rad = rad.max(d);
                    }
                }
                vec![(c, rad * 1.1)]
            }
            SurgeryKind::SingularizeSection { section, .. } => vec![(SurfacePoint::at(*section, 0.5), 0.5)],
        }
    }

    /// Points of the zero set suitable for plotting and inventory seeding.
    pub fn zero_set_samples(&self) -> Vec<SurfacePoint> {
        match &self.kind {
            SurgeryKind::FakeSaddle { point, .. } => vec![*point],
            SurgeryKind::GenericBump { zeros, .. } => zeros.clone(),
            SurgeryKind::CantorStrip { placement, .. } => self
                .strip()
                .components()
                .into_iter()
                .map(|(a, b, c, d)| {
                    let (u, v) = placement.to_chart(0.5 * (a + b), 0.5 * (a + b) + 0.5 * (c + d));
                    SurfacePoint::new(placement.chart(), u, v)
                })
                .collect(),
            SurgeryKind::SingularizeSection { .. } => Vec::new(),
        }
    }

    /// Zero-set components as chart polygons (Cantor strips only).
    pub fn zero_set_polygons(&self) -> Vec<(u8, Vec<(f64, f64)>)> {
        match &self.kind {
            SurgeryKind::CantorStrip { placement, .. } => self
                .strip()
                .components()
                .into_iter()
                .map(|(a, b, c, d)| {
                    let corners = [(a, a + c), (b, b + c), (b, b + d), (a, a + d)];
                    (placement.chart(), corners.iter().map(|&(x, w)| placement.to_chart(x, w)).collect())
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_point_like(&self) -> bool {
        matches!(self.kind, SurgeryKind::FakeSaddle { .. } | SurgeryKind::GenericBump { .. })
    }
}

/// Value of the factor of `s` at `p`.
pub fn bump_factor(s: &SurgerySpec, atlas: &SurfaceAtlas, p: &SurfacePoint) -> f64 {
    s.factor(atlas, p)
}

fn zero_sets_meet(a: &SurgerySpec, b: &SurgerySpec, atlas: &SurfaceAtlas) -> bool {
    for (ca, ra) in a.zero_hull(atlas) {
        for (cb, rb) in b.zero_hull(atlas) {
            let d = atlas.distance(&ca, &cb).unwrap_or(f64::INFINITY);
            if a.is_point_like() && !b.is_point_like() {
                if b.zero_set_distance(atlas, &ca) < 1e-12 {
                    return true;
                }
            } else if b.is_point_like() && !a.is_point_like() {
                if a.zero_set_distance(atlas, &cb) < 1e-12 {
                    return true;
                }
            } else if d <= ra + rb + 1e-12 {
                return true;
            }
        }
    }
    false
}

/// Appends `s` to the surgery stack of `base`.
pub fn apply_surgery(base: &FieldSpec, s: SurgerySpec) -> Result<FieldSpec> {
    if let Some((chart, _)) = s.support_box() {
        if chart as usize >= base.atlas.chart_count() {
            return Err(FlowError::InvalidParameter(format!("surgery chart {chart} not in atlas")));
        }
    }
    if matches!(s.kind, SurgeryKind::SingularizeSection { .. }) && !matches!(base.base, BaseField::DenjoySuspension { .. }) {
        return Err(FlowError::WrongBase("section singularization needs a Denjoy suspension".into()));
    }
    for (i, other) in base.surgeries.iter().enumerate() {
        if zero_sets_meet(other, &s, &base.atlas) {
            return Err(FlowError::Overlap(format!("zero set meets that of surgery #{i}")));
        }
    }
    let mut out = base.clone();
    out.surgeries.push(s);
    Ok(out)
}

/// Replaces the finite-depth minimal set on the section `u = 1/2` of a Denjoy
/// suspension by singular points. `depth` is the truncation depth of the
/// Denjoy map whose Cantor approximation becomes singular; the base map is
/// rebuilt at that depth when it differs.
pub fn singularize_section(denjoy: &FieldSpec, depth: usize) -> Result<FieldSpec> {
    let BaseField::DenjoySuspension { rho, gap_constant, depth: d0 } = denjoy.base else {
        return Err(FlowError::WrongBase(format!("expected a Denjoy suspension, got {}", denjoy.base.name())));
    };
    let mut base = if d0 == depth {
        denjoy.clone()
    } else {
        let mut rebuilt = FieldSpec::denjoy_suspension(rho, gap_constant, depth)?;
        for s in &denjoy.surgeries {
            rebuilt = apply_surgery(&rebuilt, s.clone())?;
        }
        rebuilt.reversed = denjoy.reversed;
        rebuilt
    };
    base = apply_surgery(&base, SurgerySpec::singularize(0.5)?)?;
    Ok(base)
}
