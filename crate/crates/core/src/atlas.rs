//! Compact surfaces as finite chart atlases with exact transition maps.
//!
//! * `Torus`: one chart, the unit square with opposite edges identified.
//! * `Sphere`: two stereographic charts. Chart 0 projects from the north
//!   pole (south pole at the origin), chart 1 from the south pole composed
//!   with a reflection so that the transition `w = 1 / z` is holomorphic and
//!   orientation preserving. Each chart is declared on the disk `r < 2`.
//! * `ClosedAnnulus`: `R / L Z x [v0, v1]` in a single chart.
//! * `MappingTorus`: `[0,1] x S^1` with `(1, x) ~ (0, g(x))` for a stored
//!   circle map `g`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::circle_map::CircleMap;
use crate::error::{FlowError, Result};

/// Radius bound of each stereographic chart.
pub const SPHERE_CHART_RADIUS: f64 = 2.0;
/// Working-chart switching radius used by the integrator.
pub const SPHERE_SWITCH_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfacePoint {
    pub chart: u8,
    pub u: f64,
    pub v: f64,
}

impl SurfacePoint {
    pub const fn new(chart: u8, u: f64, v: f64) -> Self {
        SurfacePoint { chart, u, v }
    }

    pub const fn at(u: f64, v: f64) -> Self {
        SurfacePoint { chart: 0, u, v }
    }

    fn out_of_atlas(&self) -> FlowError {
        FlowError::OutOfAtlas { chart: self.chart, u: self.u, v: self.v }
    }
}

/// Axis-aligned chart rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl Rect {
    pub const fn new(u0: f64, u1: f64, v0: f64, v1: f64) -> Self {
        Rect { u0, u1, v0, v1 }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u0 && u <= self.u1 && v >= self.v0 && v <= self.v1
    }

    pub fn width(&self) -> f64 {
        self.u1 - self.u0
    }

    pub fn height(&self) -> f64 {
        self.v1 - self.v0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtlasKind {
    Torus,
    Sphere,
    ClosedAnnulus,
    MappingTorus,
}

/// Chart layout of a compact surface. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceAtlas {
    kind: AtlasKind,
    chart_domains: Vec<Rect>,
    /// Boundary circles `v = const` of the closed annulus.
    boundary: Vec<f64>,
    monodromy: Option<Arc<CircleMap>>,
}

fn wrap01(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Signed periodic difference in `(-period/2, period/2]`.
pub fn wrap_diff(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

impl SurfaceAtlas {
    pub fn torus() -> Self {
        SurfaceAtlas {
            kind: AtlasKind::Torus,
            chart_domains: vec![Rect::new(0.0, 1.0, 0.0, 1.0)],
            boundary: Vec::new(),
            monodromy: None,
        }
    }

    pub fn sphere() -> Self {
        let r = SPHERE_CHART_RADIUS;
        SurfaceAtlas {
            kind: AtlasKind::Sphere,
            chart_domains: vec![Rect::new(-r, r, -r, r), Rect::new(-r, r, -r, r)],
            boundary: Vec::new(),
            monodromy: None,
        }
    }

    /// Closed annulus `[u0, u0 + circumference) x [v0, v1]` with `u` periodic.
    pub fn annulus(u0: f64, circumference: f64, v0: f64, v1: f64) -> Result<Self> {
        if !(circumference > 0.0 && v1 > v0) {
            return Err(FlowError::InvalidParameter("degenerate annulus".into()));
        }
        Ok(SurfaceAtlas {
            kind: AtlasKind::ClosedAnnulus,
            chart_domains: vec![Rect::new(u0, u0 + circumference, v0, v1)],
            boundary: vec![v0, v1],
            monodromy: None,
        })
    }

    /// Mapping torus of the circle map `g`.
    pub fn mapping_torus(g: CircleMap) -> Self {
        SurfaceAtlas {
            kind: AtlasKind::MappingTorus,
            chart_domains: vec![Rect::new(0.0, 1.0, 0.0, 1.0)],
            boundary: Vec::new(),
            monodromy: Some(Arc::new(g)),
        }
    }

    pub fn kind(&self) -> AtlasKind {
        self.kind
    }

    pub fn chart_domains(&self) -> &[Rect] {
        &self.chart_domains
    }

    pub fn chart_count(&self) -> usize {
        self.chart_domains.len()
    }

    pub fn boundary_circles(&self) -> &[f64] {
        &self.boundary
    }

    pub fn monodromy(&self) -> Option<&CircleMap> {
        self.monodromy.as_deref()
    }

    /// Fundamental domain used for occupancy grids and rendering.
    pub fn fundamental_domain(&self) -> Rect {
        self.chart_domains[0]
    }

    fn check_chart(&self, p: &SurfacePoint) -> Result<()> {
        if (p.chart as usize) < self.chart_domains.len() && p.u.is_finite() && p.v.is_finite() {
            Ok(())
        } else {
            Err(p.out_of_atlas())
        }
    }

    /// Whether `p` lies in the declared domain of its chart.
    pub fn in_domain(&self, p: &SurfacePoint) -> bool {
        if self.check_chart(p).is_err() {
            return false;
        }
        let d = &self.chart_domains[p.chart as usize];
        match self.kind {
            AtlasKind::Sphere => p.u.hypot(p.v) < SPHERE_CHART_RADIUS,
            AtlasKind::ClosedAnnulus => p.v >= d.v0 && p.v <= d.v1,
            _ => d.contains(p.u, p.v) && p.u < d.u1 && p.v < d.v1,
        }
    }

    /// Canonical representative in the preferred chart.
    pub fn normalize(&self, p: &SurfacePoint) -> Result<SurfacePoint> {
        self.check_chart(p)?;
        let d = self.chart_domains[p.chart as usize];
        match self.kind {
            AtlasKind::Torus => {
                if (p.u - wrap01(p.u)).abs() > 2.0 || (p.v - wrap01(p.v)).abs() > 2.0 {
                    return Err(p.out_of_atlas());
                }
                Ok(SurfacePoint::new(0, wrap01(p.u), wrap01(p.v)))
            }
            AtlasKind::ClosedAnnulus => {
                let tol = 1e-12 * d.height().max(1.0);
                if p.v < d.v0 - tol || p.v > d.v1 + tol {
                    return Err(p.out_of_atlas());
                }
                let u = d.u0 + d.width() * wrap01((p.u - d.u0) / d.width());
                Ok(SurfacePoint::new(0, u, p.v.clamp(d.v0, d.v1)))
            }
            AtlasKind::MappingTorus => {
                let g = self.monodromy.as_ref().expect("mapping torus carries a monodromy");
                let (mut u, mut v) = (p.u, p.v);
                if !(-2.0..=3.0).contains(&u) {
                    return Err(p.out_of_atlas());
                }
                while u >= 1.0 {
                    u -= 1.0;
                    v = g.apply(v);
                }
                while u < 0.0 {
                    u += 1.0;
                    v = g.apply_inverse(v);
                }
                Ok(SurfacePoint::new(0, u, wrap01(v)))
            }
            AtlasKind::Sphere => {
                let r = p.u.hypot(p.v);
                if r >= SPHERE_CHART_RADIUS {
                    return Err(p.out_of_atlas());
                }
                if r <= 1.0 {
                    Ok(*p)
                } else {
                    self.transition(p, 1 - p.chart)
                }
            }
        }
    }

    /// Keeps the current chart unless the point passed the switching radius
    /// (sphere only); other atlases normalize.
    pub fn settle(&self, p: &SurfacePoint) -> Result<SurfacePoint> {
        match self.kind {
            AtlasKind::Sphere => {
                self.check_chart(p)?;
                let r = p.u.hypot(p.v);
                if r > SPHERE_SWITCH_RADIUS {
                    self.transition(p, 1 - p.chart)
                } else {
                    Ok(*p)
                }
            }
            _ => self.normalize(p),
        }
    }

    /// Expresses `p` in chart `to`.
    pub fn transition(&self, p: &SurfacePoint, to: u8) -> Result<SurfacePoint> {
        self.check_chart(p)?;
        if (to as usize) >= self.chart_domains.len() {
            return Err(FlowError::OutOfAtlas { chart: to, u: p.u, v: p.v });
        }
        if to == p.chart {
            return Ok(*p);
        }
        // only the sphere has more than one chart
        let r2 = p.u * p.u + p.v * p.v;
        if r2 < 1.0 / (SPHERE_CHART_RADIUS * SPHERE_CHART_RADIUS) {
            return Err(p.out_of_atlas());
        }
        Ok(SurfacePoint::new(to, p.u / r2, -p.v / r2))
    }

    /// Pushes the chart vector `(du, dv)` at `p` into chart `to`.
    pub fn push_vector(&self, p: &SurfacePoint, vec: [f64; 2], to: u8) -> Result<[f64; 2]> {
        if to == p.chart {
            return Ok(vec);
        }
        self.check_chart(p)?;
        // w = 1/z, dw = -dz / z^2
        let (a, b) = (p.u, p.v);
        let r2 = a * a + b * b;
        if r2 == 0.0 {
            return Err(p.out_of_atlas());
        }
        // 1/z^2 = conj(z)^2 / |z|^4
        let (cr, ci) = ((a * a - b * b) / (r2 * r2), (-2.0 * a * b) / (r2 * r2));
        let (dr, di) = (vec[0], vec[1]);
        Ok([-(dr * cr - di * ci), -(dr * ci + di * cr)])
    }

    /// Unit-sphere embedding of a sphere chart point.
    pub fn to_ambient(&self, p: &SurfacePoint) -> Result<[f64; 3]> {
        if self.kind != AtlasKind::Sphere {
            return Err(FlowError::InvalidParameter("ambient coordinates exist only for the sphere".into()));
        }
        self.check_chart(p)?;
        let r2 = p.u * p.u + p.v * p.v;
        let s = 1.0 + r2;
        Ok(if p.chart == 0 {
            [2.0 * p.u / s, 2.0 * p.v / s, (r2 - 1.0) / s]
        } else {
            [2.0 * p.u / s, -2.0 * p.v / s, (1.0 - r2) / s]
        })
    }

    /// Chart coordinates of an ambient unit vector in the preferred chart.
    pub fn from_ambient(&self, x: [f64; 3]) -> SurfacePoint {
        let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let (a, b, c) = (x[0] / n, x[1] / n, x[2] / n);
        if c <= 0.0 {
            SurfacePoint::new(0, a / (1.0 - c), b / (1.0 - c))
        } else {
            SurfacePoint::new(1, a / (1.0 + c), -b / (1.0 + c))
        }
    }

    /// Chart differential applied to an ambient tangent vector.
    pub fn ambient_to_chart_vector(&self, p: &SurfacePoint, x: [f64; 3], f: [f64; 3]) -> [f64; 2] {
        if p.chart == 0 {
            let d = 1.0 - x[2];
            [f[0] / d + x[0] * f[2] / (d * d), f[1] / d + x[1] * f[2] / (d * d)]
        } else {
            let d = 1.0 + x[2];
            [f[0] / d - x[0] * f[2] / (d * d), -f[1] / d + x[1] * f[2] / (d * d)]
        }
    }

    /// Intrinsic distance: flat quotient metric on torus, annulus and mapping
    /// torus (through the identification), round geodesic on the sphere.
    pub fn distance(&self, p: &SurfacePoint, q: &SurfacePoint) -> Result<f64> {
        let p = self.normalize(p)?;
        let q = self.normalize(q)?;
        Ok(match self.kind {
            AtlasKind::Torus => wrap_diff(p.u - q.u, 1.0).hypot(wrap_diff(p.v - q.v, 1.0)),
            AtlasKind::ClosedAnnulus => {
                let w = self.chart_domains[0].width();
                wrap_diff(p.u - q.u, w).hypot(p.v - q.v)
            }
            AtlasKind::MappingTorus => {
                let g = self.monodromy.as_ref().expect("mapping torus carries a monodromy");
                let flat = |qu: f64, qv: f64| (p.u - qu).hypot(wrap_diff(p.v - qv, 1.0));
                let direct = flat(q.u, q.v);
                let up = flat(q.u + 1.0, g.apply_inverse(q.v));
                let down = flat(q.u - 1.0, g.apply(q.v));
                // symmetric by construction: also route through p's copies
                let flat_q = |pu: f64, pv: f64| (q.u - pu).hypot(wrap_diff(q.v - pv, 1.0));
                let up_p = flat_q(p.u + 1.0, g.apply_inverse(p.v));
                let down_p = flat_q(p.u - 1.0, g.apply(p.v));
                direct.min(up).min(down).min(up_p).min(down_p)
            }
            AtlasKind::Sphere => {
                let a = self.to_ambient(&p)?;
                let b = self.to_ambient(&q)?;
                let cross = [
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ];
                let s = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
                let c = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
                s.atan2(c)
            }
        })
    }

    /// Round-trip defect of the transitions along `via` (cocycle check).
    pub fn cocycle_defect(&self, p: &SurfacePoint, via: &[u8]) -> Result<f64> {
        let mut q = *p;
        for &c in via {
            q = self.transition(&q, c)?;
        }
        let back = self.transition(&q, p.chart)?;
        Ok((back.u - p.u).hypot(back.v - p.v))
    }

    /// Upper bound for intrinsic distances on this surface.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            AtlasKind::Sphere => PI,
            _ => {
                let d = self.chart_domains[0];
                d.width().hypot(d.height())
            }
        }
    }
}
