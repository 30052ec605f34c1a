//! Flow catalog: parametric, exactly evaluable vector fields with an ordered
//! surgery stack.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::atlas::{wrap_diff, AtlasKind, SurfaceAtlas, SurfacePoint};
use crate::circle_map::CircleMap;
use crate::error::{FlowError, Result};
use crate::surgery::SurgerySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianId {
    /// `sin(2 pi x) sin(2 pi y)` on the torus.
    TorusSinSin,
    /// Height `z` on the round sphere.
    SphereHeight,
    /// Constant function on the torus.
    TorusConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightId {
    TorusSinSin,
    SphereHeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseField {
    LinearTorus { slope: f64 },
    DenjoySuspension { rho: f64, gap_constant: f64, depth: usize },
    Hamiltonian { id: HamiltonianId },
    Gradient { id: HeightId },
    SingleLimitCycleTorus,
    ReebSingularCircleTorus,
    MorseSmaleSphere,
    /// Horizontal unit field on the annulus `R/3Z x [-1, 2]`.
    TrivialAnnulus,
}

impl BaseField {
    pub fn name(&self) -> &'static str {
        match self {
            BaseField::LinearTorus { .. } => "linear_torus",
            BaseField::DenjoySuspension { .. } => "denjoy_suspension",
            BaseField::Hamiltonian { .. } => "hamiltonian",
            BaseField::Gradient { .. } => "gradient",
            BaseField::SingleLimitCycleTorus => "single_limit_cycle_torus",
            BaseField::ReebSingularCircleTorus => "reeb_singular_circle_torus",
            BaseField::MorseSmaleSphere => "morse_smale_sphere",
            BaseField::TrivialAnnulus => "trivial_annulus",
        }
    }
}

/// Transverse sections used for return maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Section {
    /// Circle `u = c` (periodic in `v`).
    CircleU { c: f64 },
    /// Circle `v = c`.
    CircleV { c: f64 },
    /// Ray of polar angle `angle` in `chart`, radii in `[r0, r1]`.
    Ray { chart: u8, angle: f64, r0: f64, r1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub base: BaseField,
    pub surgeries: Vec<SurgerySpec>,
    pub atlas: SurfaceAtlas,
    /// Time reversal: the field is negated.
    pub reversed: bool,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

const TORUS_CENTERS: [(f64, f64); 4] = [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)];
const TORUS_SADDLES: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)];

impl FieldSpec {
    fn plain(base: BaseField, atlas: SurfaceAtlas) -> Self {
        FieldSpec { base, surgeries: Vec::new(), atlas, reversed: false }
    }

    pub fn linear_torus(slope: f64) -> Self {
        Self::plain(BaseField::LinearTorus { slope }, SurfaceAtlas::torus())
    }

    pub fn denjoy_suspension(rho: f64, gap_constant: f64, depth: usize) -> Result<Self> {
        let g = CircleMap::denjoy(rho, gap_constant, depth)?;
        Ok(Self::plain(BaseField::DenjoySuspension { rho, gap_constant, depth }, SurfaceAtlas::mapping_torus(g)))
    }

    pub fn gradient(id: HeightId) -> Self {
        let atlas = match id {
            HeightId::TorusSinSin => SurfaceAtlas::torus(),
            HeightId::SphereHeight => SurfaceAtlas::sphere(),
        };
        Self::plain(BaseField::Gradient { id }, atlas)
    }

    pub fn single_limit_cycle_torus() -> Self {
        Self::plain(BaseField::SingleLimitCycleTorus, SurfaceAtlas::torus())
    }

    pub fn reeb_singular_circle_torus() -> Self {
        Self::plain(BaseField::ReebSingularCircleTorus, SurfaceAtlas::torus())
    }

    pub fn morse_smale_sphere() -> Self {
        Self::plain(BaseField::MorseSmaleSphere, SurfaceAtlas::sphere())
    }

    pub fn trivial_annulus() -> Self {
        let atlas = SurfaceAtlas::annulus(-1.0, 3.0, -1.0, 2.0).expect("valid annulus");
        Self::plain(BaseField::TrivialAnnulus, atlas)
    }

    /// Catalog field for `base` on its canonical surface.
    pub fn from_base(base: BaseField) -> Result<Self> {
        match base {
            BaseField::LinearTorus { slope } => {
                if !slope.is_finite() {
                    return Err(FlowError::InvalidParameter("slope must be finite".into()));
                }
                Ok(Self::linear_torus(slope))
            }
            BaseField::DenjoySuspension { rho, gap_constant, depth } => Self::denjoy_suspension(rho, gap_constant, depth),
            BaseField::Hamiltonian { id } => {
                let atlas = match id {
                    HamiltonianId::SphereHeight => SurfaceAtlas::sphere(),
                    _ => SurfaceAtlas::torus(),
                };
                hamiltonian_field(id, &atlas)
            }
            BaseField::Gradient { id } => Ok(Self::gradient(id)),
            BaseField::SingleLimitCycleTorus => Ok(Self::single_limit_cycle_torus()),
            BaseField::ReebSingularCircleTorus => Ok(Self::reeb_singular_circle_torus()),
            BaseField::MorseSmaleSphere => Ok(Self::morse_smale_sphere()),
            BaseField::TrivialAnnulus => Ok(Self::trivial_annulus()),
        }
    }

    /// Same field with time reversed.
    pub fn reversed(&self) -> Self {
        let mut r = self.clone();
        r.reversed = !r.reversed;
        r
    }

    pub fn name(&self) -> String {
        let mut s = self.base.name().to_string();
        if let BaseField::Hamiltonian { id } = self.base {
            s.push_str(&format!("({id:?})"));
        }
        if let BaseField::Gradient { id } = self.base {
            s.push_str(&format!("({id:?})"));
        }
        for _ in &self.surgeries {
            s.push('+');
        }
        if self.reversed {
            s.push_str("~rev");
        }
        s
    }

    /// Base vector field (no surgeries, reversal applied) at a possibly
    /// unnormalized chart point.
    pub fn base_eval_raw(&self, p: &SurfacePoint) -> [f64; 2] {
        let v = match self.base {
            BaseField::LinearTorus { slope } => [1.0, slope],
            BaseField::DenjoySuspension { .. } | BaseField::TrivialAnnulus => [1.0, 0.0],
            BaseField::SingleLimitCycleTorus => {
                let s = (PI * p.v).sin();
                [1.0, s * s]
            }
            BaseField::ReebSingularCircleTorus => {
                let s = (PI * p.v).sin();
                [s.abs(), s * s]
            }
            BaseField::Hamiltonian { id: HamiltonianId::TorusSinSin } => {
                let (hx, hy) = sinsin_grad(p.u, p.v);
                [hy, -hx]
            }
            BaseField::Hamiltonian { id: HamiltonianId::TorusConstant } => [0.0, 0.0],
            BaseField::Gradient { id: HeightId::TorusSinSin } => {
                let (hx, hy) = sinsin_grad(p.u, p.v);
                [hx, hy]
            }
            BaseField::Hamiltonian { id: HamiltonianId::SphereHeight } => self.sphere_vector(p, |x| cross(x, [0.0, 0.0, 1.0])),
            BaseField::Gradient { id: HeightId::SphereHeight } => {
                self.sphere_vector(p, |x| [-x[2] * x[0], -x[2] * x[1], 1.0 - x[2] * x[2]])
            }
            BaseField::MorseSmaleSphere => self.sphere_vector(p, |x| {
                let z = x[2];
                [z * z * x[0] - x[1], z * z * x[1] + x[0], -z * (1.0 - z * z)]
            }),
        };
        if self.reversed {
            [-v[0], -v[1]]
        } else {
            v
        }
    }

    fn sphere_vector(&self, p: &SurfacePoint, f: impl Fn([f64; 3]) -> [f64; 3]) -> [f64; 2] {
        match self.atlas.to_ambient(p) {
            Ok(x) => self.atlas.ambient_to_chart_vector(p, x, f(x)),
            Err(_) => [f64::NAN, f64::NAN],
        }
    }

    /// Product of all surgery factors at `p`.
    pub fn surgery_factor(&self, p: &SurfacePoint) -> f64 {
        self.surgeries.iter().map(|s| s.factor(&self.atlas, p)).product()
    }

    /// Field value at a chart point that may lie slightly outside its
    /// chart rectangle (as happens for Runge-Kutta stages).
    pub fn eval_raw(&self, p: &SurfacePoint) -> [f64; 2] {
        let v = self.base_eval_raw(p);
        if self.surgeries.is_empty() {
            return v;
        }
        let f = self.surgery_factor(p);
        [v[0] * f, v[1] * f]
    }

    /// Tangent vector at `p` in chart components.
    pub fn eval(&self, p: &SurfacePoint) -> Result<[f64; 2]> {
        self.atlas.normalize(p)?;
        Ok(self.eval_raw(p))
    }

    /// Distance from `p` to the declared singular set: base zeros together
    /// with every surgery zero set.
    pub fn sing_distance(&self, p: &SurfacePoint) -> f64 {
        let mut d = self.base_sing_distance(p);
        for s in &self.surgeries {
            d = d.min(s.zero_set_distance(&self.atlas, p));
        }
        d
    }

    fn base_sing_distance(&self, p: &SurfacePoint) -> f64 {
        let pts = self.base_sing_points();
        if !pts.is_empty() {
            return pts
                .iter()
                .map(|q| self.atlas.distance(p, q).unwrap_or(f64::INFINITY))
                .fold(f64::INFINITY, f64::min);
        }
        match self.base {
            BaseField::ReebSingularCircleTorus => wrap_diff(p.v, 1.0).abs(),
            BaseField::Hamiltonian { id: HamiltonianId::TorusConstant } => 0.0,
            _ => f64::INFINITY,
        }
    }

    /// Isolated zeros of the base field.
    pub fn base_sing_points(&self) -> Vec<SurfacePoint> {
        match self.base {
            BaseField::Hamiltonian { id: HamiltonianId::TorusSinSin } | BaseField::Gradient { id: HeightId::TorusSinSin } => {
                TORUS_CENTERS.iter().chain(TORUS_SADDLES.iter()).map(|&(u, v)| SurfacePoint::at(u, v)).collect()
            }
            BaseField::Hamiltonian { id: HamiltonianId::SphereHeight }
            | BaseField::Gradient { id: HeightId::SphereHeight }
            | BaseField::MorseSmaleSphere => vec![SurfacePoint::new(0, 0.0, 0.0), SurfacePoint::new(1, 0.0, 0.0)],
            _ => Vec::new(),
        }
    }

    /// Whether the declared singular set is finite.
    pub fn sing_is_finite(&self) -> bool {
        let base_ok = !matches!(
            self.base,
            BaseField::ReebSingularCircleTorus | BaseField::Hamiltonian { id: HamiltonianId::TorusConstant }
        );
        base_ok && self.surgeries.iter().all(|s| s.is_point_like())
    }

    /// All declared isolated singular points (base zeros and point surgeries).
    pub fn declared_sing_points(&self) -> Vec<SurfacePoint> {
        let mut pts = self.base_sing_points();
        for s in &self.surgeries {
            if s.is_point_like() {
                pts.extend(s.zero_set_samples());
            }
        }
        pts
    }

    /// Hamiltonian function when the base is a Hamiltonian field.
    pub fn hamiltonian_value(&self, p: &SurfacePoint) -> Option<f64> {
        match self.base {
            BaseField::Hamiltonian { id } => Some(hamiltonian_in_chart(id, p)),
            _ => None,
        }
    }

    /// Height function when the base is a gradient field.
    pub fn height_value(&self, p: &SurfacePoint) -> Option<f64> {
        match self.base {
            BaseField::Gradient { id: HeightId::TorusSinSin } => Some(sinsin(p.u, p.v)),
            BaseField::Gradient { id: HeightId::SphereHeight } => Some(hamiltonian_in_chart(HamiltonianId::SphereHeight, p)),
            _ => None,
        }
    }

    /// Transverse section used by return-map diagnostics, if the base has a
    /// global one.
    pub fn default_section(&self) -> Option<Section> {
        match self.base {
            BaseField::LinearTorus { .. } | BaseField::SingleLimitCycleTorus | BaseField::ReebSingularCircleTorus => {
                Some(Section::CircleU { c: 0.0 })
            }
            BaseField::DenjoySuspension { .. } => Some(Section::CircleU { c: 0.5 }),
            BaseField::TrivialAnnulus => Some(Section::CircleU { c: -0.9 }),
            BaseField::Hamiltonian { id: HamiltonianId::SphereHeight } | BaseField::MorseSmaleSphere => {
                Some(Section::Ray { chart: 0, angle: 0.0, r0: 0.0, r1: 1.5 })
            }
            _ => None,
        }
    }

    /// Whether the catalog declares the base flow non-wandering.
    pub fn is_non_wandering_catalog(&self) -> bool {
        matches!(
            self.base,
            BaseField::LinearTorus { .. } | BaseField::Hamiltonian { .. } | BaseField::ReebSingularCircleTorus
        ) && self.surgeries.is_empty()
    }

    /// Widest wandering interval of a Denjoy base, if any.
    pub fn widest_gap(&self) -> Option<f64> {
        match self.base {
            BaseField::DenjoySuspension { gap_constant, .. } if gap_constant > 0.0 => Some(gap_constant),
            _ => None,
        }
    }
}

fn sinsin(x: f64, y: f64) -> f64 {
    (TAU * x).sin() * (TAU * y).sin()
}

fn sinsin_grad(x: f64, y: f64) -> (f64, f64) {
    let (sx, cx) = (TAU * x).sin_cos();
    let (sy, cy) = (TAU * y).sin_cos();
    (TAU * cx * sy, TAU * sx * cy)
}

/// Chart-wise formula of the Hamiltonian `id`.
pub fn hamiltonian_in_chart(id: HamiltonianId, p: &SurfacePoint) -> f64 {
    match id {
        HamiltonianId::TorusSinSin => sinsin(p.u, p.v),
        HamiltonianId::TorusConstant => 0.0,
        HamiltonianId::SphereHeight => {
            let r2 = p.u * p.u + p.v * p.v;
            let z = (r2 - 1.0) / (r2 + 1.0);
            if p.chart == 0 {
                z
            } else {
                -z
            }
        }
    }
}

/// Symplectic-gradient field of the Hamiltonian `id` on `atlas`. Chart
/// values of `h` are compared on overlaps first.
pub fn hamiltonian_field(id: HamiltonianId, atlas: &SurfaceAtlas) -> Result<FieldSpec> {
    let expected = match id {
        HamiltonianId::TorusSinSin | HamiltonianId::TorusConstant => AtlasKind::Torus,
        HamiltonianId::SphereHeight => AtlasKind::Sphere,
    };
    if atlas.kind() != expected {
        return Err(FlowError::InvalidParameter(format!("{id:?} lives on {expected:?}, not {:?}", atlas.kind())));
    }
    let mut worst: f64 = 0.0;
    for i in 0..64 {
        let a = TAU * i as f64 / 64.0;
        match expected {
            AtlasKind::Sphere => {
                for r in [0.6, 1.0, 1.4, 1.9] {
                    let p = SurfacePoint::new(0, r * a.cos(), r * a.sin());
                    let q = atlas.transition(&p, 1)?;
                    worst = worst.max((hamiltonian_in_chart(id, &p) - hamiltonian_in_chart(id, &q)).abs());
                }
            }
            _ => {
                let t = i as f64 / 64.0;
                for (p, q) in [
                    (SurfacePoint::at(0.0, t), SurfacePoint::at(1.0, t)),
                    (SurfacePoint::at(t, 0.0), SurfacePoint::at(t, 1.0)),
                ] {
                    worst = worst.max((hamiltonian_in_chart(id, &p) - hamiltonian_in_chart(id, &q)).abs());
                }
            }
        }
    }
    if worst > 1e-9 {
        return Err(FlowError::InconsistentHamiltonian(worst));
    }
    Ok(FieldSpec::plain(BaseField::Hamiltonian { id }, atlas.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_map::golden_rotation;

    #[test]
    fn linear_torus_constant() {
        let f = FieldSpec::linear_torus(golden_rotation());
        let v = f.eval(&SurfacePoint::at(0.3, 0.9)).unwrap();
        assert_eq!(v, [1.0, golden_rotation()]);
    }

    #[test]
    fn sinsin_zeros() {
        let f = hamiltonian_field(HamiltonianId::TorusSinSin, &SurfaceAtlas::torus()).unwrap();
        assert_eq!(f.eval(&SurfacePoint::at(0.0, 0.0)).unwrap(), [0.0, 0.0]);
        for p in f.base_sing_points() {
            let v = f.eval(&p).unwrap();
            assert!(v[0].hypot(v[1]) < 1e-12);
        }
        assert_eq!(f.base_sing_points().len(), 8);
    }

    #[test]
    fn constant_hamiltonian_vanishes() {
        let f = hamiltonian_field(HamiltonianId::TorusConstant, &SurfaceAtlas::torus()).unwrap();
        assert_eq!(f.eval(&SurfacePoint::at(0.4, 0.1)).unwrap(), [0.0, 0.0]);
        assert!(!f.sing_is_finite());
    }

    #[test]
    fn wrong_atlas_rejected() {
        assert!(hamiltonian_field(HamiltonianId::SphereHeight, &SurfaceAtlas::torus()).is_err());
    }

    #[test]
    fn hamiltonian_is_rotated_gradient() {
        let f = hamiltonian_field(HamiltonianId::SphereHeight, &SurfaceAtlas::sphere()).unwrap();
        let h = 1e-6;
        for chart in [0u8, 1] {
            for &(u, v) in &[(0.3, 0.2), (-0.7, 0.5), (1.2, -0.4)] {
                let p = SurfacePoint::new(chart, u, v);
                let hu = (hamiltonian_in_chart(HamiltonianId::SphereHeight, &SurfacePoint::new(chart, u + h, v))
                    - hamiltonian_in_chart(HamiltonianId::SphereHeight, &SurfacePoint::new(chart, u - h, v)))
                    / (2.0 * h);
                let hv = (hamiltonian_in_chart(HamiltonianId::SphereHeight, &SurfacePoint::new(chart, u, v + h))
                    - hamiltonian_in_chart(HamiltonianId::SphereHeight, &SurfacePoint::new(chart, u, v - h)))
                    / (2.0 * h);
                let y = f.eval(&p).unwrap();
                // parallel and same orientation as (H_v, -H_u)
                let crossz = y[0] * (-hu) - y[1] * hv;
                let dot = y[0] * hv + y[1] * (-hu);
                assert!(crossz.abs() < 1e-6 * (1.0 + dot.abs()), "chart {chart}");
                assert!(dot > 0.0);
            }
        }
    }

    #[test]
    fn sphere_field_continuous_across_charts() {
        for f in [
            FieldSpec::morse_smale_sphere(),
            FieldSpec::gradient(HeightId::SphereHeight),
            hamiltonian_field(HamiltonianId::SphereHeight, &SurfaceAtlas::sphere()).unwrap(),
        ] {
            for i in 0..50 {
                let a = TAU * i as f64 / 50.0;
                let r = 0.6 + 1.3 * (i as f64 / 50.0);
                let p = SurfacePoint::new(0, r * a.cos(), r * a.sin());
                let q = f.atlas.transition(&p, 1).unwrap();
                let pushed = f.atlas.push_vector(&p, f.eval(&p).unwrap(), 1).unwrap();
                let direct = f.eval(&q).unwrap();
                assert!((pushed[0] - direct[0]).abs() < 1e-9 && (pushed[1] - direct[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn morse_smale_equator_is_rotation() {
        let f = FieldSpec::morse_smale_sphere();
        let p = SurfacePoint::new(0, 1.0, 0.0);
        let v = f.eval(&p).unwrap();
        assert!(v[0].abs() < 1e-12 && v[1] > 0.0);
        // below the equator the flow moves outward (toward z = 0)
        let q = SurfacePoint::new(0, 0.5, 0.0);
        assert!(f.eval(&q).unwrap()[0] > 0.0);
    }

    #[test]
    fn reeb_singular_circle() {
        let f = FieldSpec::reeb_singular_circle_torus();
        assert_eq!(f.eval(&SurfacePoint::at(0.5, 0.0)).unwrap(), [0.0, 0.0]);
        assert!(f.sing_distance(&SurfacePoint::at(0.2, 0.999)) < 2e-3);
        for i in 1..100 {
            let v = f.eval(&SurfacePoint::at(0.5, i as f64 / 100.0)).unwrap();
            assert!(v[0] > 0.0 && v[1] > 0.0);
        }
    }

    #[test]
    fn reversed_negates() {
        let f = FieldSpec::single_limit_cycle_torus();
        let p = SurfacePoint::at(0.2, 0.3);
        let a = f.eval(&p).unwrap();
        let b = f.reversed().eval(&p).unwrap();
        assert_eq!(a, [-b[0], -b[1]]);
    }

    #[test]
    fn denjoy_zero_gap_is_rotation() {
        let f = FieldSpec::denjoy_suspension(golden_rotation(), 0.0, 10).unwrap();
        assert!(matches!(f.atlas.monodromy(), Some(CircleMap::RigidRotation(_))));
    }
}
