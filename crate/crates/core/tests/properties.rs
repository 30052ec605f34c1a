use proptest::prelude::*;

use flowlab::atlas::{SurfaceAtlas, SurfacePoint};
use flowlab::cantor::{CantorApprox, CantorStripSet};
use flowlab::circle_map::{golden_rotation, CircleMap};
use flowlab::config::{FieldConfig, RunConfig, SurgeryConfig, Task};
use flowlab::field::{BaseField, FieldSpec};
use flowlab::integrator::flow_map;
use flowlab::surgery::SurgeryKind;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_normalize_is_idempotent(u in -1.9f64..2.9, v in -1.9f64..2.9) {
        let a = SurfaceAtlas::torus();
        let p = a.normalize(&SurfacePoint::at(u, v)).unwrap();
        prop_assert!((0.0..1.0).contains(&p.u) && (0.0..1.0).contains(&p.v));
        prop_assert_eq!(a.normalize(&p).unwrap(), p);
        prop_assert!(a.distance(&p, &SurfacePoint::at(u, v)).unwrap() < 1e-12);
    }

    #[test]
    fn sphere_charts_agree(r in 0.96f64..1.04, t in 0.0f64..std::f64::consts::TAU) {
        let a = SurfaceAtlas::sphere();
        let p = SurfacePoint::new(0, r * t.cos(), r * t.sin());
        let q = a.transition(&p, 1).unwrap();
        let back = a.transition(&q, 0).unwrap();
        prop_assert!((back.u - p.u).abs() < 1e-12 && (back.v - p.v).abs() < 1e-12);
        let x = a.to_ambient(&p).unwrap();
        let y = a.to_ambient(&q).unwrap();
        prop_assert!((0..3).all(|i| (x[i] - y[i]).abs() < 1e-12));
        prop_assert!(((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_push_vector_matches_difference(r in 0.96f64..1.04, t in 0.0f64..std::f64::consts::TAU, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let at = SurfaceAtlas::sphere();
        let p = SurfacePoint::new(0, r * t.cos(), r * t.sin());
        let h = 1e-6;
        let q = SurfacePoint::new(0, p.u + h * a, p.v + h * b);
        let (pp, qq) = (at.transition(&p, 1).unwrap(), at.transition(&q, 1).unwrap());
        let w = at.push_vector(&p, [a, b], 1).unwrap();
        prop_assert!(((qq.u - pp.u) / h - w[0]).abs() < 1e-4);
        prop_assert!(((qq.v - pp.v) / h - w[1]).abs() < 1e-4);
    }

    #[test]
    fn cantor_distance_zero_iff_member(k in 1u32..9, x in 0.0f64..0.5) {
        let c = CantorApprox::new(k);
        let d = c.distance(x);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(c.contains(x), d == 0.0);
        // nested approximations
        if k > 1 {
            prop_assert!(CantorApprox::new(k - 1).distance(x) <= d + 1e-15);
        }
    }

    #[test]
    fn strip_distance_is_one_lipschitz(k in 1u32..6, x in -0.2f64..0.7, w in -0.2f64..1.2, dx in -0.01f64..0.01, dw in -0.01f64..0.01) {
        let s = CantorStripSet::new(k);
        let d0 = s.distance(x, w);
        let d1 = s.distance(x + dx, w + dw);
        prop_assert!((d0 - d1).abs() <= dx.hypot(dw) + 1e-12);
        prop_assert_eq!(s.contains(x, w), d0 == 0.0);
    }

    #[test]
    fn denjoy_lift_is_monotone_and_invertible(x in 0.0f64..1.0, dx in 1e-6f64..0.5) {
        let g = CircleMap::denjoy(golden_rotation(), 0.1, 200).unwrap();
        let (a, b) = (g.lift(x), g.lift(x + dx));
        prop_assert!(b > a);
        prop_assert!((g.lift(x + 1.0) - a - 1.0).abs() < 1e-12);
        prop_assert!((g.lift_inverse(a) - x).abs() < 1e-9);
    }

    #[test]
    fn linear_flow_is_exact_translation(slope in -2.0f64..2.0, u in 0.0f64..1.0, v in 0.0f64..1.0, t in 0.0f64..3.0) {
        let f = FieldSpec::linear_torus(slope);
        let y = flow_map(&f, &SurfacePoint::at(u, v), t, 1e-10).unwrap();
        let w = f.eval(&SurfacePoint::at(u, v)).unwrap();
        let expect = SurfacePoint::at((u + t * w[0]).rem_euclid(1.0), (v + t * w[1]).rem_euclid(1.0));
        prop_assert!(f.atlas.distance(&y, &expect).unwrap() < 1e-9);
    }

    #[test]
    fn flow_composes(u in 0.0f64..1.0, v in 0.0f64..1.0, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let f = FieldSpec::single_limit_cycle_torus();
        let x = SurfacePoint::at(u, v);
        let a = flow_map(&f, &x, s + t, 1e-10).unwrap();
        let b = flow_map(&f, &flow_map(&f, &x, t, 1e-10).unwrap(), s, 1e-10).unwrap();
        prop_assert!(f.atlas.distance(&a, &b).unwrap() < 1e-9);
    }

    #[test]
    fn config_round_trips(seed in 0..=i64::MAX as u64, slope in -3.0f64..3.0, radius in 0.01f64..0.2, budget in 1.0f64..1e4) {
        let mut cfg = RunConfig::new(Task::Classify);
        cfg.seed = seed;
        cfg.limits.budget = budget;
        cfg.field = Some(FieldConfig {
            base: BaseField::LinearTorus { slope },
            surgery: vec![SurgeryConfig { kind: SurgeryKind::FakeSaddle { point: SurfacePoint::at(0.5, 0.5), radius }, tau: None }],
            reversed: false,
        });
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}
