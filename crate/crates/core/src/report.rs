//! Task dispatch and JSON reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::atlas::{AtlasKind, SurfaceAtlas, SurfacePoint};
use crate::config::{RunConfig, Task};
use crate::error::{FlowError, Result};
use crate::hamiltonian::{hamiltonian_verdict, pre_hamiltonian_check};
use crate::field::BaseField;
use crate::integrator::{integrate, IntegratorSettings};
use crate::limits::{classify_limit, detect_wandering_domain, orbit_class, LimitSetReport, OrbitClass, Side};
use crate::par::map_ordered;
use crate::render::render_phase_portrait;
use crate::tables::{case_ids, run_tables};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything a run produces; the CLI decides where it goes.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: String,
    pub summary: Vec<String>,
    pub trajectory: Option<String>,
    pub svg: Option<String>,
    pub dot: Option<String>,
}

fn to_json<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| FlowError::Io(format!("serialization: {e}")))
}

/// Uniform random point on the surface.
pub fn random_point(atlas: &SurfaceAtlas, rng: &mut ChaCha8Rng) -> SurfacePoint {
    match atlas.kind() {
        AtlasKind::Sphere => {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - z * z).sqrt();
            atlas.from_ambient([s * t.cos(), s * t.sin(), z])
        }
        _ => {
            let d = atlas.fundamental_domain();
            SurfacePoint::new(0, rng.gen_range(d.u0..d.u1), rng.gen_range(d.v0..d.v1))
        }
    }
}

#[derive(Serialize)]
struct ClassifyEntry {
    start: SurfacePoint,
    alpha: LimitSetReport,
    omega: LimitSetReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    orbit_class: Option<OrbitClass>,
}

/// Runs the configured task on up to `threads` workers.
pub fn run(cfg: &RunConfig, threads: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let mut out = RunOutput { report: String::new(), summary: Vec::new(), trajectory: None, svg: None, dot: None };
    let result = match cfg.task {
        Task::Simulate => {
            let spec = cfg.field_spec()?;
            let s = &cfg.simulate;
            let settings = IntegratorSettings { t_budget: s.t_budget, record_dt: s.record_dt, tol: s.tol, ..IntegratorSettings::default() };
            let trajs = map_ordered(&s.starts, threads, |x| integrate(&spec, x, &settings, s.direction.into()));
            let mut text = String::new();
            let mut entries = Vec::new();
            for (i, t) in trajs.into_iter().enumerate() {
                let t = t?;
                text.push_str(&format!("# start {i}\n"));
                text.push_str(&t.to_text());
                out.summary.push(format!("start {i}: {:?} after t = {}", t.termination, t.elapsed));
                entries.push(json!({
                    "start": s.starts[i],
                    "termination": t.termination,
                    "final_point": t.final_point,
                    "elapsed": t.elapsed,
                    "steps": t.steps,
                    "rejected": t.rejected,
                    "samples": t.samples.len(),
                }));
            }
            out.trajectory = Some(text);
            json!({ "field": spec.name(), "trajectories": entries })
        }
        Task::Classify => {
            let spec = cfg.field_spec()?;
            let mut starts = cfg.classify.starts.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for _ in 0..cfg.classify.random_starts {
                starts.push(random_point(&spec.atlas, &mut rng));
            }
            let tun = &cfg.limits;
            let entries = map_ordered(&starts, threads, |x| -> Result<ClassifyEntry> {
                let alpha = classify_limit(&spec, x, Side::Alpha, tun)?;
                let omega = classify_limit(&spec, x, Side::Omega, tun)?;
                let oc = if cfg.classify.orbit_class { Some(orbit_class(&spec, x, tun)?) } else { None };
                Ok(ClassifyEntry { start: *x, alpha, omega, orbit_class: oc })
            });
            let entries: Vec<ClassifyEntry> = entries.into_iter().collect::<Result<_>>()?;
            for (i, e) in entries.iter().enumerate() {
                out.summary.push(format!(
                    "start {i} ({:.4}, {:.4}): alpha {} omega {}",
                    e.start.u,
                    e.start.v,
                    e.alpha.label.as_str(),
                    e.omega.label.as_str()
                ));
            }
            json!({ "field": spec.name(), "entries": to_json(&entries)? })
        }
        Task::Wandering => {
            let spec = cfg.field_spec()?;
            let w = detect_wandering_domain(&spec, &cfg.wandering)?;
            out.summary.push(match &w {
                Some(w) => format!(
                    "wandering disk at chart {} ({:.4}, {:.4}), radius {}, horizon {}",
                    w.center.chart, w.center.u, w.center.v, w.radius, w.horizon
                ),
                None => "no wandering disk found".into(),
            });
            json!({ "field": spec.name(), "witness": to_json(&w)? })
        }
        Task::HamCheck => {
            let spec = cfg.field_spec()?;
            let v = hamiltonian_verdict(&spec, &cfg.hamiltonian, &cfg.limits)?;
            out.summary.push(format!("verdict: {:?}", v.verdict));
            out.summary.extend(v.evidence.iter().cloned());
            out.dot = v.dot.clone();
            let pre = match spec.base {
                BaseField::Hamiltonian { .. } => {
                    let h = |p: &SurfacePoint| spec.hamiltonian_value(p).unwrap_or(f64::NAN);
                    let r = pre_hamiltonian_check(&spec, &h, &cfg.hamiltonian)?;
                    out.summary.push(format!("pre-Hamiltonian check with the base Hamiltonian: {}", r.holds));
                    Some(r)
                }
                _ => None,
            };
            json!({ "verdict": to_json(&v)?, "pre_hamiltonian": to_json(&pre)? })
        }
        Task::Tables => {
            let ids: Vec<&str> = if cfg.tables.cases.is_empty() {
                case_ids()
            } else {
                cfg.tables.cases.iter().map(String::as_str).collect()
            };
            let results = run_tables(&ids, &cfg.limits, threads)?;
            for r in &results {
                out.summary.push(format!(
                    "case {:<3} {}  alpha {} (expected {})  omega {} (expected {})  {:.1}s",
                    r.id,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.alpha.label.as_str(),
                    r.expected_alpha.as_str(),
                    r.omega.label.as_str(),
                    r.expected_omega.as_str(),
                    r.elapsed.as_secs_f64()
                ));
            }
            let passed = results.iter().filter(|r| r.pass).count();
            out.summary.push(format!("{passed}/{} cases pass", results.len()));
            json!({ "cases": to_json(&results)?, "passed": passed, "total": results.len() })
        }
        Task::Render => {
            let spec = cfg.field_spec()?;
            let svg = render_phase_portrait(&spec, &cfg.render)?;
            out.summary.push(format!("rendered {} ({} bytes)", spec.name(), svg.len()));
            out.svg = Some(svg);
            json!({ "field": spec.name() })
        }
    };
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "generator": concat!("flowlab ", env!("CARGO_PKG_VERSION")),
        "task": cfg.task.as_str(),
        "seed": cfg.seed,
        "config": to_json(cfg)?,
        "result": result,
    });
    out.report = serde_json::to_string_pretty(&doc).map_err(|e| FlowError::Io(e.to_string()))? + "\n";
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_report_is_reproducible() {
        let text = r#"
task = "classify"
seed = 11
[field]
base = { type = "hamiltonian", id = "sphere_height" }
[limits]
budget = 200.0
[classify]
random_starts = 3
"#;
        let cfg = RunConfig::parse(text).unwrap();
        let a = run(&cfg, 1).unwrap();
        let b = run(&cfg, 2).unwrap();
        assert_eq!(a.report, b.report);
        let v: Value = serde_json::from_str(&a.report).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["config"]["limits"]["budget"], 200.0);
        assert_eq!(v["config"]["limits"]["grid"], 512);
        for e in v["result"]["entries"].as_array().unwrap() {
            assert_eq!(e["omega"]["label"], "SelfClosed");
        }
    }

    #[test]
    fn simulate_writes_trajectory_text() {
        let text = r#"
task = "simulate"
[field]
base = { type = "linear_torus", slope = 0.5 }
[simulate]
starts = [{ chart = 0, u = 0.0, v = 0.0 }]
t_budget = 1.0
record_dt = 0.25
"#;
        let out = run(&RunConfig::parse(text).unwrap(), 1).unwrap();
        let t = out.trajectory.unwrap();
        assert!(t.starts_with("# start 0\n# t chart u v\n"));
    }
}
