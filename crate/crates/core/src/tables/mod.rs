//! Reproduction of the alpha/omega limit table for the catalog cases.

mod expected;

use std::time::{Duration, Instant};

use serde::Serialize;

pub use expected::EXPECTED;

use crate::atlas::SurfacePoint;
use crate::circle_map::golden_rotation;
use crate::error::{FlowError, Result};
use crate::field::{hamiltonian_field, FieldSpec, HamiltonianId};
use crate::limits::{classify_limit, LimitLabel, LimitSetReport, Side, Tunables};
use crate::surgery::{apply_surgery, singularize_section, SurgerySpec};

/// Denjoy truncation depth used by the Cantor cases; deeper than the number
/// of section returns within the budget.
pub const TABLE_DENJOY_DEPTH: usize = 12000;
pub const TABLE_GAP_CONSTANT: f64 = 0.1;
pub const FAKE_SADDLE_RADIUS: f64 = 0.1;
pub const CASE_LIMIT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct TableCase {
    pub id: &'static str,
    pub description: &'static str,
    pub field: FieldSpec,
    pub start: SurfacePoint,
}

fn denjoy_gap0(depth: usize) -> Result<(FieldSpec, f64, f64)> {
    let f = FieldSpec::denjoy_suspension(golden_rotation(), TABLE_GAP_CONSTANT, depth)?;
    let g = f
        .atlas
        .monodromy()
        .and_then(|m| m.as_denjoy())
        .map(|d| *d.gap(0))
        .ok_or_else(|| FlowError::WrongBase("expected a Denjoy suspension".into()))?;
    Ok((f, g.left, g.len))
}

/// Builds one table case by id.
pub fn build_case(id: &str) -> Result<TableCase> {
    let torus = crate::atlas::SurfaceAtlas::torus();
    let case = match id {
        "1" => TableCase {
            id: "1",
            description: "sin*sin Hamiltonian torus, separatrix start",
            field: hamiltonian_field(HamiltonianId::TorusSinSin, &torus)?,
            start: SurfacePoint::at(0.25, 0.0),
        },
        "1'" => TableCase {
            id: "1'",
            description: "Reeb torus with a circle of zeros",
            field: FieldSpec::reeb_singular_circle_torus(),
            start: SurfacePoint::at(0.3, 0.5),
        },
        "2" => TableCase {
            id: "2",
            description: "Morse-Smale sphere, start near the south pole",
            field: FieldSpec::morse_smale_sphere(),
            start: SurfacePoint::new(0, 0.05, 0.0),
        },
        "3" => TableCase {
            id: "3",
            description: "torus with one limit cycle",
            field: FieldSpec::single_limit_cycle_torus(),
            start: SurfacePoint::at(0.3, 0.5),
        },
        "3'" => TableCase {
            id: "3'",
            description: "limit-cycle torus with a fake saddle on the cycle",
            field: apply_surgery(
                &FieldSpec::single_limit_cycle_torus(),
                SurgerySpec::fake_saddle(SurfacePoint::at(0.5, 0.0), FAKE_SADDLE_RADIUS)?,
            )?,
            start: SurfacePoint::at(0.3, 0.5),
        },
        "4" => {
            let slope = golden_rotation();
            let p = SurfacePoint::at(0.5, 0.5);
            let n = slope.hypot(1.0);
            TableCase {
                id: "4",
                description: "irrational linear torus with a fake saddle, start on its outgoing orbit",
                field: apply_surgery(&FieldSpec::linear_torus(slope), SurgerySpec::fake_saddle(p, FAKE_SADDLE_RADIUS)?)?,
                start: SurfacePoint::at(0.5 + 0.05 / n, 0.5 + 0.05 * slope / n),
            }
        }
        "5" => {
            let (f, left, len) = denjoy_gap0(TABLE_DENJOY_DEPTH)?;
            let vq = left + 0.3 * len;
            TableCase {
                id: "5",
                description: "Denjoy suspension with a fake saddle in a wandering band",
                field: apply_surgery(&f, SurgerySpec::fake_saddle(SurfacePoint::at(0.5, vq), 0.5 * FAKE_SADDLE_RADIUS)?)?,
                start: SurfacePoint::at(0.6, vq),
            }
        }
        "7" => TableCase {
            id: "7",
            description: "irrational linear torus",
            field: FieldSpec::linear_torus(golden_rotation()),
            start: SurfacePoint::at(0.1, 0.2),
        },
        "9" => {
            let (f, left, len) = denjoy_gap0(TABLE_DENJOY_DEPTH)?;
            TableCase {
                id: "9",
                description: "Denjoy suspension with the minimal set made singular",
                field: singularize_section(&f, TABLE_DENJOY_DEPTH)?,
                start: SurfacePoint::at(0.6, left + 0.5 * len),
            }
        }
        other => return Err(FlowError::InvalidParameter(format!("unknown table case {other:?}"))),
    };
    Ok(case)
}

pub fn case_ids() -> Vec<&'static str> {
    EXPECTED.iter().map(|e| e.0).collect()
}

pub fn expected_for(id: &str) -> Option<(LimitLabel, LimitLabel)> {
    EXPECTED.iter().find(|e| e.0 == id).map(|e| (e.1, e.2))
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub id: String,
    pub description: String,
    pub field: String,
    pub start: SurfacePoint,
    pub expected_alpha: LimitLabel,
    pub expected_omega: LimitLabel,
    pub alpha: LimitSetReport,
    pub omega: LimitSetReport,
    pub pass: bool,
    /// Wall time, excluded from reports so they stay reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CaseResult {
    pub fn within_limit(&self) -> bool {
        self.elapsed <= CASE_LIMIT
    }
}

pub fn run_case(id: &str, tun: &Tunables) -> Result<CaseResult> {
    let case = build_case(id)?;
    let (ea, eo) = expected_for(id).ok_or_else(|| FlowError::InvalidParameter(format!("no expectation for {id}")))?;
    let t0 = Instant::now();
    let alpha = classify_limit(&case.field, &case.start, Side::Alpha, tun)?;
    let omega = classify_limit(&case.field, &case.start, Side::Omega, tun)?;
    let elapsed = t0.elapsed();
    Ok(CaseResult {
        id: case.id.to_string(),
        description: case.description.to_string(),
        field: case.field.name(),
        start: case.start,
        expected_alpha: ea,
        expected_omega: eo,
        pass: alpha.label == ea && omega.label == eo,
        alpha,
        omega,
        elapsed,
    })
}

/// Runs the given cases on up to `threads` worker threads; results come
/// back in input order.
pub fn run_tables(ids: &[&str], tun: &Tunables, threads: usize) -> Result<Vec<CaseResult>> {
    crate::par::map_ordered(ids, threads, |id| run_case(id, tun)).into_iter().collect()
}
