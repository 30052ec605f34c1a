//! Run configuration: a TOML document naming the task, the field and every
//! tunable. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atlas::SurfacePoint;
use crate::error::{FlowError, Result};
use crate::field::{BaseField, FieldSpec};
use crate::hamiltonian::HamTunables;
use crate::integrator::Direction;
use crate::limits::{Tunables, WanderingSearch};
use crate::surgery::{apply_surgery, SurgeryKind, SurgerySpec, DEFAULT_TAU, SECTION_TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    Classify,
    Wandering,
    HamCheck,
    Tables,
    Render,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Classify => "classify",
            Task::Wandering => "wandering",
            Task::HamCheck => "ham-check",
            Task::Tables => "tables",
            Task::Render => "render",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeryConfig {
    pub kind: SurgeryKind,
    /// Defaults to the kind's usual transition length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl SurgeryConfig {
    pub fn build(&self) -> Result<SurgerySpec> {
        let tau = self.tau.unwrap_or(match self.kind {
            SurgeryKind::SingularizeSection { .. } => SECTION_TAU,
            _ => DEFAULT_TAU,
        });
        SurgerySpec::new(self.kind.clone(), tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub base: BaseField,
    #[serde(default)]
    pub surgery: Vec<SurgeryConfig>,
    #[serde(default)]
    pub reversed: bool,
}

impl FieldConfig {
    pub fn build(&self) -> Result<FieldSpec> {
        let mut f = FieldSpec::from_base(self.base)?;
        for s in &self.surgery {
            f = apply_surgery(&f, s.build()?)?;
        }
        Ok(if self.reversed { f.reversed() } else { f })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub starts: Vec<SurfacePoint>,
    pub direction: DirectionConfig,
    pub t_budget: f64,
    pub record_dt: f64,
    pub tol: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { starts: Vec::new(), direction: DirectionConfig::Forward, t_budget: 100.0, record_dt: 0.01, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionConfig {
    Forward,
    Backward,
}

impl From<DirectionConfig> for Direction {
    fn from(d: DirectionConfig) -> Self {
        match d {
            DirectionConfig::Forward => Direction::Forward,
            DirectionConfig::Backward => Direction::Backward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub starts: Vec<SurfacePoint>,
    /// Extra starts drawn uniformly from the fundamental domain with the
    /// run seed.
    pub random_starts: usize,
    pub orbit_class: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TablesConfig {
    /// Subset of case ids; all cases when empty.
    pub cases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub width: u32,
    pub seeds_per_side: usize,
    pub streamline_time: f64,
    pub mark_singular_points: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { width: 600, seeds_per_side: 12, streamline_time: 3.0, mark_singular_points: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldConfig>,
    #[serde(default)]
    pub limits: Tunables,
    #[serde(default)]
    pub hamiltonian: HamTunables,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub wandering: WanderingSearch,
    #[serde(default)]
    pub tables: TablesConfig,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn new(task: Task) -> Self {
        RunConfig {
            task,
            seed: 0,
            field: None,
            limits: Tunables::default(),
            hamiltonian: HamTunables::default(),
            simulate: SimulateConfig::default(),
            classify: ClassifyConfig::default(),
            wandering: WanderingSearch::default(),
            tables: TablesConfig::default(),
            render: RenderConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_error(text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FlowError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FlowError::Config { field: String::new(), message: e.to_string() })
    }

    /// The configured field; tasks other than `tables` need one.
    pub fn field_spec(&self) -> Result<FieldSpec> {
        match &self.field {
            Some(f) => f.build(),
            None => Err(FlowError::Config { field: "field".into(), message: format!("task {} needs a [field] section", self.task.as_str()) }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| Err(FlowError::Config { field: field.into(), message: message.into() });
        if self.seed > i64::MAX as u64 {
            return bad("seed", "must fit in a signed 64-bit TOML integer");
        }
        let l = &self.limits;
        if !(l.budget > 0.0 && l.budget.is_finite()) {
            return bad("limits.budget", "must be positive and finite");
        }
        if !(l.tol > 0.0 && l.tol < 1.0) {
            return bad("limits.tol", "must lie in (0, 1)");
        }
        if !(l.tail_fraction > 0.0 && l.tail_fraction <= 1.0) {
            return bad("limits.tail_fraction", "must lie in (0, 1]");
        }
        if l.grid < 32 || l.grid > 8192 {
            return bad("limits.grid", "must lie in 32..=8192");
        }
        if self.hamiltonian.grid < 8 {
            return bad("hamiltonian.grid", "must be at least 8");
        }
        if !(self.simulate.t_budget > 0.0) || !(self.simulate.record_dt > 0.0) {
            return bad("simulate", "t_budget and record_dt must be positive");
        }
        if self.wandering.grid == 0 || !(self.wandering.radius > 0.0) || !(self.wandering.t_check > 0.0) {
            return bad("wandering", "grid, radius and t_check must be positive");
        }
        if self.render.width < 16 || self.render.seeds_per_side == 0 {
            return bad("render", "width must be at least 16 and seeds_per_side positive");
        }
        for id in &self.tables.cases {
            if crate::tables::expected_for(id).is_none() {
                return bad("tables.cases", &format!("unknown case {id:?}"));
            }
        }
        if self.task != Task::Tables {
            self.field_spec()?;
        }
        Ok(())
    }
}

fn config_error(text: &str, e: &toml::de::Error) -> FlowError {
    let field = match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}")
        }
        None => String::new(),
    };
    FlowError::Config { field, message: e.message().to_string() }
}
