//! Scenario files: a JSON description of one task (model or law, task
//! parameters, seed, output names), validated on load, plus the runner
//! that executes it and writes the artifacts.

mod run;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::com::{IncrementLaw, LltTarget, TableLaw};
use crate::error::{Error, Result};
use crate::model::{Regime, TabularJump, TabularState};

pub use run::{run, OutputEntry, RunRecord};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Simulate,
    Llt,
    Escape,
    Recur,
    Lattice,
    Stable,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Simulate => "simulate",
            Task::Llt => "llt",
            Task::Escape => "escape",
            Task::Recur => "recur",
            Task::Lattice => "lattice",
            Task::Stable => "stable",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Task::Simulate | Task::Llt | Task::Escape | Task::Recur)
    }

    fn needs_model(self) -> bool {
        matches!(self, Task::Classify | Task::Simulate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `c` sets `c_plus = c_minus`; normalised away on load.
    CorrelatedRw {
        q: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_plus: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_minus: Option<f64>,
        #[serde(default = "one_u8")]
        n_steps_memory: u8,
    },
    Tabular {
        lines: Vec<String>,
        #[serde(default)]
        states: Vec<TabularState>,
        /// Translation-invariant rules (`dx` displacements) per line label.
        #[serde(default)]
        defaults: BTreeMap<String, Vec<TabularJump>>,
    },
}

fn one_u8() -> u8 {
    1
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Ssrw {
        #[serde(default = "one_usize")]
        d: usize,
    },
    LazySsrw {
        #[serde(default = "one_usize")]
        d: usize,
    },
    Table { points: Vec<Vec<f64>>, probs: Vec<f64> },
    HeavyTail {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table_size: Option<usize>,
    },
}

impl LawSpec {
    pub fn dim(&self) -> usize {
        match self {
            LawSpec::Ssrw { d } | LawSpec::LazySsrw { d } => *d,
            LawSpec::Table { points, .. } => points.first().map_or(0, Vec::len),
            LawSpec::HeavyTail { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeInput {
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_table")]
    pub table: String,
    #[serde(default = "default_plot")]
    pub plot: String,
}

fn default_report() -> String {
    "report.json".into()
}
fn default_table() -> String {
    "table.csv".into()
}
fn default_plot() -> String {
    "plot.csv".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            report: default_report(),
            table: default_table(),
            plot: default_plot(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyParams {
    /// Probe positions for fitting a tabular model (ignored for closed forms).
    #[serde(default = "default_probes")]
    pub probe_xs: Vec<f64>,
    #[serde(default)]
    pub regime: Option<Regime>,
    /// Moment order of the increments; `null` means all moments.
    #[serde(default)]
    pub regularity_p: Option<f64>,
    #[serde(default = "default_deadband")]
    pub deadband: f64,
}

fn default_probes() -> Vec<f64> {
    vec![1e3, 1e4, 1e5]
}
fn default_deadband() -> f64 {
    1e-9
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            probe_xs: default_probes(),
            regime: None,
            regularity_p: None,
            deadband: default_deadband(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub paths: usize,
    pub steps: u64,
    #[serde(default = "one_f64")]
    pub start_x: f64,
    #[serde(default)]
    pub start_line: usize,
    #[serde(default = "one_f64")]
    pub tau_level: f64,
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default)]
    pub stop_at_tau: bool,
    /// Estimate the tail index of the passage times.
    #[serde(default)]
    pub tail_index: bool,
}

fn one_f64() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LltParams {
    pub n: u64,
    pub samples: u64,
    #[serde(default = "default_target")]
    pub target: LltTarget,
    #[serde(default = "default_chunk")]
    pub chunk: usize,
}

fn default_target() -> LltTarget {
    LltTarget::Walk
}
fn default_chunk() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscapeParams {
    pub n_max: u64,
    pub paths: usize,
    #[serde(default = "default_escape_checkpoints")]
    pub checkpoints: usize,
}

fn default_escape_checkpoints() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecurParams {
    pub n_max: u64,
    #[serde(default)]
    pub x: f64,
    /// Independent runs; run `k` uses seed `derive_seed(seed, k)`.
    #[serde(default = "one_usize")]
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeParams {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_rho() -> f64 {
    PI / 8.0
}
fn default_grid() -> usize {
    201
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            rho: default_rho(),
            grid: default_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableParams {
    /// Defaults to the heavy-tail law's index when a law is given.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Defaults to the heavy-tail law's stable scale, else 1.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default = "default_x_min")]
    pub x_min: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_x_min() -> f64 {
    -10.0
}
fn default_x_max() -> f64 {
    10.0
}
fn default_points() -> usize {
    201
}

impl Default for StableParams {
    fn default() -> Self {
        Self {
            alpha: None,
            c: None,
            x_min: default_x_min(),
            x_max: default_x_max(),
            points: default_points(),
        }
    }
}

/// Task parameters, decoded according to the scenario's task.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskParams {
    Classify(ClassifyParams),
    Simulate(SimulateParams),
    Llt(LltParams),
    Escape(EscapeParams),
    Recur(RecurParams),
    Lattice(LatticeParams),
    Stable(StableParams),
}

impl Serialize for TaskParams {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TaskParams::Classify(p) => p.serialize(s),
            TaskParams::Simulate(p) => p.serialize(s),
            TaskParams::Llt(p) => p.serialize(s),
            TaskParams::Escape(p) => p.serialize(s),
            TaskParams::Recur(p) => p.serialize(s),
            TaskParams::Lattice(p) => p.serialize(s),
            TaskParams::Stable(p) => p.serialize(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<LawSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeInput>,
    pub params: TaskParams,
    pub outputs: Outputs,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    task: Task,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    model: Option<ModelSpec>,
    #[serde(default)]
    law: Option<LawSpec>,
    #[serde(default)]
    lattice: Option<LatticeInput>,
    #[serde(default)]
    params: Option<serde_json::Value>,
    #[serde(default)]
    outputs: Option<Outputs>,
}

/// Field named in a serde message (the first back-quoted word), if any.
fn field_in(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

fn json_schema_error(prefix: &str, e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let msg = e.inner().to_string();
    let mut parts: Vec<String> = Vec::new();
    if !prefix.is_empty() {
        parts.push(prefix.to_string());
    }
    let path = e.path().to_string();
    if path != "." {
        parts.push(path);
    }
    // Missing (and, inside buffered enums, unknown) keys are reported at
    // their parent; name the key.
    if msg.starts_with("unknown field") || msg.starts_with("missing field") {
        if let Some(f) = field_in(&msg) {
            if !parts.last().is_some_and(|p| p == &f || p.ends_with(&format!(".{f}"))) {
                parts.push(f);
            }
        }
    }
    let field = if parts.is_empty() { "<root>".to_string() } else { parts.join(".") };
    Error::schema(field, msg)
}

fn decode<T: DeserializeOwned>(prefix: &str, v: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| json_schema_error(prefix, e))
}

fn require(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::schema(field, message()))
    }
}

fn check_probability(field: &str, p: f64) -> Result<()> {
    require((0.0..=1.0).contains(&p), field, || format!("{p} is not a probability"))
}

fn validate_model(m: &mut ModelSpec) -> Result<()> {
    match m {
        ModelSpec::CorrelatedRw {
            q,
            c,
            c_plus,
            c_minus,
            n_steps_memory,
        } => {
            check_probability("model.q", *q)?;
            require(*q > 0.0 && *q < 1.0, "model.q", || format!("q = {q} must lie strictly between 0 and 1"))?;
            require([1, 2].contains(n_steps_memory), "model.n_steps_memory", || {
                format!("{n_steps_memory} is not 1 or 2")
            })?;
            if let Some(cv) = c.take() {
                require(c_plus.is_none() && c_minus.is_none(), "model.c", || {
                    "give either c or c_plus/c_minus".into()
                })?;
                *c_plus = Some(cv);
                *c_minus = Some(cv);
            }
            let cp = c_plus.ok_or_else(|| Error::schema("model.c_plus", "missing (or give c)"))?;
            let cm = c_minus.ok_or_else(|| Error::schema("model.c_minus", "missing (or give c)"))?;
            require(cp.is_finite(), "model.c_plus", || "must be finite".into())?;
            require(cm.is_finite(), "model.c_minus", || "must be finite".into())?;
        }
        ModelSpec::Tabular { lines, states, defaults } => {
            require(!lines.is_empty(), "model.lines", || "at least one line is required".into())?;
            for (k, st) in states.iter().enumerate() {
                for (j, jump) in st.jumps.iter().enumerate() {
                    check_probability(&format!("model.states[{k}].jumps[{j}].p"), jump.p)?;
                }
            }
            for (label, rule) in defaults.iter() {
                for (j, jump) in rule.iter().enumerate() {
                    check_probability(&format!("model.defaults.{label}[{j}].p"), jump.p)?;
                }
            }
        }
    }
    Ok(())
}

fn validate_law(l: &LawSpec) -> Result<()> {
    match l {
        LawSpec::Ssrw { d } | LawSpec::LazySsrw { d } => {
            require(*d >= 1, "law.d", || "dimension must be at least 1".into())
        }
        LawSpec::Table { points, probs } => {
            require(!points.is_empty(), "law.points", || "empty support".into())?;
            require(points.len() == probs.len(), "law.probs", || {
                format!("{} probabilities for {} points", probs.len(), points.len())
            })?;
            let d = points[0].len();
            require(d >= 1 && points.iter().all(|p| p.len() == d), "law.points", || {
                "points must share one positive dimension".into()
            })?;
            for (k, &p) in probs.iter().enumerate() {
                check_probability(&format!("law.probs[{k}]"), p)?;
            }
            Ok(())
        }
        LawSpec::HeavyTail { alpha, table_size } => {
            require(*alpha > 0.0 && *alpha < 1.0, "law.alpha", || format!("{alpha} is not in (0,1)"))?;
            require(table_size.is_none_or(|t| t >= 1), "law.table_size", || "must be positive".into())
        }
    }
}

fn validate_params(task: Task, raw: serde_json::Value, law: Option<&LawSpec>) -> Result<TaskParams> {
    let p = "params";
    Ok(match task {
        Task::Classify => {
            let v: ClassifyParams = decode(p, raw)?;
            require(v.probe_xs.len() >= 3, "params.probe_xs", || "need at least three probes".into())?;
            require(v.regularity_p.is_none_or(|q| q > 1.0), "params.regularity_p", || "must exceed 1".into())?;
            TaskParams::Classify(v)
        }
        Task::Simulate => {
            let v: SimulateParams = decode(p, raw)?;
            require(v.paths >= 1, "params.paths", || "must be positive".into())?;
            require(v.start_x >= 0.0, "params.start_x", || "must be nonnegative".into())?;
            require(v.checkpoints.windows(2).all(|w| w[0] < w[1]), "params.checkpoints", || {
                "must be strictly increasing".into()
            })?;
            require(v.checkpoints.last().is_none_or(|&c| c <= v.steps), "params.checkpoints", || {
                "checkpoints beyond the step budget".into()
            })?;
            TaskParams::Simulate(v)
        }
        Task::Llt => {
            let v: LltParams = decode(p, raw)?;
            require(v.n >= 1, "params.n", || "must be positive".into())?;
            require(v.samples >= 100_000, "params.samples", || "at least 100000 samples are required".into())?;
            require(v.chunk >= 1, "params.chunk", || "must be positive".into())?;
            TaskParams::Llt(v)
        }
        Task::Escape => {
            let v: EscapeParams = decode(p, raw)?;
            require(v.n_max >= 100, "params.n_max", || "must be at least 100".into())?;
            require(v.paths >= 2, "params.paths", || "need at least two paths".into())?;
            require(v.checkpoints >= 2, "params.checkpoints", || "need at least two checkpoints".into())?;
            require(law.is_none_or(|l| l.dim() >= 2), "law", || "escape exponent needs d >= 2".into())?;
            TaskParams::Escape(v)
        }
        Task::Recur => {
            let v: RecurParams = decode(p, raw)?;
            require(v.n_max >= 1, "params.n_max", || "must be positive".into())?;
            require(v.runs >= 1, "params.runs", || "must be positive".into())?;
            require(v.x.is_finite(), "params.x", || "must be finite".into())?;
            require(law.is_none_or(|l| l.dim() == 1), "law", || "recurrence probe needs d = 1".into())?;
            TaskParams::Recur(v)
        }
        Task::Lattice => {
            let v: LatticeParams = decode(p, raw)?;
            require(v.rho > 0.0, "params.rho", || "must be positive".into())?;
            require(v.grid >= 3 && v.grid % 2 == 1, "params.grid", || "must be odd and at least 3".into())?;
            TaskParams::Lattice(v)
        }
        Task::Stable => {
            let v: StableParams = decode(p, raw)?;
            require(v.alpha.is_none_or(|a| a > 0.0 && a < 1.0), "params.alpha", || "must lie in (0,1)".into())?;
            require(v.c.is_none_or(|c| c > 0.0), "params.c", || "must be positive".into())?;
            require(v.x_min < v.x_max, "params.x_max", || "must exceed x_min".into())?;
            require(v.points >= 2, "params.points", || "need at least two points".into())?;
            let alpha_known = v.alpha.is_some() || matches!(law, Some(LawSpec::HeavyTail { .. }));
            require(alpha_known, "params.alpha", || "give alpha or a heavy_tail law".into())?;
            TaskParams::Stable(v)
        }
    })
}

/// Parses and validates a scenario document, applying defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    if text.trim().is_empty() {
        return Err(Error::schema("<root>", "empty scenario file"));
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| json_schema_error("", e))?;
    let task = raw.task;
    let mut model = raw.model;
    if let Some(m) = model.as_mut() {
        validate_model(m)?;
    }
    if let Some(l) = raw.law.as_ref() {
        validate_law(l)?;
    }
    if task.needs_model() {
        require(model.is_some(), "model", || format!("task `{}` needs a model", task.name()))?;
    } else if task != Task::Stable {
        require(raw.law.is_some(), "law", || format!("task `{}` needs a law", task.name()))?;
    }
    if task.is_stochastic() {
        require(raw.seed.is_some(), "seed", || format!("task `{}` is stochastic and needs a seed", task.name()))?;
    }
    if let (Some(l), Some(lat)) = (raw.law.as_ref(), raw.lattice.as_ref()) {
        let d = l.dim();
        require(lat.h.len() == d && lat.h.iter().all(|r| r.len() == d), "lattice.H", || {
            format!("H must be {d}x{d}")
        })?;
        require(lat.b.len() == d, "lattice.b", || format!("b must have length {d}"))?;
    }
    let params = validate_params(
        task,
        raw.params.unwrap_or_else(|| serde_json::Value::Object(Default::default())),
        raw.law.as_ref(),
    )?;
    Ok(Scenario {
        task,
        seed: raw.seed,
        model,
        law: raw.law,
        lattice: raw.lattice,
        params,
        outputs: raw.outputs.unwrap_or_default(),
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::schema("<path>", format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

pub fn scenario_to_json(s: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(s)?)
}

pub fn write_scenario(path: impl AsRef<Path>, s: &Scenario) -> Result<()> {
    let mut text = scenario_to_json(s)?;
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}

/// SHA-256 of the canonical (compact, defaults applied) scenario JSON,
/// excluding output file names, which do not affect any result.
pub fn scenario_hash(s: &Scenario) -> Result<String> {
    let mut v = serde_json::to_value(s)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("outputs");
    }
    let text = serde_json::to_string(&v)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Builds the increment law a scenario describes.
pub fn build_law(spec: &LawSpec) -> Result<IncrementLaw> {
    Ok(match spec {
        LawSpec::Ssrw { d } => IncrementLaw::Table(TableLaw::ssrw(*d)?),
        LawSpec::LazySsrw { d } => IncrementLaw::Table(TableLaw::lazy_ssrw(*d)?),
        LawSpec::Table { points, probs } => IncrementLaw::Table(TableLaw::new(points.clone(), probs.clone())?),
        LawSpec::HeavyTail { alpha, table_size } => IncrementLaw::HeavyTail(match table_size {
            Some(k) => crate::com::HeavyTail::with_table(*alpha, *k)?,
            None => crate::com::HeavyTail::new(*alpha)?,
        }),
    })
}
