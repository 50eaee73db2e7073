//! Command implementations behind the `qcrb` binary.
//!
//! Everything here is plain library code returning JSON values and CSV text;
//! the binary only parses arguments and routes the outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::analysis::{
    beta_spectrum, boundary_2param_window, closed_form_bound, coherent_test, determinants,
    quasi_classical_test, sld_bound, BoundMethod, BoundReport, Classification, COHERENT_X_WINDOW,
};
use crate::error::{Error, ErrorKind, Result};
use crate::linalg::{inv_sqrt_pd, RAntiMatrix, RSymMatrix};
use crate::measurement::{
    covariance_of_pvm, inflate_covariance, naimark_embedding, naimark_frame,
    optimal_vectors_coherent, optimal_vectors_quasi_classical, pvm_from_vectors, sample_outcomes,
    CovarianceReport, EstimationVectors, LiftFrame, Measurement, Pvm, PvmEntry,
};
use crate::model::config::{ModelDoc, ModelPoint};
use crate::model::{fisher_data, FisherData};
use crate::oracle::{minimize, stationarity_certificate, OracleConfig, OracleProblem};

/// Closed form and oracle must agree to this absolute tolerance.
pub const AGREEMENT_TOL: f64 = 1e-4;
pub const DEFAULT_BOUNDARY_SAMPLES: usize = 101;
pub const DEFAULT_SIMULATION_SAMPLES: usize = 10_000;

pub const EXIT_OK: i32 = 0;
/// Returned for a report marked `DISAGREEMENT`.
pub const EXIT_DISAGREEMENT: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::SchemaOrDomain => 2,
        ErrorKind::Model => 3,
        ErrorKind::Oracle => 4,
        ErrorKind::Unsupported => 5,
    }
}

/// Machine-readable error document for standard error.
pub fn error_json(e: &Error) -> Value {
    json!({
        "error": e.code(),
        "message": e.to_string(),
        "exit_code": exit_code(e),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Bound,
    Boundary,
    Pvm,
    Simulate,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Bound => "bound",
            Command::Boundary => "boundary",
            Command::Pvm => "pvm",
            Command::Simulate => "simulate",
            Command::Oracle => "oracle",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "analyze" => Command::Analyze,
            "bound" => Command::Bound,
            "boundary" => Command::Boundary,
            "pvm" => Command::Pvm,
            "simulate" => Command::Simulate,
            "oracle" => Command::Oracle,
            other => return Err(format!("unknown command {other:?}")),
        })
    }
}

/// How the weight matrix is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Named(WeightName),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightName {
    Identity,
    /// `G = J^S` evaluated at θ.
    Sld,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Named(WeightName::Identity)
    }
}

impl WeightSpec {
    /// `identity`, `sld`, or the path of a JSON file holding the matrix
    /// (bare, or under a `"weight"` key).
    pub fn from_arg(arg: &str) -> Result<Self> {
        match arg {
            "identity" => Ok(WeightSpec::Named(WeightName::Identity)),
            "sld" => Ok(WeightSpec::Named(WeightName::Sld)),
            path => {
                let text = read_file(Path::new(path))?;
                let mut v: Value =
                    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{path}: {e}")))?;
                if let Some(inner) = v.get_mut("weight") {
                    v = inner.take();
                }
                serde_json::from_value(v).map_err(|e| Error::Schema(format!("{path}: {e}")))
            }
        }
    }

    /// The weight matrix for Fisher data `fd`.
    pub fn resolve(&self, fd: &FisherData) -> Result<RSymMatrix> {
        let m = fd.param_dim();
        let g = match self {
            WeightSpec::Named(WeightName::Identity) => RSymMatrix::identity(m),
            WeightSpec::Named(WeightName::Sld) => fd.js.clone(),
            WeightSpec::Matrix(rows) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return Err(Error::DimensionMismatch(format!(
                        "weight must be {m}×{m} for this model"
                    )));
                }
                if rows.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::Domain("weight has non-finite entries".into()));
                }
                let g = RSymMatrix::from_rows(rows).map_err(|e| Error::Domain(format!("weight: {e}")))?;
                if !g.is_psd() {
                    return Err(Error::Domain(format!(
                        "weight is not positive semidefinite (min eigenvalue {:.3e})",
                        g.min_eigenvalue()
                    )));
                }
                g
            }
        };
        Ok(g)
    }
}

/// Everything a run reads from its config file, after defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Option<ModelDoc>,
    pub weight: Option<WeightSpec>,
    /// Present when the oracle was requested alongside the closed forms.
    pub oracle: Option<OracleConfig>,
    /// Boundary without a model.
    pub beta: Option<f64>,
    pub x_window: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub pvm: Option<PathBuf>,
    /// `V₀` added to the covariance by a randomized post-processing.
    pub inflate: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunKeys {
    weight: Option<WeightSpec>,
    oracle: Option<OracleConfig>,
    beta: Option<f64>,
    x_window: Option<f64>,
    samples: Option<usize>,
    seed: Option<u64>,
    pvm: Option<PathBuf>,
    inflate: Option<Vec<Vec<f64>>>,
}

const RUN_KEYS: [&str; 8] = [
    "weight", "oracle", "beta", "x_window", "samples", "seed", "pvm", "inflate",
];

impl RunConfig {
    /// Run options sit next to the model document's own keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let Value::Object(mut map) = value else {
            return Err(Error::Schema("config must be a JSON object".into()));
        };
        let mut run = Map::new();
        for key in RUN_KEYS {
            if let Some(v) = map.remove(key) {
                run.insert(key.into(), v);
            }
        }
        let keys: RunKeys =
            serde_json::from_value(Value::Object(run)).map_err(|e| Error::Schema(e.to_string()))?;
        let model = if map.contains_key("model") {
            Some(serde_json::from_value(Value::Object(map)).map_err(|e| Error::Schema(e.to_string()))?)
        } else if let Some(k) = map.keys().next() {
            return Err(Error::Schema(format!("unknown field {k:?} and no \"model\"")));
        } else {
            None
        };
        Ok(Self {
            model,
            weight: keys.weight,
            oracle: keys.oracle,
            beta: keys.beta,
            x_window: keys.x_window,
            samples: keys.samples,
            seed: keys.seed,
            pvm: keys.pvm,
            inflate: keys.inflate,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }

    fn model_point(&self) -> Result<ModelPoint> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Schema("config has no \"model\"".into()))?
            .build()
    }

    /// The config with every default filled in, as echoed in reports.
    fn effective(&self, cmd: Command) -> Value {
        let mut out = match &self.model {
            Some(m) => serde_json::to_value(m).expect("model documents serialize"),
            None => json!({}),
        };
        let map = out.as_object_mut().expect("object");
        let weight = self.weight.clone().unwrap_or_default();
        map.insert("weight".into(), serde_json::to_value(weight).expect("serializable"));
        if let Some(o) = &self.oracle {
            map.insert("oracle".into(), serde_json::to_value(o).expect("serializable"));
        } else if cmd == Command::Oracle {
            let o = OracleConfig {
                seed: self.seed.unwrap_or(0),
                ..Default::default()
            };
            map.insert("oracle".into(), serde_json::to_value(o).expect("serializable"));
        }
        if let Some(b) = self.beta {
            map.insert("beta".into(), json!(b));
        }
        if cmd == Command::Boundary {
            map.insert("x_window".into(), json!(self.x_window.unwrap_or(COHERENT_X_WINDOW)));
        }
        match cmd {
            Command::Boundary => {
                map.insert("samples".into(), json!(self.samples.unwrap_or(DEFAULT_BOUNDARY_SAMPLES)));
            }
            Command::Simulate => {
                map.insert("samples".into(), json!(self.samples.unwrap_or(DEFAULT_SIMULATION_SAMPLES)));
            }
            _ => {}
        }
        map.insert("seed".into(), json!(self.seed.unwrap_or(0)));
        if let Some(p) = &self.pvm {
            map.insert("pvm".into(), json!(p.display().to_string()));
        }
        if let Some(v) = &self.inflate {
            map.insert("inflate".into(), json!(v));
        }
        out
    }

    fn oracle_config(&self) -> OracleConfig {
        let mut c = self.oracle.clone().unwrap_or_default();
        if self.oracle.is_none() {
            c.seed = self.seed.unwrap_or(0);
        }
        c
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub weight: Option<String>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub pvm: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(w) = &self.weight {
            cfg.weight = Some(WeightSpec::from_arg(w)?);
        }
        if let Some(n) = self.samples {
            cfg.samples = Some(n);
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
            if let Some(o) = cfg.oracle.as_mut() {
                o.seed = s;
            }
        }
        if let Some(p) = &self.pvm {
            cfg.pvm = Some(p.clone());
        }
        Ok(())
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub report: Option<Value>,
    /// Primary CSV (boundary) or sampled outcomes (simulate).
    pub csv: Option<String>,
    pub disagreement: bool,
}

impl Output {
    pub fn exit_code(&self) -> i32 {
        if self.disagreement {
            EXIT_DISAGREEMENT
        } else {
            EXIT_OK
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Output> {
    match cmd {
        Command::Analyze => cmd_analyze(cfg),
        Command::Bound => cmd_bound(cfg),
        Command::Boundary => cmd_boundary(cfg),
        Command::Pvm => cmd_pvm(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Oracle => cmd_oracle(cfg),
    }
}

fn header(cmd: Command, cfg: &RunConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert(
        "tool".into(),
        json!({"name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION")}),
    );
    m.insert("command".into(), json!(cmd.name()));
    m.insert("config".into(), cfg.effective(cmd));
    m.insert("seed".into(), json!(cfg.seed.unwrap_or(0)));
    m
}

fn model_section(point: &ModelPoint, fd: &FisherData) -> Result<Map<String, Value>> {
    let spectrum = beta_spectrum(fd)?;
    let (det_js, det_jt) = determinants(fd);
    let mut m = Map::new();
    m.insert(
        "model".into(),
        json!({
            "label": point.model.label(),
            "dim": point.model.dim(),
            "param_dim": point.model.param_dim(),
        }),
    );
    m.insert("theta".into(), json!(point.theta));
    m.insert("JS".into(), json!(fd.js.to_rows()));
    m.insert("Jt".into(), json!(fd.jt.to_rows()));
    m.insert("det_JS".into(), json!(det_js));
    m.insert("det_Jt".into(), json!(det_jt));
    m.insert("classification".into(), json!(spectrum.classification));
    m.insert("beta_spectrum".into(), serde_json::to_value(&spectrum).expect("serializable"));
    m.insert("quasi_classical".into(), json!(quasi_classical_test(fd)));
    m.insert("coherent".into(), json!(coherent_test(fd)?));
    Ok(m)
}

fn build(cfg: &RunConfig) -> Result<(ModelPoint, FisherData, RSymMatrix)> {
    let point = cfg.model_point()?;
    let fd = fisher_data(&point.frame)?;
    let g = cfg.weight.clone().unwrap_or_default().resolve(&fd)?;
    Ok((point, fd, g))
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report types serialize")
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<Output> {
    let (point, fd, g) = build(cfg)?;
    let mut r = header(Command::Analyze, cfg);
    r.extend(model_section(&point, &fd)?);
    r.insert("G".into(), json!(g.to_rows()));
    r.insert("sld_bound".into(), json!(sld_bound(&fd, &g)?));
    Ok(Output {
        report: Some(Value::Object(r)),
        csv: None,
        disagreement: false,
    })
}

/// Oracle run plus certificate and, when available, the closed-form comparison.
fn oracle_section(
    fd: &FisherData,
    g: &RSymMatrix,
    config: OracleConfig,
    closed: Option<&BoundReport>,
) -> Result<(Value, f64, bool)> {
    let problem = OracleProblem::new(fd, g, config)?;
    let result = minimize(&problem)?;
    let cert = stationarity_certificate(&result, &problem)?;
    let mut sec = Map::new();
    sec.insert("result".into(), to_value(&result));
    sec.insert("stationarity".into(), to_value(&cert));
    let mut disagreement = false;
    if let Some(c) = closed {
        let diff = result.value - c.value;
        disagreement = !(diff.abs() <= AGREEMENT_TOL);
        sec.insert("closed_form_value".into(), json!(c.value));
        sec.insert("difference".into(), json!(diff));
        sec.insert(
            "status".into(),
            json!(if disagreement { "DISAGREEMENT" } else { "agree" }),
        );
    }
    Ok((Value::Object(sec), result.value, disagreement))
}

pub fn cmd_bound(cfg: &RunConfig) -> Result<Output> {
    let (point, fd, g) = build(cfg)?;
    let closed = closed_form_bound(&fd, &g)?;
    let mut r = header(Command::Bound, cfg);
    r.extend(model_section(&point, &fd)?);
    r.insert("sld_bound".into(), json!(sld_bound(&fd, &g)?));
    let run_oracle = cfg.oracle.is_some() || closed.is_none();
    let mut disagreement = false;
    let mut bound = Map::new();
    if let Some(c) = &closed {
        bound.insert("closed_form".into(), to_value(c));
    }
    let oracle_value = if run_oracle {
        let (sec, value, dis) = oracle_section(&fd, &g, cfg.oracle_config(), closed.as_ref())?;
        disagreement = dis;
        bound.insert("oracle".into(), sec);
        Some(value)
    } else {
        None
    };
    let (value, method) = match (&closed, oracle_value) {
        (Some(c), _) => (c.value, c.method),
        (None, Some(v)) => (v, BoundMethod::Oracle),
        (None, None) => unreachable!("oracle runs whenever no closed form applies"),
    };
    bound.insert("value".into(), json!(value));
    bound.insert("method".into(), json!(method));
    let status = match (closed.is_some(), oracle_value.is_some(), disagreement) {
        (_, _, true) => "DISAGREEMENT",
        (true, true, false) => "agree",
        (true, false, _) => "closed_form_only",
        (false, _, _) => "oracle_only",
    };
    bound.insert("status".into(), json!(status));
    r.insert("bound".into(), Value::Object(bound));
    Ok(Output {
        report: Some(Value::Object(r)),
        csv: None,
        disagreement,
    })
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<Output> {
    let (point, fd, g) = build(cfg)?;
    let closed = closed_form_bound(&fd, &g)?;
    let mut r = header(Command::Oracle, cfg);
    r.extend(model_section(&point, &fd)?);
    r.insert("sld_bound".into(), json!(sld_bound(&fd, &g)?));
    let (sec, _, disagreement) = oracle_section(&fd, &g, cfg.oracle_config(), closed.as_ref())?;
    r.insert("oracle".into(), sec);
    if let Some(c) = &closed {
        r.insert("closed_form".into(), to_value(c));
    }
    Ok(Output {
        report: Some(Value::Object(r)),
        csv: None,
        disagreement,
    })
}

pub fn cmd_boundary(cfg: &RunConfig) -> Result<Output> {
    let samples = cfg.samples.unwrap_or(DEFAULT_BOUNDARY_SAMPLES);
    let window = cfg.x_window.unwrap_or(COHERENT_X_WINDOW);
    // Weight eigenvalues in normalized coordinates, when a weight was given.
    let (beta, weight) = match (&cfg.model, cfg.beta) {
        (Some(_), Some(_)) => {
            return Err(Error::Schema("give either \"beta\" or a model, not both".into()))
        }
        (Some(_), None) => {
            let (_, fd, g) = build(cfg)?;
            if fd.param_dim() != 2 {
                return Err(Error::Domain(format!(
                    "boundary needs a 2-parameter model, got {}",
                    fd.param_dim()
                )));
            }
            let beta = beta_spectrum(&fd)?.max();
            let si = inv_sqrt_pd(&fd.js)?;
            let gn = g.congruence(si.matrix());
            (beta, cfg.weight.is_some().then(|| gn.eig().0))
        }
        (None, Some(beta)) => {
            let fd = FisherData::from_parts(
                RSymMatrix::identity(2),
                RAntiMatrix::canonical(&[beta.abs()], 2),
            )
            .map_err(|e| Error::Domain(e.to_string()))?;
            let g = cfg.weight.clone().unwrap_or_default().resolve(&fd)?;
            (beta.abs(), cfg.weight.is_some().then(|| g.eig().0))
        }
        (None, None) => return Err(Error::Schema("boundary needs \"beta\" or a model".into())),
    };
    let curve = boundary_2param_window(beta, samples, window)?;
    let mut csv = String::from(if weight.is_some() { "x,z,u,v,TrGV\n" } else { "x,z,u,v\n" });
    for p in &curve.samples {
        let mut cells = vec![fmt_f64(p.x), fmt_f64(p.z), fmt_f64(p.u), fmt_f64(p.v)];
        if let Some(gs) = &weight {
            cells.push(fmt_f64(gs[0] * p.u + gs[1] * p.v));
        }
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    Ok(Output {
        report: None,
        csv: Some(csv),
        disagreement: false,
    })
}

/// Which Hilbert space a serialized PVM acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvmSpace {
    /// The model's own space at θ.
    Model,
    /// The `2m+1` frame with `φ' = e₀`, used when the model space is too small.
    Naimark,
}

/// PVM file contents as written by `pvm` and read by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvmDoc {
    pub space: PvmSpace,
    pub theta: Vec<f64>,
    pub outcomes: Vec<PvmEntry>,
}

fn frame_for(space: PvmSpace, point: &ModelPoint, fd: &FisherData) -> Result<LiftFrame> {
    match space {
        PvmSpace::Model => Ok(LiftFrame::from(&point.frame)),
        PvmSpace::Naimark => naimark_frame(fd),
    }
}

fn optimal_vectors(
    point: &ModelPoint,
    fd: &FisherData,
    g: &RSymMatrix,
) -> Result<(PvmSpace, EstimationVectors)> {
    let frame = LiftFrame::from(&point.frame);
    if quasi_classical_test(fd) {
        return Ok((PvmSpace::Model, optimal_vectors_quasi_classical(&frame, fd)?));
    }
    if beta_spectrum(fd)?.classification != Classification::Coherent {
        return Err(Error::NotSupported(
            "optimal PVMs are only constructed for quasi-classical, coherent or 1-parameter models"
                .into(),
        ));
    }
    if !g.is_positive_definite() {
        return Err(Error::SingularWeight);
    }
    let nf = naimark_frame(fd)?;
    let ev = optimal_vectors_coherent(&nf, fd, g)?;
    Ok(match naimark_embedding(&frame, fd)? {
        Some(w) => (PvmSpace::Model, EstimationVectors::new(frame.phi.clone(), &w * &ev.x)?),
        None => (PvmSpace::Naimark, ev),
    })
}

pub fn cmd_pvm(cfg: &RunConfig) -> Result<Output> {
    let (point, fd, g) = build(cfg)?;
    let (space, ev) = optimal_vectors(&point, &fd, &g)?;
    let pvm = pvm_from_vectors(&ev)?;
    let frame = frame_for(space, &point, &fd)?;
    let cov = covariance_of_pvm(&pvm, &frame)?;
    let closed = closed_form_bound(&fd, &g)?;
    let tr_gv = (g.matrix() * cov.v.matrix()).trace();
    let mut r = header(Command::Pvm, cfg);
    r.extend(model_section(&point, &fd)?);
    r.insert("G".into(), json!(g.to_rows()));
    r.insert(
        "verification".into(),
        json!({
            "algebra": to_value(&pvm.algebra()),
            "vectors": to_value(&ev.residuals(&frame, &(0..fd.param_dim()).collect::<Vec<_>>())),
            "covariance": to_value(&cov),
            "TrGV": tr_gv,
            "closed_form_value": closed.as_ref().map(|c| c.value),
        }),
    );
    let doc = PvmDoc {
        space,
        theta: point.theta.clone(),
        outcomes: pvm.to_entries(&point.theta),
    };
    r.insert("pvm".into(), to_value(&doc));
    Ok(Output {
        report: Some(Value::Object(r)),
        csv: None,
        disagreement: false,
    })
}

/// Reads a PVM document, either bare or inside a `pvm` report.
pub fn load_pvm(path: &Path) -> Result<PvmDoc> {
    let text = read_file(path)?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
    if let Some(inner) = v.get_mut("pvm") {
        v = inner.take();
    }
    serde_json::from_value(v).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Output> {
    let point = cfg.model_point()?;
    let fd = fisher_data(&point.frame)?;
    let path = cfg
        .pvm
        .as_ref()
        .ok_or_else(|| Error::Schema("simulate needs a PVM file (--pvm or \"pvm\")".into()))?;
    let doc = load_pvm(path)?;
    let pvm = Pvm::from_entries(&doc.outcomes, &point.theta)?;
    let frame = frame_for(doc.space, &point, &fd)?;
    if pvm.dim() != frame.dim() {
        return Err(Error::DimensionMismatch(format!(
            "PVM acts on dimension {}, model state has dimension {}",
            pvm.dim(),
            frame.dim()
        )));
    }
    if pvm.param_dim() != fd.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "PVM outcomes have {} components, model has {} parameters",
            pvm.param_dim(),
            fd.param_dim()
        )));
    }
    let count = cfg.samples.unwrap_or(DEFAULT_SIMULATION_SAMPLES);
    let seed = cfg.seed.unwrap_or(0);
    let (analytic, summary) = match &cfg.inflate {
        Some(rows) => {
            let v0 = RSymMatrix::from_rows(rows).map_err(|e| Error::Domain(format!("inflate: {e}")))?;
            let inflated = inflate_covariance(&pvm, &v0)?;
            (
                covariance_of_meas(&inflated, &frame)?,
                sample_outcomes(&inflated, &frame.phi, count, seed)?,
            )
        }
        None => (
            covariance_of_pvm(&pvm, &frame)?,
            sample_outcomes(&pvm, &frame.phi, count, seed)?,
        ),
    };
    let m = pvm.param_dim();
    let mut csv = (1..=m).map(|i| format!("outcome_{i}")).collect::<Vec<_>>().join(",");
    csv.push('\n');
    for off in &summary.offsets {
        let row: Vec<String> = off.iter().zip(&point.theta).map(|(o, t)| fmt_f64(o + t)).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let mut r = header(Command::Simulate, cfg);
    r.insert("model".into(), json!({"label": point.model.label(), "dim": point.model.dim()}));
    r.insert("theta".into(), json!(point.theta));
    r.insert("pvm_space".into(), to_value(&doc.space));
    r.insert("analytic".into(), to_value(&analytic));
    let mean_outcome: Vec<f64> = summary.mean.iter().zip(&point.theta).map(|(a, b)| a + b).collect();
    r.insert("mean_outcome".into(), json!(mean_outcome));
    r.insert("summary".into(), to_value(&summary));
    r.insert("max_abs_z".into(), json!(summary.max_abs_z()));
    Ok(Output {
        report: Some(Value::Object(r)),
        csv: Some(csv),
        disagreement: false,
    })
}

fn covariance_of_meas(meas: &impl Measurement, frame: &LiftFrame) -> Result<CovarianceReport> {
    let params: Vec<usize> = (0..meas.param_dim()).collect();
    crate::measurement::covariance_of(meas, frame, &params)
}

/// `%.17g`: 17 significant digits, trailing zeros trimmed.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let mut s = format!("{x:.decimals$}");
        if s.contains('.') {
            let trimmed = s.trim_end_matches('0');
            s = if trimmed.ends_with('.') { format!("{trimmed}0") } else { trimmed.to_string() };
        } else {
            s.push_str(".0");
        }
        s
    } else {
        let mut m = mantissa.trim_end_matches('0').to_string();
        if m.ends_with('.') {
            m.push('0');
        }
        format!("{m}e{exp}")
    }
}

/// Pretty JSON whose floats carry 17 significant digits.
pub fn to_json_string(v: &Value) -> String {
    let mut out = String::new();
    write_json(v, 0, &mut out);
    out.push('\n');
    out
}

fn write_json(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => write!(out, "{u}").expect("string write"),
            (_, Some(i), _) => write!(out, "{i}").expect("string write"),
            (_, _, Some(f)) => out.push_str(&fmt_f64(f)),
            _ => out.push_str("null"),
        },
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(|i| i.is_number()) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write_json(item, indent, out);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_json(item, indent + 1, out);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (k, (key, item)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_json(item, indent + 1, out);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}
