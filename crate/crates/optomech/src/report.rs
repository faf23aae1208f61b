//! Report schema and deterministic serialization.
//!
//! Reports are golden-file comparable: struct fields serialize in
//! declaration order, floats print shortest-roundtrip, and nothing
//! environment-dependent (timestamps, paths, thread counts) enters the
//! output. Rerunning an identical config must produce identical bytes.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::model::ModelParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// Formula and oracle disagree in a way that is understood and
    /// recorded, not reconciled; never an assertion failure.
    DeltaDocumented,
    Skipped,
}

/// Scalar report entry: real numbers stay bare, complex ones serialize as
/// {"re": x, "im": y}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Complex(Complex64),
}

impl Value {
    pub fn complex(z: Complex64) -> Value {
        if z.im == 0.0 {
            Value::Real(z.re)
        } else {
            Value::Complex(z)
        }
    }

    fn as_complex(&self) -> Complex64 {
        match *self {
            Value::Real(x) => Complex64::new(x, 0.0),
            Value::Complex(z) => z,
        }
    }

    pub fn distance(&self, other: &Value) -> f64 {
        (self.as_complex() - other.as_complex()).norm()
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Value::Real(x) => s.serialize_f64(x),
            Value::Complex(z) => {
                let mut st = s.serialize_struct("Complex", 2)?;
                st.serialize_field("re", &z.re)?;
                st.serialize_field("im", &z.im)?;
                st.end()
            }
        }
    }
}

/// One verified quantity: closed form against an independent oracle.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    /// Stable schema token ("eq10", "gamma-golden", ...).
    pub id: String,
    /// Human-readable description of what this row measures.
    pub label: String,
    pub formula_value: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_value: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub status: Status,
}

impl ResultRow {
    /// Formula vs oracle with a pass/fail verdict at an absolute tolerance.
    pub fn compared(
        id: &str,
        label: &str,
        formula: Value,
        oracle: Value,
        tolerance: f64,
    ) -> ResultRow {
        let delta = formula.distance(&oracle);
        ResultRow {
            id: id.into(),
            label: label.into(),
            formula_value: formula,
            oracle_value: Some(oracle),
            delta: Some(delta),
            tolerance: Some(tolerance),
            status: if delta <= tolerance {
                Status::Pass
            } else {
                Status::Fail
            },
        }
    }

    /// Formula vs oracle where disagreement is expected and recorded.
    pub fn documented(id: &str, label: &str, formula: Value, oracle: Value) -> ResultRow {
        let delta = formula.distance(&oracle);
        ResultRow {
            id: id.into(),
            label: label.into(),
            formula_value: formula,
            oracle_value: Some(oracle),
            delta: Some(delta),
            tolerance: None,
            status: Status::DeltaDocumented,
        }
    }

    /// A bare value with no oracle route (parameter echoes and the like).
    pub fn plain(id: &str, label: &str, value: Value) -> ResultRow {
        ResultRow {
            id: id.into(),
            label: label.into(),
            formula_value: value,
            oracle_value: None,
            delta: None,
            tolerance: None,
            status: Status::Pass,
        }
    }

    /// A quantity this run could not compute; the reason goes in warnings.
    pub fn skipped(id: &str, label: &str) -> ResultRow {
        ResultRow {
            id: id.into(),
            label: label.into(),
            formula_value: Value::Real(0.0),
            oracle_value: None,
            delta: None,
            tolerance: None,
            status: Status::Skipped,
        }
    }
}

/// Warning with a machine-readable kind tag; errors that abort a run are
/// also recorded here so the report carries the failure payload.
#[derive(Clone, Debug, Serialize)]
pub struct Warning {
    pub kind: String,
    pub message: String,
}

impl Warning {
    pub fn note(message: impl Into<String>) -> Warning {
        Warning {
            kind: "note".into(),
            message: message.into(),
        }
    }

    pub fn delta(message: impl Into<String>) -> Warning {
        Warning {
            kind: "delta-documented".into(),
            message: message.into(),
        }
    }

    pub fn from_error(e: &Error) -> Warning {
        Warning {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

/// One point of a swept scalar.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesPoint {
    pub param: f64,
    pub value: Value,
}

/// Frequencies and couplings actually used, echoed for reproducibility.
#[derive(Clone, Debug, Serialize)]
pub struct DerivedParams {
    pub omega_modes: Vec<f64>,
    pub omega_m: f64,
    pub g: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling_convention_ratio: Option<f64>,
}

impl DerivedParams {
    pub fn from_params(p: &ModelParams) -> DerivedParams {
        DerivedParams {
            omega_modes: p.omega_modes.clone(),
            omega_m: p.omega_m,
            g: p.g,
            g_matrix: p.g_matrix.clone(),
            coupling_convention_ratio: p.coupling_convention_ratio(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    /// Effective configuration after file and flag merging.
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived_params: Option<DerivedParams>,
    pub results: Vec<ResultRow>,
    pub series: Vec<SeriesPoint>,
    pub warnings: Vec<Warning>,
    pub version: &'static str,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

impl Report {
    pub fn new(config: serde_json::Value, params: Option<&ModelParams>) -> Report {
        Report {
            config,
            derived_params: params.map(DerivedParams::from_params),
            results: Vec::new(),
            series: Vec::new(),
            warnings: Vec::new(),
            version: VERSION,
        }
    }

    pub fn push(&mut self, row: ResultRow) {
        self.results.push(row);
    }

    pub fn warn(&mut self, w: Warning) {
        self.warnings.push(w);
    }

    /// Documented-delta row plus its warning entry, so the delta block is
    /// impossible to miss when scanning only warnings.
    pub fn push_documented(&mut self, row: ResultRow) {
        if let (Some(delta), Some(oracle)) = (row.delta, &row.oracle_value) {
            self.warn(Warning::delta(format!(
                "{}: formula {:?} vs oracle {:?} differ by {delta:e}; recorded, not reconciled",
                row.id, row.formula_value, oracle
            )));
        }
        self.results.push(row);
    }

    pub fn failed(&self) -> bool {
        self.results.iter().any(|r| r.status == Status::Fail)
    }
}

pub fn render_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Validation(format!("report does not serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// CSV for a real-valued series: '#'-prefixed JSON header line, then
/// `<x_name>,value` rows.
pub fn render_scalar_csv(
    header: &impl Serialize,
    x_name: &str,
    points: &[SeriesPoint],
) -> Result<String> {
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(
        &serde_json::to_string(header)
            .map_err(|e| Error::Validation(format!("header does not serialize: {e}")))?,
    );
    out.push('\n');
    out.push_str(x_name);
    out.push_str(",re,im\n");
    for p in points {
        let z = p.value.as_complex();
        out.push_str(&format!("{},{},{}\n", p.param, z.re, z.im));
    }
    Ok(out)
}

/// Write through a temp file in the destination directory, then rename, so
/// a crash never leaves a half-written report behind.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(content.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Emit to the given path (atomically) or to stdout.
pub fn emit(content: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, content),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
