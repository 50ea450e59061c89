//! Report records and their deterministic serialization.
//!
//! JSON output sorts object keys and writes every non-integer number with 17
//! significant digits, so equal records always produce identical bytes and
//! parse back to the same `f64` values.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Serde adapter writing infinite floats as `null` (JSON has no infinity).
pub mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "text" => Ok(Format::Text),
            other => Err(format!("unknown format `{other}` (json, csv, text)")),
        }
    }
}

/// Rows of scalars under a fixed header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Op,
    SmallSignal,
    Sar,
    Mc,
    Infer,
    Energy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Op => "op",
            ExperimentKind::SmallSignal => "small_signal",
            ExperimentKind::Sar => "sar",
            ExperimentKind::Mc => "mc",
            ExperimentKind::Infer => "infer",
            ExperimentKind::Energy => "energy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub kind: ExperimentKind,
    /// SHA-256 of the canonical resolved configuration.
    pub inputs_digest: String,
    pub payload: Value,
    pub table: Option<Table>,
    pub tool_version: String,
    pub seed: u64,
}

impl ReportRecord {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("report json: {e}")))
    }
}

pub fn emit_report(record: &ReportRecord, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let v = serde_json::to_value(record)
                .map_err(|e| Error::invalid(format!("report serialization: {e}")))?;
            let mut s = to_canonical_json(&v);
            s.push('\n');
            Ok(s.into_bytes())
        }
        Format::Csv => {
            let table = record.table.as_ref().ok_or_else(|| {
                Error::UnsupportedFormat(format!(
                    "csv needs a tabular payload; `{}` reports are not tabular",
                    record.kind.name()
                ))
            })?;
            table_csv(table)
        }
        Format::Text => Ok(text_report(record).into_bytes()),
    }
}

pub fn table_csv(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(scalar_text))?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if !(n.is_i64() || n.is_u64()) => format!("{f:e}"),
            _ => n.to_string(),
        },
        other => to_canonical_json(other),
    }
}

/// Like [`scalar_text`] but with `null` spelled out and scalar arrays inline.
fn text_value(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(text_value).collect();
            format!("[{}]", parts.join(", "))
        }
        other => scalar_text(other),
    }
}

/// Pretty JSON with sorted keys and fixed 17-digit floats.
pub fn to_canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out
}

fn write_number(out: &mut String, n: &serde_json::Number) {
    if n.is_i64() || n.is_u64() {
        let _ = write!(out, "{n}");
    } else {
        let f = n.as_f64().expect("finite float");
        let _ = write!(out, "{f:.16e}");
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, v: &Value, level: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string encodes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // Arrays of scalars stay on one line.
            if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (k, x) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, level);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, x) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, x, level + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&serde_json::to_string(key).expect("string encodes"));
                out.push_str(": ");
                write_value(out, &map[key.as_str()], level + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push('}');
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for k in keys {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&p, &map[k.as_str()], out);
            }
        }
        Value::Array(items) if items.iter().any(|x| x.is_object() || x.is_array()) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        other => out.push((prefix.to_string(), text_value(other))),
    }
}

fn text_report(r: &ReportRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", r.kind.name());
    let _ = writeln!(s, "seed: {}", r.seed);
    let _ = writeln!(s, "inputs digest: {}", r.inputs_digest);
    let _ = writeln!(s, "tool version: {}", r.tool_version);
    if r.kind == ExperimentKind::Energy {
        let ratio = match r.payload.get("ratio") {
            Some(Value::Number(n)) => format!("{:.4}", n.as_f64().unwrap_or(f64::NAN)),
            _ => "undefined (zero analog energy)".into(),
        };
        let _ = writeln!(s, "analog/digital energy ratio: {ratio}");
    }
    let mut lines = Vec::new();
    flatten("", &r.payload, &mut lines);
    for (k, v) in lines {
        let _ = writeln!(s, "{k} = {v}");
    }
    if let Some(t) = &r.table {
        let _ = writeln!(s, "table: {} rows ({})", t.rows.len(), t.header.join(", "));
    }
    s
}
