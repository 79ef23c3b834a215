use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::args::{Format, Spec};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Bad flags, values or settings; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Usage errors exit with 2, everything else with 1.
pub fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<UsageError>()
            || e.downcast_ref::<maln_core::Error>().is_some_and(|c| {
                matches!(
                    c,
                    maln_core::Error::InvalidParameter { .. }
                        | maln_core::Error::MissingConstant(_)
                        | maln_core::Error::InvalidSet(_)
                        | maln_core::Error::InconsistentFamily { .. }
                        | maln_core::Error::InvalidBarycentric(_)
                        | maln_core::Error::Unsupported(_)
                )
            })
    })
}

/// Shortest representation that parses back to the same value.
pub fn cell(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str], rows: Vec<Vec<String>>) -> Self {
        Self::from_strings(header.iter().map(|s| s.to_string()).collect(), rows)
    }

    pub fn from_strings(header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        Self { header, rows }
    }
}

fn strip_nulls(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|_, x| !x.is_null());
            map.values_mut().for_each(strip_nulls);
        }
        Value::Array(xs) => xs.iter_mut().for_each(strip_nulls),
        _ => {}
    }
}

/// The resolved settings with unset entries dropped.
pub fn config_value(spec: &Spec) -> Result<Value> {
    let mut v = serde_json::to_value(spec)?;
    strip_nulls(&mut v);
    Ok(v)
}

#[derive(Serialize)]
struct Envelope<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: Value,
    result: &'a Value,
}

/// Renders a command's output. Both formats carry the version, seed and config; the CSV
/// form repeats them on every row.
pub fn render(command: &str, spec: &Spec, result: &Value, table: &Table, format: Format) -> Result<Vec<u8>> {
    let seed = spec.core.seed.unwrap_or(0);
    let config = config_value(spec)?;
    match format {
        Format::Json => {
            let env = Envelope {
                tool: "maln",
                version: VERSION,
                command,
                seed,
                config,
                result,
            };
            let mut out = serde_json::to_vec_pretty(&env)?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["version".to_string(), "seed".to_string()];
            header.extend(table.header.iter().cloned());
            header.push("config".into());
            w.write_record(&header)?;
            let config = serde_json::to_string(&config)?;
            for row in &table.rows {
                let mut rec = vec![VERSION.to_string(), seed.to_string()];
                rec.extend(row.iter().cloned());
                rec.push(config.clone());
                w.write_record(&rec)?;
            }
            Ok(w.into_inner().context("flushing csv")?)
        }
    }
}

pub fn plot_csv(points: &[(f64, f64)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["delta", "success_rate"])?;
    for (d, r) in points {
        w.write_record([cell(*d), cell(*r)])?;
    }
    Ok(w.into_inner().context("flushing csv")?)
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            Ok(out.flush()?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_config() {
        let spec = Spec::default();
        let t = Table::new(&["a"], vec![vec!["x,y".into()]]);
        let out = String::from_utf8(render("bounds", &spec, &Value::Null, &t, Format::Csv).unwrap()).unwrap();
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("version,seed,a,config"));
        assert_eq!(lines.next(), Some(format!("{VERSION},0,\"x,y\",{{}}").as_str()));
    }

    #[test]
    fn usage_classification() {
        assert!(is_usage(&maln_core::Error::MissingConstant("L").into()));
        assert!(is_usage(&UsageError("x".into()).into()));
        assert!(!is_usage(&maln_core::Error::UnknownMinimizer.into()));
        assert!(!is_usage(&anyhow::anyhow!("disk full")));
    }

    #[test]
    fn nulls_are_dropped() {
        let mut v = serde_json::json!({"a": null, "b": {"c": null, "d": 1}});
        strip_nulls(&mut v);
        assert_eq!(v, serde_json::json!({"b": {"d": 1}}));
    }
}
