//! JSON and CSV rendering of subcommand results, and cloud file loading.

use std::io::Write;
use std::path::Path;

use serde_json::Value;

use sdgame_core::hamiltonian::SetCloud;

use crate::commands::Outcome;
use crate::error::CliError;
use crate::{Format, RunConfig};

/// Points with one provenance label each; rendered as CSV rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudTable {
    pub points: Vec<Vec<f64>>,
    pub provenance: Vec<String>,
}

pub fn render(outcome: &Outcome, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(&outcome.json).map_err(|source| CliError::Json {
                path: "<output>".into(),
                source,
            })?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            match &outcome.table {
                Some(table) => {
                    let width = table.points.first().map_or(0, Vec::len);
                    let mut header: Vec<String> = (1..=width).map(|i| format!("y{i}")).collect();
                    header.push("provenance".into());
                    w.write_record(&header)?;
                    for (p, label) in table.points.iter().zip(&table.provenance) {
                        let mut row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
                        row.push(label.clone());
                        w.write_record(&row)?;
                    }
                }
                None => {
                    w.write_record(["key", "value"])?;
                    if let Value::Object(map) = &outcome.json {
                        for (k, v) in map {
                            w.write_record([k.as_str(), &v.to_string()])?;
                        }
                    }
                }
            }
            w.into_inner().map_err(|e| CliError::Io {
                path: "<output>".into(),
                source: e.into_error(),
            })
        }
    }
}

/// Writes the result to `--out` (notes to stdout) or to stdout (notes to stderr).
pub fn emit(outcome: &Outcome, cfg: &RunConfig) -> Result<(), CliError> {
    let bytes = render(outcome, cfg.format)?;
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, &bytes).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            for note in &outcome.notes {
                println!("{note}");
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes).map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            })?;
            for note in &outcome.notes {
                eprintln!("{note}");
            }
        }
    }
    Ok(())
}

/// Reads a cloud written by this tool: JSON with `points` (and optional
/// `radius`), or CSV with numeric columns followed by `provenance`.
pub fn load_cloud(path: &Path) -> Result<SetCloud, CliError> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io)?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (points, radius) = if is_csv {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let numeric = r.headers()?.iter().filter(|h| *h != "provenance").count();
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let p = rec
                .iter()
                .take(numeric)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| CliError::Usage(format!("{}: '{v}' is not a number", path.display())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            points.push(p);
        }
        (points, 0.0)
    } else {
        let v: Value = serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.display().to_string(),
            source,
        })?;
        let points = v
            .get("points")
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("{}: no \"points\" array", path.display())))?;
        let points: Vec<Vec<f64>> = serde_json::from_value(points).map_err(|source| CliError::Json {
            path: path.display().to_string(),
            source,
        })?;
        (points, v.get("radius").and_then(Value::as_f64).unwrap_or(0.0))
    };
    Ok(SetCloud::new(points, radius)?)
}
