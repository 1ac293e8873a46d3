//! Report emission.

use std::path::Path;

use serde::Serialize;

use crate::config::{Format, Resolved};
use crate::Failure;

#[derive(Serialize)]
struct Envelope<'a, C, R> {
    command: &'a str,
    config: &'a Resolved<C>,
    result: &'a R,
    warnings: &'a [String],
}

pub fn csv_text<T: Serialize>(rows: &[T]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Failure::Numeric(format!("csv encoding: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::Numeric(format!("csv encoding: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Failure::Numeric(e.to_string()))
}

pub fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Validation(format!("cannot write {}: {e}", path.display())))
}

fn json<T: Serialize + ?Sized>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Numeric(format!("json encoding: {e}")))
}

/// Prints the report and writes it to the configured output file.
///
/// JSON reports embed the resolved configuration. CSV tables cannot, so it
/// goes to stderr instead.
pub fn emit<C: Serialize, R: Serialize>(
    command: &str,
    cfg: &Resolved<C>,
    result: &R,
    csv: impl FnOnce() -> Result<String, Failure>,
    warnings: &[String],
) -> Result<(), Failure> {
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let text = match cfg.format {
        Format::Json => {
            let mut t = json(&Envelope {
                command,
                config: cfg,
                result,
                warnings,
            })?;
            t.push('\n');
            t
        }
        Format::Csv => {
            eprintln!(
                "config: {}",
                serde_json::to_string(cfg).map_err(|e| Failure::Numeric(e.to_string()))?
            );
            csv()?
        }
    };
    print!("{text}");
    if let Some(path) = &cfg.output {
        write_file(path, &text)?;
    }
    Ok(())
}
