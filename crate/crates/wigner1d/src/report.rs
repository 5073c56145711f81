//! Output emission: every artifact file starts with one `#`-prefixed
//! JSON metadata line (build, seed, parameters, timestamp) followed by
//! the data section, CSV rows or a JSON document. Reruns with identical
//! configuration and seed reproduce the data section byte for byte;
//! only the metadata line carries the timestamp.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;

/// Build identifier embedded at compile time (`git describe` when the
/// sources are a checkout, the crate version otherwise).
pub fn build_id() -> &'static str {
    env!("WIGNER1D_BUILD")
}

/// Metadata header carried by every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub build: String,
    pub command: String,
    pub seed: Option<u64>,
    pub parameters: Value,
    /// Seconds since the Unix epoch at emission time.
    pub timestamp: u64,
}

impl RunMetadata {
    pub fn new(command: &str, seed: Option<u64>, parameters: Value) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunMetadata {
            build: build_id().to_string(),
            command: command.to_string(),
            seed,
            parameters,
            timestamp,
        }
    }

    fn header_line(&self) -> String {
        format!("# {}", serde_json::to_string(self).expect("metadata serializes"))
    }
}

/// CSV payload with named columns.
#[derive(Debug, Clone, Default)]
pub struct CsvData {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvData {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        CsvData { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Writes `# metadata` and then the CSV data section. Float formatting
/// uses Rust's shortest round-trip representation, which is exact and
/// deterministic.
pub fn write_csv<W: Write>(mut w: W, meta: &RunMetadata, data: &CsvData) -> Result<()> {
    writeln!(w, "{}", meta.header_line())?;
    writeln!(w, "{}", data.columns.join(","))?;
    for row in &data.rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Writes `# metadata` and then a pretty JSON document.
pub fn write_json<W: Write, T: Serialize>(mut w: W, meta: &RunMetadata, data: &T) -> Result<()> {
    writeln!(w, "{}", meta.header_line())?;
    writeln!(w, "{}", serde_json::to_string_pretty(data)?)?;
    Ok(())
}

/// The data section of an emitted file: everything except `#` lines.
/// This is the part required to be byte-identical across reruns.
pub fn data_section(contents: &str) -> String {
    contents
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Convenience: metadata parameter blob from key/value pairs.
pub fn params_json(pairs: &[(&str, Value)]) -> Value {
    let mut map = serde_json::Map::new();
    for (k, v) in pairs {
        map.insert((*k).to_string(), v.clone());
    }
    json!(map)
}
