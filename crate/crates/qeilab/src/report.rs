//! Deterministic report emission: CSV tables with a fixed column order and
//! shortest round-trip float rendering, schema-versioned JSON payloads, and
//! the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{QeiError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Shortest decimal rendering that round-trips through `f64` parsing.
pub fn render_f64(x: f64) -> String {
    format!("{x}")
}

/// A CSV table with a header row and a fixed column order.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let escape = |cell: &str| -> String {
            if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
                format!("\"{}\"", cell.replace('"', "\"\""))
            } else {
                cell.to_string()
            }
        };
        let mut out = String::new();
        out.push_str(&self.header.iter().map(|c| escape(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|c| escape(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.render())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| QeiError::InvalidParameter(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| QeiError::InvalidParameter(format!("cannot write {}: {e}", path.display())))
}

/// Serialize a report as schema-versioned pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, payload: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Versioned<'a, T: Serialize> {
        schema_version: u32,
        #[serde(flatten)]
        payload: &'a T,
    }
    let text = serde_json::to_string_pretty(&Versioned {
        schema_version: REPORT_SCHEMA_VERSION,
        payload,
    })
    .map_err(|e| QeiError::InvalidParameter(format!("serialization failure: {e}")))?;
    write_text(path, &(text + "\n"))
}

/// Provenance record of one run: what was executed, on which inputs, with
/// which verdicts, and which files were written.  The timestamp is run
/// metadata and is excluded from the reproducibility contract; all numeric
/// payloads live in the report files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    /// SHA-256 over the config text, the seed, and the refinement factor.
    pub config_hash: String,
    pub seed: u64,
    pub refine: u32,
    pub generated_unix_seconds: u64,
    pub verdicts: Vec<(String, String)>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(config_text: &str, seed: u64, refine: u32) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_text.as_bytes());
        hasher.update(seed.to_le_bytes());
        hasher.update(refine.to_le_bytes());
        let config_hash = format!("{:x}", hasher.finalize());
        let generated_unix_seconds = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seed,
            refine,
            generated_unix_seconds,
            verdicts: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn record(&mut self, check: &str, verdict: &str) {
        self.verdicts.push((check.to_string(), verdict.to_string()));
    }

    pub fn attach(&mut self, path: &Path) {
        self.files.push(path.display().to_string());
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_rendering_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 6.283185307179586] {
            let s = render_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn csv_escapes_and_fixed_header() {
        let mut t = CsvTable::new(&["state", "value"]);
        t.push(vec!["coherent [0:+1,+0i]".into(), render_f64(0.5)]);
        let text = t.render();
        assert!(text.starts_with("state,value\n"));
        assert!(text.contains("\"coherent [0:+1,+0i]\",0.5\n"));
    }

    #[test]
    fn manifest_hash_depends_on_inputs() {
        let a = RunManifest::new("x = 1", 42, 1);
        let b = RunManifest::new("x = 1", 43, 1);
        let c = RunManifest::new("x = 2", 42, 1);
        assert_ne!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
        assert_eq!(a.config_hash, RunManifest::new("x = 1", 42, 1).config_hash);
    }
}
