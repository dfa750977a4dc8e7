//! Result documents and where they are written.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

/// Relative output paths are resolved against this directory when set.
pub const OUT_DIR_VAR: &str = "PLATEHOM_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(rename = "format-version")]
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Fully resolved configuration; enough to re-run the command.
    pub config: Value,
    /// `sha256` of the canonical material TOML, hashed like a git blob.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material_digest: Option<String>,
    pub outputs: Value,
    /// Omitted in deterministic mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}

pub fn blob_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Where the document of a run goes: the explicit path, else
/// `<command>.json` in the override directory, else stdout.
pub fn document_path(out: Option<&Path>, command: &str) -> Option<PathBuf> {
    match out {
        Some(p) => Some(resolve(p)),
        None => std::env::var_os(OUT_DIR_VAR).map(|d| Path::new(&d).join(format!("{command}.json"))),
    }
}

pub fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let path = resolve(path);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

/// Largest relative difference between matching numbers of two documents;
/// `None` if their shapes differ.
pub fn max_rel_diff(a: &Value, b: &Value) -> Option<f64> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64()?, y.as_f64()?);
            let scale = x.abs().max(y.abs());
            Some(if scale == 0.0 { 0.0 } else { (x - y).abs() / scale })
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            x.iter().zip(y).try_fold(0.0f64, |m, (p, q)| Some(m.max(max_rel_diff(p, q)?)))
        }
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => x.iter().try_fold(0.0f64, |m, (k, p)| {
            Some(m.max(max_rel_diff(p, y.get(k)?)?))
        }),
        _ if a == b => Some(0.0),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn blob_digest_matches_git() {
        // `printf 'hello\n' | git hash-object --stdin` under sha256
        assert_eq!(
            blob_digest(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn rel_diff_walks_documents() {
        let a = json!({"v": [1.0, 2.0], "s": "x"});
        let b = json!({"v": [1.0, 2.0 + 2e-15], "s": "x"});
        assert!(max_rel_diff(&a, &b).unwrap() < 2e-15);
        assert!(max_rel_diff(&a, &json!({"v": [1.0], "s": "x"})).is_none());
        assert!(max_rel_diff(&a, &json!({"v": [1.0, 2.0], "s": "y"})).is_none());
    }
}
