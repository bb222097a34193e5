//! CSV and JSON emission. Floats are written with 17 significant digits and
//! files are replaced atomically.

use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn floats(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|&x| float(x)).collect()
}

/// CSV text from a header and preformatted rows.
pub fn csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Columns `prefix_1, ..., prefix_n`.
pub fn numbered(prefix: &str, n: usize, from: usize) -> Vec<String> {
    (from..from + n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Writes through a temporary file in the target directory and renames it.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Hex SHA-256 of the canonical JSON form of a value.
pub fn spec_hash<T: serde::Serialize>(spec: &T) -> String {
    let canonical = serde_json::to_string(spec).expect("spec serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Non-finite floats become `null` in JSON; this keeps them visible as strings.
pub fn json_float(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::json!(x.to_string())
    }
}
