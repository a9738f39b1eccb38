//! Deterministic emitters: CSV with shortest round-trip floats and a JSON
//! run manifest describing every file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use qbh::Result;

/// Shortest round-trip, locale-independent float text.
pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv(
    out: Option<&Path>,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

pub fn append_csv_rows(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let mut f = std::fs::OpenOptions::new().append(true).open(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Count existing data rows (excluding the header) in a CSV file.
pub fn existing_rows(path: &Path) -> usize {
    match std::fs::read_to_string(path) {
        Ok(text) => text.lines().skip(1).filter(|l| !l.trim().is_empty()).count(),
        Err(_) => 0,
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Manifest accompanying a file output: tool version, the resolved inputs,
/// and the produced rows, sufficient to reproduce the file.
pub fn write_manifest(out: &Path, body: serde_json::Value) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": "qbh",
        "version": env!("CARGO_PKG_VERSION"),
        "output": out.display().to_string(),
        "inputs": body,
    });
    std::fs::write(manifest_path(out), serde_json::to_string_pretty(&manifest).unwrap())?;
    Ok(())
}
