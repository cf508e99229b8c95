//! Text outputs. Every file opens with the resolved configuration as `#`
//! comment lines.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

pub fn commented(header: &str) -> String {
    header.lines().map(|l| format!("# {l}\n")).collect()
}

pub fn write_text(path: &Path, header: &str, body: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write in {}", dir.display()))?;
    tmp.write_all(commented(header).as_bytes())?;
    tmp.write_all(body.as_bytes())?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Comma-separated table with a column header line.
pub fn csv<const K: usize>(columns: &[&str], rows: impl IntoIterator<Item = [f64; K]>) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create output directory {}", path.display()))
}
