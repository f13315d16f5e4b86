//! Dataset files.
//!
//! CSV: a header `x0,…,x{n-1},label`, then one sample per row with
//! coordinates printed to 17 significant digits, so values read back
//! bit-exactly.
//!
//! Binary: `RKM1`, `u32` dimension `n`, `u32` count `N`, then `n·N`
//! little-endian `f64` (one sample per column), then `N` little-endian `u32`
//! labels.

use std::fs;
use std::io::Write;
use std::path::Path;

use rkm_core::model::Dataset;

use crate::error::{CliError, CliResult};

pub const BINARY_MAGIC: &[u8; 4] = b"RKM1";

fn format_err(path: &Path, reason: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

pub fn dataset_to_csv(data: &Dataset) -> String {
    let n = data.dim();
    let mut out = String::with_capacity(data.len() * (n + 1) * 24);
    for i in 0..n {
        out.push_str(&format!("x{i},"));
    }
    out.push_str("label\n");
    for j in 0..data.len() {
        for v in data.point(j) {
            out.push_str(&format!("{v:.16e},"));
        }
        out.push_str(&data.labels()[j].to_string());
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str, path: &Path) -> CliResult<Dataset> {
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| format_err(path, "empty file"))?;
    let columns = header.split(',').count();
    if columns < 2 || header.split(',').next_back() != Some("label") {
        return Err(format_err(
            path,
            "header must list coordinates followed by `label`",
        ));
    }
    let dim = columns - 1;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(format_err(
                path,
                format!(
                    "row {} has {} fields, expected {columns}",
                    row + 1,
                    fields.len()
                ),
            ));
        }
        for f in &fields[..dim] {
            points.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| format_err(path, format!("row {}: {e}", row + 1)))?,
            );
        }
        labels.push(
            fields[dim]
                .trim()
                .parse::<usize>()
                .map_err(|e| format_err(path, format!("row {}: label: {e}", row + 1)))?,
        );
    }
    let components = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dataset::new(dim, components, points, labels, 0)?)
}

pub fn dataset_to_bytes(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + data.points().len() * 8 + data.len() * 4);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(data.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    for v in data.points() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in data.labels() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out
}

pub fn dataset_from_bytes(bytes: &[u8], path: &Path) -> CliResult<Dataset> {
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(format_err(path, "missing RKM1 header"));
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (dim, count) = (word(4), word(8));
    let expected = dim
        .checked_mul(count)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(12 + count * 4))
        .ok_or_else(|| format_err(path, "size overflow"))?;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!(
                "expected {expected} bytes for n = {dim}, N = {count}, found {}",
                bytes.len()
            ),
        ));
    }
    let body = &bytes[12..];
    let points: Vec<f64> = body[..dim * count * 8]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let labels: Vec<usize> = body[dim * count * 8..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let components = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dataset::new(dim, components, points, labels, 0)?)
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> CliResult<()> {
    write_text(path, &dataset_to_csv(data))
}

pub fn write_dataset_binary(path: &Path, data: &Dataset) -> CliResult<()> {
    write_bytes(path, &dataset_to_bytes(data))
}

/// Reads a dataset, choosing the format from the extension (`.csv` or
/// anything else for binary).
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    if path.extension().is_some_and(|e| e == "csv") {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        dataset_from_csv(&text, path)
    } else {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        dataset_from_bytes(&bytes, path)
    }
}
