//! Delimited tables on disk and atomic file writes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ddecop_core::{DataTable, Matrix};

/// A required input path that does not exist.
#[derive(Debug)]
pub struct MissingPath(pub PathBuf);

impl std::fmt::Display for MissingPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "input file not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingPath {}

/// Fails with [`MissingPath`] unless `path` is an existing file.
pub fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(MissingPath(path.to_path_buf()).into());
    }
    Ok(())
}

/// CSV dialect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvFormat {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self { delimiter: b',', has_header: true }
    }
}

/// Reads a numeric table. Every cell must parse as a finite number; errors
/// name the 1-based data row and column.
pub fn load_table(path: &Path, format: CsvFormat) -> Result<DataTable> {
    require_file(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(format.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let names: Option<Vec<String>> =
        if format.has_header { Some(reader.headers()?.iter().map(str::to_string).collect()) } else { None };
    let mut values = Vec::new();
    let mut width = names.as_ref().map(Vec::len);
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: malformed row {}", path.display(), r + 1))?;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            bail!("{}: row {} has {} fields, expected {w}", path.display(), r + 1, record.len());
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).with_context(|| {
                let col = names.as_ref().map_or_else(|| format!("{}", c + 1), |n| format!("{} ({})", c + 1, n[c]));
                format!("{}: row {}, column {col}: {cell:?} is not a finite number", path.display(), r + 1)
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    let matrix = Matrix::from_vec(rows, width, values)?;
    let table = match names {
        Some(n) => DataTable::new(n, matrix),
        None => DataTable::unnamed(matrix),
    };
    table.with_context(|| format!("{}: invalid table", path.display()))
}

/// Comma-separated text of a table with a header row.
pub fn table_to_csv(table: &DataTable) -> String {
    let mut out = table.names().join(",");
    out.push('\n');
    for row in table.values().row_iter() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path).with_context(|| format!("cannot move output into {}", path.display()))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
