use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{parse_with_limit, SmilesErrorKind};
use crate::molgraph::MolecularGraph;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("column {column:?} not found in header of {path}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed csv in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// One rejected record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipRecord {
    /// 1-based line number in the source file.
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub graphs: Vec<MolecularGraph>,
    /// Source text of each retained graph.
    pub smiles: Vec<String>,
    pub skipped: Vec<SkipRecord>,
    /// Number of records read, retained or not.
    pub scanned: usize,
}

/// Loads a SMILES dataset.
///
/// With `column` set the file is read as CSV and that header column holds the
/// SMILES. Without it, a first line containing a comma is treated as a CSV
/// header with a `smiles` column (case-insensitive); otherwise every
/// non-blank line holds one SMILES string as its first whitespace-separated
/// field.
pub fn load_dataset(path: &Path, column: Option<&str>, n_max: usize) -> Result<Dataset, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::FileNotFound(path.to_path_buf()));
    }
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut first = String::new();
    BufReader::new(File::open(path).map_err(io_err)?)
        .read_line(&mut first)
        .map_err(io_err)?;

    let records: Vec<(usize, String)> = if column.is_some() || first.contains(',') {
        read_csv_column(path, column.unwrap_or("smiles"))?
    } else {
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let field = trimmed.split_whitespace().next().unwrap_or_default();
            out.push((i + 1, field.to_string()));
        }
        out
    };

    let mut ds = Dataset::default();
    for (line, raw) in records {
        ds.scanned += 1;
        match parse_with_limit(&raw, n_max) {
            Ok(g) => {
                ds.graphs.push(g);
                ds.smiles.push(raw);
            }
            Err(e) => {
                let reason = match e.kind {
                    SmilesErrorKind::TooManyAtoms => format!("TooManyAtoms(n_max={n_max})"),
                    kind => format!("{kind}@{}", e.position),
                };
                log::debug!("skipping line {line}: {reason}");
                ds.skipped.push(SkipRecord { line, reason, raw });
            }
        }
    }
    Ok(ds)
}

fn read_csv_column(path: &Path, column: &str) -> Result<Vec<(usize, String)>, DatasetError> {
    let csv_err = |source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let idx = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(column))
        .ok_or_else(|| DatasetError::MissingColumn {
            path: path.to_path_buf(),
            column: column.to_string(),
        })?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = rec.get(idx).unwrap_or_default().trim().to_string();
        out.push((line, field));
    }
    Ok(out)
}

/// Writes the skip log, one `<line>\t<reason>\t<raw>` line per record.
pub fn write_skip_log<W: Write>(mut w: W, skipped: &[SkipRecord]) -> io::Result<()> {
    for s in skipped {
        writeln!(w, "{}\t{}\t{}", s.line, s.reason, s.raw)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn plain_lines() {
        let f = temp_file("C\nCC\nCCO\nc1ccccc1\nO=C=O\n");
        let ds = load_dataset(f.path(), None, 10).unwrap();
        assert_eq!(ds.graphs.len(), 5);
        assert!(ds.skipped.is_empty());
        assert_eq!(ds.scanned, 5);
    }

    #[test]
    fn unbalanced_record_is_skipped_and_logged() {
        let f = temp_file("CCO\nC(C\nCC\n");
        let ds = load_dataset(f.path(), None, 10).unwrap();
        assert_eq!(ds.graphs.len(), 2);
        assert_eq!(ds.skipped.len(), 1);
        assert_eq!(ds.skipped[0].line, 2);
        assert!(ds.skipped[0].reason.starts_with("UnbalancedBranch"));
        let mut buf = Vec::new();
        write_skip_log(&mut buf, &ds.skipped).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "2\tUnbalancedBranch@1\tC(C\n");
    }

    #[test]
    fn csv_with_named_column() {
        let f = temp_file("name,smiles\nethanol,CCO\nbig,CCCCCCCCCCCC\n\"quoted, name\",C\n");
        let ds = load_dataset(f.path(), None, 10).unwrap();
        assert_eq!(ds.smiles, vec!["CCO", "C"]);
        assert_eq!(ds.skipped[0].line, 3);
        assert!(ds.skipped[0].reason.starts_with("TooManyAtoms"));
        let ds = load_dataset(f.path(), Some("SMILES"), 10).unwrap();
        assert_eq!(ds.graphs.len(), 2);
    }

    #[test]
    fn missing_file_and_column() {
        assert!(matches!(
            load_dataset(Path::new("/nonexistent/x.csv"), None, 10),
            Err(DatasetError::FileNotFound(_))
        ));
        let f = temp_file("a,b\n1,2\n");
        assert!(matches!(
            load_dataset(f.path(), None, 10),
            Err(DatasetError::MissingColumn { .. })
        ));
    }
}
