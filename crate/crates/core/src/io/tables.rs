//! Sample CSV files: one header row of marker names, one row per cell.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{CellMatrix, Dataset};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        row,
        column: 0,
        message: e.to_string(),
    }
}

/// Read one sample file; returns the header and the cells.
pub fn read_sample(path: &Path) -> Result<(Vec<String>, CellMatrix)> {
    let file = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    let d = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        // row numbers are 1-based data rows; the header is row 0
        let row = r + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != d {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                column: record.len().min(d) + 1,
                message: format!("expected {d} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: c + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: c + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Ok((header, CellMatrix::new(rows, d, values)?))
}

/// Sample id of a file: its name without extension.
pub fn sample_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Load several sample files sharing one header.
pub fn load_samples<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::Data("no sample files given".into()));
    }
    let mut header: Option<(PathBuf, Vec<String>)> = None;
    let mut samples = Vec::with_capacity(paths.len());
    let mut ids = Vec::with_capacity(paths.len());
    for p in paths {
        let path = p.as_ref();
        let (h, cells) = read_sample(path)?;
        match &header {
            None => header = Some((path.to_path_buf(), h)),
            Some((_, expected)) if *expected != h => {
                return Err(Error::HeaderMismatch {
                    path: path.to_path_buf(),
                    expected: expected.clone(),
                    found: h,
                })
            }
            Some(_) => {}
        }
        samples.push(cells);
        ids.push(sample_id(path));
    }
    let markers = header.unwrap().1;
    Dataset::new(samples, markers, ids)
}

/// Write one sample per file as `<dir>/<sample id>.csv`. Values use the
/// shortest representation that parses back to the same double.
pub fn save_dataset(data: &Dataset, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(data.num_samples());
    for (id, cells) in data.sample_ids().iter().zip(data.samples()) {
        let path = dir.join(format!("{id}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(data.marker_names()).map_err(|e| csv_err(&path, e))?;
        for row in cells.iter_rows() {
            w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(|e| csv_err(&path, e))?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
