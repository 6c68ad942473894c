//! File formats.
//!
//! Cubes are a JSON header `<stem>.json` next to a raw little-endian float64
//! payload `<stem>.f64` in band-interleaved-by-pixel order. Matrices are CSV
//! with a `# rows=<r> cols=<c>` first line and 17 significant digits per
//! value, which round-trips every finite f64 exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_finite, HsiCube, Mat, SpectralLibrary};
use crate::error::{Result, UnmixError};

const DTYPE: &str = "f64le";
const LAYOUT: &str = "bip";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub dtype: String,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Clamp negative reflectance to zero instead of rejecting the file.
    pub allow_negative: bool,
}

fn stem_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("f64") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = stem.clone().into_os_string();
    header.push(".json");
    let mut payload = stem.into_os_string();
    payload.push(".f64");
    (header.into(), payload.into())
}

/// Writes `<stem>.json` and `<stem>.f64`. Returns the header path.
pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<PathBuf> {
    let (header_path, payload_path) = stem_paths(path.as_ref());
    let header = CubeHeader {
        rows: cube.rows(),
        cols: cube.cols(),
        bands: cube.bands(),
        dtype: DTYPE.into(),
        layout: LAYOUT.into(),
        wavelengths: cube.wavelengths().map(<[f64]>::to_vec),
    };
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(&header_path, json + "\n").map_err(|e| UnmixError::io(&header_path, e))?;

    let mut bytes = Vec::with_capacity(cube.values().len() * 8);
    for v in cube.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&payload_path, bytes).map_err(|e| UnmixError::io(&payload_path, e))?;
    Ok(header_path)
}

pub fn load_cube(path: impl AsRef<Path>, opts: LoadOptions) -> Result<HsiCube> {
    let (header_path, payload_path) = stem_paths(path.as_ref());
    let text = fs::read_to_string(&header_path).map_err(|e| UnmixError::io(&header_path, e))?;
    let header: CubeHeader = serde_json::from_str(&text).map_err(|e| UnmixError::Format {
        what: "cube header",
        path: header_path.clone(),
        detail: e.to_string(),
    })?;
    if header.dtype != DTYPE || header.layout != LAYOUT {
        return Err(UnmixError::Format {
            what: "cube header",
            path: header_path,
            detail: format!(
                "unsupported dtype/layout {}/{} (expected {DTYPE}/{LAYOUT})",
                header.dtype, header.layout
            ),
        });
    }
    if header.rows == 0 || header.cols == 0 || header.bands == 0 {
        return Err(UnmixError::Format {
            what: "cube header",
            path: header_path,
            detail: "dimensions must be positive".into(),
        });
    }

    let bytes = fs::read(&payload_path).map_err(|e| UnmixError::io(&payload_path, e))?;
    let expected = header.rows * header.cols * header.bands;
    if bytes.len() % 8 != 0 || bytes.len() / 8 != expected {
        return Err(UnmixError::SizeMismatch {
            path: payload_path,
            expected,
            found: bytes.len() / 8,
        });
    }
    let mut values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    check_finite(&values)?;

    if let Some(idx) = values.iter().position(|&v| v < 0.0) {
        if opts.allow_negative {
            values.iter_mut().for_each(|v| *v = v.max(0.0));
        } else {
            let bands = header.bands;
            return Err(UnmixError::Negative {
                row: idx / bands,
                col: idx % bands,
                value: values[idx],
            });
        }
    }
    HsiCube::new(
        header.rows,
        header.cols,
        header.bands,
        values,
        header.wavelengths,
    )
}

pub fn write_matrix_csv(m: &Mat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(m.len() * 24 + 32);
    let _ = writeln!(out, "# rows={} cols={}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", m[(r, c)]);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| UnmixError::io(path, e))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| UnmixError::io(path, e))?;
    let bad = |detail: String| UnmixError::Format {
        what: "matrix csv",
        path: path.to_path_buf(),
        detail,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let (rows, cols) = parse_dims(header).ok_or_else(|| {
        bad(format!(
            "first line must be `# rows=<r> cols=<c>`, got {header:?}"
        ))
    })?;

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                bad(format!(
                    "non-numeric cell {cell:?} at line {}, column {}",
                    n + 2,
                    c + 1
                ))
            })?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(bad(format!(
                "line {} has {} values, expected {cols}",
                n + 2,
                data.len() - before
            )));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(bad(format!("found {seen} rows, header says {rows}")));
    }
    check_finite(&data)?;
    Ok(Mat::from_row_slice(rows, cols, &data))
}

fn parse_dims(line: &str) -> Option<(usize, usize)> {
    let rest = line.trim().strip_prefix('#')?.trim();
    let mut rows = None;
    let mut cols = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("rows=") {
            rows = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("cols=") {
            cols = v.parse().ok();
        }
    }
    Some((rows?, cols?))
}

/// Reads a delimited text library: a header row naming the wavelength
/// column and each signature, then one row per band.
///
/// Commas, tabs, semicolons or plain whitespace are accepted as delimiters.
/// Lines starting with `#` are skipped.
pub fn load_library(path: impl AsRef<Path>) -> Result<SpectralLibrary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| UnmixError::io(path, e))?;
    let bad = |detail: String| UnmixError::Format {
        what: "spectral library",
        path: path.to_path_buf(),
        detail,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let delim = detect_delimiter(header);
    let names: Vec<String> = split(header, delim).map(str::to_string).collect();
    if names.iter().all(|n| n.parse::<f64>().is_ok()) {
        return Err(bad("missing header row".into()));
    }
    if names.len() < 2 {
        return Err(bad(
            "need a wavelength column and at least one signature".into()
        ));
    }
    let q = names.len() - 1;

    let mut wavelengths = Vec::new();
    let mut cells = Vec::new();
    for (n, line) in lines {
        let row: Vec<&str> = split(line, delim).collect();
        if row.len() != names.len() {
            return Err(bad(format!(
                "ragged row at line {}: {} cells, expected {}",
                n + 1,
                row.len(),
                names.len()
            )));
        }
        for (c, cell) in row.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                bad(format!(
                    "non-numeric cell {cell:?} at line {}, column {} ({})",
                    n + 1,
                    c + 1,
                    names[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(bad(format!(
                    "non-finite cell at line {}, column {}",
                    n + 1,
                    c + 1
                )));
            }
            if c == 0 {
                wavelengths.push(v);
            } else if v < 0.0 {
                return Err(bad(format!(
                    "negative reflectance {v} at line {}, column {} ({})",
                    n + 1,
                    c + 1,
                    names[c]
                )));
            } else {
                cells.push(v);
            }
        }
    }
    if wavelengths.is_empty() {
        return Err(bad("no band rows".into()));
    }
    let signatures = Mat::from_row_slice(wavelengths.len(), q, &cells);
    SpectralLibrary::new(names[1..].to_vec(), wavelengths, signatures)
}

#[derive(Clone, Copy)]
enum Delim {
    Char(char),
    Whitespace,
}

fn detect_delimiter(header: &str) -> Delim {
    [',', '\t', ';']
        .into_iter()
        .find(|&c| header.contains(c))
        .map_or(Delim::Whitespace, Delim::Char)
}

fn split(line: &str, delim: Delim) -> Box<dyn Iterator<Item = &str> + '_> {
    match delim {
        Delim::Char(c) => Box::new(line.split(c).map(str::trim)),
        Delim::Whitespace => Box::new(line.split_whitespace()),
    }
}
