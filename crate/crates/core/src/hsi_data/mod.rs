//! Hyperspectral cubes, abundance images and spectral libraries.
//!
//! Pixel ordering is row-major everywhere: pixel `(i, j)` of a
//! `rows × cols` image is column `p = i·cols + j` of the `B × P` data
//! matrix. The same ordering is used by [`reshape_row`] to turn a row of an
//! abundance matrix back into an image, which in turn defines the pixel
//! neighbourhoods of the total-variation prior.

mod io;

pub use io::{
    load_cube, load_library, read_matrix_csv, save_cube, write_matrix_csv, CubeHeader, LoadOptions,
};

use nalgebra::DMatrix;

use crate::error::{Result, UnmixError};
use crate::tv_prox::Grid;

/// Dense real matrix used throughout the crate.
pub type Mat = DMatrix<f64>;

/// A hyperspectral image stored band-interleaved-by-pixel.
///
/// `values[(i·cols + j)·bands + b]` is the reflectance of pixel `(i, j)` in
/// band `b`. This layout is exactly the column-major storage of the `B × P`
/// matrix view, so [`flatten`] is a copy.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    rows: usize,
    cols: usize,
    bands: usize,
    values: Vec<f64>,
    wavelengths: Option<Vec<f64>>,
}

impl HsiCube {
    pub fn new(
        rows: usize,
        cols: usize,
        bands: usize,
        values: Vec<f64>,
        wavelengths: Option<Vec<f64>>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(UnmixError::Shape(format!(
                "cube dimensions must be positive, got {rows}x{cols}x{bands}"
            )));
        }
        if values.len() != rows * cols * bands {
            return Err(UnmixError::Shape(format!(
                "{rows}x{cols}x{bands} cube needs {} values, got {}",
                rows * cols * bands,
                values.len()
            )));
        }
        if let Some(w) = &wavelengths {
            if w.len() != bands {
                return Err(UnmixError::Shape(format!(
                    "{} wavelengths for {bands} bands",
                    w.len()
                )));
            }
        }
        check_finite(&values)?;
        Ok(Self {
            rows,
            cols,
            bands,
            values,
            wavelengths,
        })
    }

    /// Builds a cube from a `B × P` matrix whose columns are pixel spectra.
    pub fn from_matrix(
        x: &Mat,
        rows: usize,
        cols: usize,
        wavelengths: Option<Vec<f64>>,
    ) -> Result<Self> {
        if x.ncols() != rows * cols {
            return Err(UnmixError::Shape(format!(
                "matrix has {} pixels, grid {rows}x{cols} has {}",
                x.ncols(),
                rows * cols
            )));
        }
        Self::new(rows, cols, x.nrows(), x.as_slice().to_vec(), wavelengths)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Number of pixels `P = rows · cols`.
    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.cols + j) * self.bands;
        &self.values[start..start + self.bands]
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}

/// `B × P` matrix view of a cube; column `p = i·cols + j` is pixel `(i, j)`.
pub fn flatten(cube: &HsiCube) -> Mat {
    Mat::from_column_slice(cube.bands, cube.pixels(), &cube.values)
}

/// Inverse of [`flatten`].
pub fn unflatten(x: &Mat, rows: usize, cols: usize) -> Result<HsiCube> {
    HsiCube::from_matrix(x, rows, cols, None)
}

/// Lays out a length-`P` row vector on the `rows × cols` pixel grid.
pub fn reshape_row(row: &[f64], rows: usize, cols: usize) -> Result<Grid> {
    if row.len() != rows * cols {
        return Err(UnmixError::Shape(format!(
            "row of length {} cannot be laid out on a {rows}x{cols} grid",
            row.len()
        )));
    }
    Grid::from_row_major(rows, cols, row.to_vec())
}

/// Inverse of [`reshape_row`].
pub fn flatten_grid(grid: &Grid) -> Vec<f64> {
    grid.as_slice().to_vec()
}

/// `M × P` abundance matrix together with the image grid it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceImage {
    rows: usize,
    cols: usize,
    values: Mat,
}

impl AbundanceImage {
    pub fn new(rows: usize, cols: usize, values: Mat) -> Result<Self> {
        if values.ncols() != rows * cols {
            return Err(UnmixError::Shape(format!(
                "abundance matrix has {} columns, grid {rows}x{cols} has {} pixels",
                values.ncols(),
                rows * cols
            )));
        }
        check_finite(values.as_slice())?;
        if let Some(v) = values.iter().find(|&&v| v < 0.0) {
            return Err(UnmixError::InvalidParameter(format!(
                "abundances must be nonnegative, found {v}"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn endmembers(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn into_values(self) -> Mat {
        self.values
    }

    /// Row `m` as an image.
    pub fn map(&self, m: usize) -> Grid {
        let row: Vec<f64> = self.values.row(m).iter().copied().collect();
        Grid::from_row_major(self.rows, self.cols, row).expect("dims checked at construction")
    }

    /// Every column sums to one within `tol`.
    pub fn satisfies_asc(&self, tol: f64) -> bool {
        self.values
            .column_iter()
            .all(|c| (c.sum() - 1.0).abs() <= tol)
    }
}

/// Candidate pure spectra with their band centres.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLibrary {
    pub names: Vec<String>,
    pub wavelengths: Vec<f64>,
    /// `B × Q`, one signature per column.
    pub signatures: Mat,
}

impl SpectralLibrary {
    pub fn new(names: Vec<String>, wavelengths: Vec<f64>, signatures: Mat) -> Result<Self> {
        if signatures.ncols() == 0 {
            return Err(UnmixError::Shape("library has no signatures".into()));
        }
        if names.len() != signatures.ncols() {
            return Err(UnmixError::Shape(format!(
                "{} names for {} signatures",
                names.len(),
                signatures.ncols()
            )));
        }
        if wavelengths.len() != signatures.nrows() {
            return Err(UnmixError::Shape(format!(
                "{} wavelengths for {} bands",
                wavelengths.len(),
                signatures.nrows()
            )));
        }
        check_finite(signatures.as_slice())?;
        for (c, col) in signatures.column_iter().enumerate() {
            if let Some((r, &v)) = col.iter().enumerate().find(|(_, &v)| v < 0.0) {
                return Err(UnmixError::Negative {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
        Ok(Self {
            names,
            wavelengths,
            signatures,
        })
    }

    pub fn bands(&self) -> usize {
        self.signatures.nrows()
    }

    pub fn len(&self) -> usize {
        self.signatures.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.ncols() == 0
    }

    /// `B × M` matrix of the selected columns, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Mat> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(UnmixError::InvalidParameter(format!(
                "signature index {bad} out of range for a library of {}",
                self.len()
            )));
        }
        Ok(self.signatures.select_columns(indices))
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(UnmixError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
