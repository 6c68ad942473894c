//! Synthetic benchmark scenes under the linear mixture model.
//!
//! Abundances are built from a block partition of the image: every block
//! gets a random pure endmember, each endmember indicator map is smoothed
//! with a box filter, and any pixel that is still purer than a threshold is
//! replaced by the uniform mixture. The clean cube is `A·S`; white Gaussian
//! noise is then scaled to hit the requested SNR exactly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::hsi_data::{flatten, AbundanceImage, HsiCube, Mat, SpectralLibrary};
use crate::seeds::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbundanceParams {
    pub rows: usize,
    pub cols: usize,
    pub endmembers: usize,
    pub block_size: usize,
    pub filter_radius: usize,
    pub purity_threshold: f64,
}

impl Default for AbundanceParams {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            endmembers: 5,
            block_size: 8,
            filter_radius: 4,
            purity_threshold: 0.8,
        }
    }
}

pub fn generate_abundances(params: &AbundanceParams, seed: u64) -> Result<AbundanceImage> {
    let AbundanceParams {
        rows,
        cols,
        endmembers: m,
        block_size: bs,
        filter_radius: r,
        purity_threshold: thr,
    } = *params;
    if m < 2 {
        return Err(UnmixError::InvalidParameter(format!(
            "need at least 2 endmembers, got {m}"
        )));
    }
    if bs == 0 || rows == 0 || cols == 0 || rows % bs != 0 || cols % bs != 0 {
        return Err(UnmixError::InvalidParameter(format!(
            "{rows}x{cols} grid is not divisible into {bs}x{bs} blocks"
        )));
    }
    if !(thr > 0.0 && thr < 1.0) {
        return Err(UnmixError::InvalidParameter(format!(
            "purity threshold must lie in (0, 1), got {thr}"
        )));
    }
    if 1.0 / (m as f64) > thr {
        return Err(UnmixError::InvalidParameter(format!(
            "uniform mixture 1/{m} already exceeds purity threshold {thr}"
        )));
    }

    let mut rng = rng(seed);
    let (brows, bcols) = (rows / bs, cols / bs);
    let labels: Vec<usize> = (0..brows * bcols).map(|_| rng.gen_range(0..m)).collect();
    let label_at = |i: usize, j: usize| labels[(i / bs) * bcols + j / bs];

    let p_count = rows * cols;
    let mut s = Mat::zeros(m, p_count);
    let win = ((2 * r + 1) * (2 * r + 1)) as f64;
    for i in 0..rows {
        for j in 0..cols {
            let p = i * cols + j;
            for di in -(r as isize)..=(r as isize) {
                let ii = (i as isize + di).clamp(0, rows as isize - 1) as usize;
                for dj in -(r as isize)..=(r as isize) {
                    let jj = (j as isize + dj).clamp(0, cols as isize - 1) as usize;
                    s[(label_at(ii, jj), p)] += 1.0;
                }
            }
            let mut col = s.column_mut(p);
            col /= win;
            let total = col.sum();
            col /= total;
            if col.max() > thr {
                col.fill(1.0 / m as f64);
            }
        }
    }
    AbundanceImage::new(rows, cols, s)
}

/// Noiseless linear mixing `A·S`.
pub fn mix(a_true: &Mat, s: &AbundanceImage) -> Result<HsiCube> {
    if a_true.ncols() != s.endmembers() {
        return Err(UnmixError::Shape(format!(
            "endmember matrix has {} columns, abundances have {} rows",
            a_true.ncols(),
            s.endmembers()
        )));
    }
    let x = a_true * s.values();
    HsiCube::from_matrix(&x, s.rows(), s.cols(), None)
}

/// Adds white Gaussian noise scaled so that `10·log10(‖X‖²/‖N‖²)` equals
/// `snr_db`. An infinite SNR returns the input unchanged.
pub fn add_noise(cube: &HsiCube, snr_db: f64, seed: u64) -> Result<HsiCube> {
    let (noisy, _) = noisy_with_noise(cube, snr_db, seed)?;
    Ok(noisy)
}

fn noisy_with_noise(cube: &HsiCube, snr_db: f64, seed: u64) -> Result<(HsiCube, Vec<f64>)> {
    let n = cube.values().len();
    if snr_db == f64::INFINITY {
        return Ok((cube.clone(), vec![0.0; n]));
    }
    if !snr_db.is_finite() {
        return Err(UnmixError::InvalidParameter(format!(
            "SNR must be finite or +inf, got {snr_db}"
        )));
    }
    let signal: f64 = cube.values().iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(UnmixError::ZeroSignal);
    }
    let mut rng = rng(seed);
    let mut noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let drawn: f64 = noise.iter().map(|v| v * v).sum();
    let target = signal / 10f64.powf(snr_db / 10.0);
    let scale = (target / drawn).sqrt();
    noise.iter_mut().for_each(|v| *v *= scale);
    let values = cube
        .values()
        .iter()
        .zip(&noise)
        .map(|(x, e)| x + e)
        .collect();
    let noisy = HsiCube::new(
        cube.rows(),
        cube.cols(),
        cube.bands(),
        values,
        cube.wavelengths().map(<[f64]>::to_vec),
    )?;
    Ok((noisy, noise))
}

/// `10·log10(‖clean‖² / ‖observed − clean‖²)`.
pub fn realized_snr_db(clean: &HsiCube, observed: &HsiCube) -> f64 {
    let signal: f64 = clean.values().iter().map(|v| v * v).sum();
    let noise: f64 = clean
        .values()
        .iter()
        .zip(observed.values())
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    10.0 * (signal / noise).log10()
}

/// Smooth nonnegative spectra made of 3–6 Gaussian absorption/reflection
/// features over a 0.4–2.5 µm range. Values stay within `[0, 1]`.
pub fn procedural_library(bands: usize, count: usize, seed: u64) -> Result<SpectralLibrary> {
    if bands == 0 || count == 0 {
        return Err(UnmixError::InvalidParameter(
            "procedural library needs at least one band and one signature".into(),
        ));
    }
    let mut rng = rng(seed);
    let wavelengths: Vec<f64> = (0..bands)
        .map(|b| {
            if bands == 1 {
                0.4
            } else {
                0.4 + 2.1 * b as f64 / (bands - 1) as f64
            }
        })
        .collect();
    let mut sig = Mat::zeros(bands, count);
    for q in 0..count {
        let base = rng.gen_range(0.05..0.25);
        let slope = rng.gen_range(-0.1..0.1);
        let bumps = rng.gen_range(3..=6);
        let features: Vec<(f64, f64, f64)> = (0..bumps)
            .map(|_| {
                (
                    rng.gen_range(0.1..0.6),
                    rng.gen_range(0.4..2.5),
                    rng.gen_range(0.04..0.3),
                )
            })
            .collect();
        for (b, &w) in wavelengths.iter().enumerate() {
            let mut v = base + slope * (w - 1.45) / 2.1;
            for &(amp, centre, width) in &features {
                v += amp * (-0.5 * ((w - centre) / width).powi(2)).exp();
            }
            sig[(b, q)] = v.max(0.0);
        }
        let peak = sig.column(q).max();
        if peak > 1.0 {
            sig.column_mut(q).unscale_mut(peak);
        }
    }
    let names = (0..count).map(|q| format!("synthetic_{q:02}")).collect();
    SpectralLibrary::new(names, wavelengths, sig)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub abundance: AbundanceParams,
    /// `None` leaves the scene noiseless.
    pub snr_db: Option<f64>,
    /// Library columns to use as endmembers; defaults to the first `M`.
    pub endmember_indices: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            abundance: AbundanceParams::default(),
            snr_db: Some(20.0),
            endmember_indices: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    /// Noisy observation, clamped at zero.
    pub cube: HsiCube,
    pub clean: HsiCube,
    pub a_true: Mat,
    pub s_true: AbundanceImage,
    /// `cube − clean` as a `B × P` matrix.
    pub noise: Mat,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl SynthScene {
    pub fn realized_snr_db(&self) -> f64 {
        realized_snr_db(&self.clean, &self.cube)
    }
}

pub fn generate_scene(library: &SpectralLibrary, cfg: &SynthConfig) -> Result<SynthScene> {
    let m = cfg.abundance.endmembers;
    let indices: Vec<usize> = match &cfg.endmember_indices {
        Some(ix) if ix.len() != m => {
            return Err(UnmixError::InvalidParameter(format!(
                "{} endmember indices given for M = {m}",
                ix.len()
            )))
        }
        Some(ix) => ix.clone(),
        None => (0..m).collect(),
    };
    if m > library.len() {
        return Err(UnmixError::InvalidParameter(format!(
            "M = {m} exceeds the {} available signatures",
            library.len()
        )));
    }
    let a_true = library.select(&indices)?;
    let s_true = generate_abundances(&cfg.abundance, derive_seed(cfg.seed, 1))?;
    let clean = mix(&a_true, &s_true)?;
    let clean = HsiCube::new(
        clean.rows(),
        clean.cols(),
        clean.bands(),
        clean.values().to_vec(),
        Some(library.wavelengths.clone()),
    )?;
    let cube = match cfg.snr_db {
        None => clean.clone(),
        Some(snr) => {
            let (noisy, _) = noisy_with_noise(&clean, snr, derive_seed(cfg.seed, 2))?;
            // reflectance is physically nonnegative
            let values = noisy.values().iter().map(|v| v.max(0.0)).collect();
            HsiCube::new(
                noisy.rows(),
                noisy.cols(),
                noisy.bands(),
                values,
                noisy.wavelengths().map(<[f64]>::to_vec),
            )?
        }
    };
    let noise = flatten(&cube) - flatten(&clean);
    Ok(SynthScene {
        cube,
        clean,
        a_true,
        s_true,
        noise,
        snr_db: cfg.snr_db,
        seed: cfg.seed,
    })
}
