//! Candidate endmember pool `Φ` from repeated geometric extraction.
//!
//! Both extractors work in the `(M − 1)`-dimensional principal subspace of
//! the mean-removed data and return actual pixel spectra. VCA appends a
//! constant coordinate so the affine simplex becomes a cone in `M`
//! dimensions, then repeatedly picks the pixel with the largest projection
//! onto a random direction orthogonal to the already chosen vertices.
//! N-FINDR grows the simplex volume by single-vertex swaps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::hsi_data::Mat;
use crate::seeds::{derive_seed, rng};

const RANK_TOL: f64 = 1e-10;
const NFINDR_ATTEMPTS: usize = 10;
const NFINDR_MAX_SWEEPS: usize = 100;

/// Mean-removed data expressed in its leading principal directions.
#[derive(Debug, Clone)]
pub struct Subspace {
    pub mean: DVector<f64>,
    /// `B × d` orthonormal basis.
    pub basis: Mat,
    /// `d × P` coordinates of every pixel.
    pub coords: Mat,
    /// Singular values of the centred data along each basis vector.
    pub singular_values: Vec<f64>,
}

impl Subspace {
    /// Projects the centred data onto its `dims` leading principal
    /// directions and checks that each carries signal.
    pub fn principal(x: &Mat, dims: usize) -> Result<Self> {
        let (b, p) = x.shape();
        if dims == 0 || dims > b.min(p) {
            return Err(UnmixError::RankDeficient {
                needed: dims,
                found: b.min(p),
            });
        }
        let mean = x.column_mean();
        let mut centred = x.clone();
        for mut c in centred.column_iter_mut() {
            c -= &mean;
        }
        let cov = &centred * centred.transpose();
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let basis = eig.eigenvectors.select_columns(&order[..dims]);
        let coords = basis.transpose() * &centred;
        // singular values from the projections themselves, not from the
        // squared eigenvalues, so tiny directions are not inflated
        let singular_values: Vec<f64> = coords.row_iter().map(|r| r.norm()).collect();
        let top = singular_values[0];
        let found = singular_values
            .iter()
            .take_while(|&&s| top > 0.0 && s > RANK_TOL * top)
            .count();
        if found < dims {
            return Err(UnmixError::RankDeficient {
                needed: dims,
                found,
            });
        }
        Ok(Self {
            mean,
            basis,
            coords,
            singular_values,
        })
    }

    pub fn pixels(&self) -> usize {
        self.coords.ncols()
    }
}

/// Endmembers picked from the data, with the pixel each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// `B × M`.
    pub endmembers: Mat,
    pub indices: Vec<usize>,
    /// `|det|` after initialization and after each accepted swap
    /// (N-FINDR only).
    pub volume_trace: Vec<f64>,
}

fn check_request(x: &Mat, m: usize) -> Result<()> {
    if m < 2 {
        return Err(UnmixError::InvalidParameter(format!(
            "need at least 2 endmembers, got {m}"
        )));
    }
    if m > x.ncols() {
        return Err(UnmixError::InvalidParameter(format!(
            "cannot extract {m} endmembers from {} pixels",
            x.ncols()
        )));
    }
    Ok(())
}

/// Vertex component analysis.
pub fn vca(x: &Mat, m: usize, seed: u64) -> Result<Extraction> {
    check_request(x, m)?;
    let sub = Subspace::principal(x, m - 1)?;
    Ok(vca_in(x, &sub, m, seed))
}

fn vca_in(x: &Mat, sub: &Subspace, m: usize, seed: u64) -> Extraction {
    let p = sub.pixels();
    let d = m - 1;
    let c = sub
        .coords
        .column_iter()
        .map(|col| col.norm())
        .fold(0.0, f64::max);
    let y = Mat::from_fn(m, p, |r, k| if r < d { sub.coords[(r, k)] } else { c });

    let mut rng = rng(seed);
    let mut vertices = Mat::zeros(m, m);
    vertices[(m - 1, 0)] = 1.0;
    let mut indices: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        let w = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let pinv = vertices
            .clone()
            .pseudo_inverse(1e-12)
            .expect("pseudo-inverse of a finite matrix");
        let mut f = &w - &vertices * (pinv * &w);
        let norm = f.norm();
        if norm > 0.0 {
            f /= norm;
        }
        let proj = f.transpose() * &y;
        let mut best = None;
        for (k, v) in proj.iter().enumerate() {
            if indices.contains(&k) {
                continue;
            }
            if best.is_none_or(|(_, bv): (usize, f64)| v.abs() > bv) {
                best = Some((k, v.abs()));
            }
        }
        let (idx, _) = best.expect("m <= p leaves an unselected pixel");
        vertices.set_column(i, &y.column(idx));
        indices.push(idx);
    }
    Extraction {
        endmembers: x.select_columns(&indices),
        indices,
        volume_trace: Vec::new(),
    }
}

/// N-FINDR simplex volume maximization.
pub fn nfindr(x: &Mat, m: usize, seed: u64) -> Result<Extraction> {
    check_request(x, m)?;
    let sub = Subspace::principal(x, m - 1)?;
    nfindr_in(x, &sub, m, seed)
}

fn simplex_matrix(coords: &Mat, indices: &[usize]) -> Mat {
    let d = coords.nrows();
    Mat::from_fn(d + 1, indices.len(), |r, c| {
        if r == 0 {
            1.0
        } else {
            coords[(r - 1, indices[c])]
        }
    })
}

fn nfindr_in(x: &Mat, sub: &Subspace, m: usize, seed: u64) -> Result<Extraction> {
    let p = sub.pixels();
    let d = m - 1;
    let scale = sub
        .coords
        .column_iter()
        .map(|c| c.amax())
        .fold(0.0, f64::max);
    let vol_tol = 1e-12 * scale.powi(d as i32).max(f64::MIN_POSITIVE);

    let mut rng = rng(seed);
    let mut init = None;
    for _ in 0..NFINDR_ATTEMPTS {
        let indices = sample(&mut rng, p, m).into_vec();
        let vol = simplex_matrix(&sub.coords, &indices).determinant().abs();
        if vol > vol_tol {
            init = Some((indices, vol));
            break;
        }
    }
    let (mut indices, mut volume) = init.ok_or(UnmixError::DegenerateSimplex {
        attempts: NFINDR_ATTEMPTS,
    })?;
    let mut trace = vec![volume];

    let augmented = Mat::from_fn(
        m,
        p,
        |r, k| if r == 0 { 1.0 } else { sub.coords[(r - 1, k)] },
    );
    for _ in 0..NFINDR_MAX_SWEEPS {
        let mut changed = false;
        for i in 0..m {
            let e = simplex_matrix(&sub.coords, &indices);
            let det = e.determinant();
            let inv = match e.try_inverse() {
                Some(inv) => inv,
                None => break,
            };
            // replacing column i by v scales det by (E⁻¹ v)_i
            let cof = inv.row(i) * det;
            let vols = cof * &augmented;
            let mut best = (indices[i], volume);
            for (k, v) in vols.iter().enumerate() {
                if v.abs() > best.1 && !indices.contains(&k) {
                    best = (k, v.abs());
                }
            }
            if best.0 != indices[i] {
                // recompute exactly; accept only a strict increase
                let mut cand = indices.clone();
                cand[i] = best.0;
                let exact = simplex_matrix(&sub.coords, &cand).determinant().abs();
                if exact > volume {
                    indices = cand;
                    volume = exact;
                    trace.push(volume);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Extraction {
        endmembers: x.select_columns(&indices),
        indices,
        volume_trace: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extractor {
    Vca,
    Nfindr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTag {
    pub method: Extractor,
    pub run: usize,
    pub seed: u64,
    pub pixel: usize,
}

/// The `B × K` pool `Φ`, `K = 2·N·M`.
#[derive(Debug, Clone)]
pub struct CandidateMatrix {
    pub phi: Mat,
    pub provenance: Vec<CandidateTag>,
    pub runs: usize,
    pub endmembers: usize,
}

impl CandidateMatrix {
    pub fn k(&self) -> usize {
        self.phi.ncols()
    }
}

/// Runs VCA and N-FINDR `runs` times each with distinct derived seeds and
/// concatenates the results, VCA runs first.
pub fn build_candidates(x: &Mat, m: usize, runs: usize, seed: u64) -> Result<CandidateMatrix> {
    if runs == 0 {
        return Err(UnmixError::InvalidParameter(
            "need at least one extraction run".into(),
        ));
    }
    check_request(x, m)?;
    let sub = Subspace::principal(x, m - 1)?;

    let jobs: Vec<(Extractor, usize, u64)> = [Extractor::Vca, Extractor::Nfindr]
        .into_iter()
        .flat_map(|method| {
            let stream = match method {
                Extractor::Vca => 0,
                Extractor::Nfindr => 1,
            };
            (0..runs).map(move |r| (method, r, derive_seed(seed, 2 * r as u64 + stream)))
        })
        .collect();
    let results: Vec<Extraction> = jobs
        .par_iter()
        .map(|&(method, _, s)| match method {
            Extractor::Vca => Ok(vca_in(x, &sub, m, s)),
            Extractor::Nfindr => nfindr_in(x, &sub, m, s),
        })
        .collect::<Result<_>>()?;

    let k = 2 * runs * m;
    let mut phi = DMatrix::zeros(x.nrows(), k);
    let mut provenance = Vec::with_capacity(k);
    for (j, ((method, run, s), ext)) in jobs.iter().zip(&results).enumerate() {
        for (c, &pixel) in ext.indices.iter().enumerate() {
            let col = j * m + c;
            phi.set_column(col, &ext.endmembers.column(c));
            provenance.push(CandidateTag {
                method: *method,
                run: *run,
                seed: *s,
                pixel,
            });
        }
    }
    phi.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(CandidateMatrix {
        phi,
        provenance,
        runs,
        endmembers: m,
    })
}
