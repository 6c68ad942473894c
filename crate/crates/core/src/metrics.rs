//! Spectral angle and abundance error against a reference.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::hsi_data::Mat;

/// Largest `M` accepted by [`match_endmembers`].
pub const MAX_MATCH_ENDMEMBERS: usize = 12;

/// Spectral angle distance in radians.
pub fn sad(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(UnmixError::Shape(format!(
            "spectra of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(UnmixError::InvalidParameter(
            "spectral angle of a zero vector".into(),
        ));
    }
    // arccos of the normalized inner product, evaluated as
    // 2·atan2(‖â − b̂‖, ‖â + b̂‖) which stays accurate near 0 and π
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

fn sad_table(a_est: &Mat, a_ref: &Mat) -> Result<Vec<Vec<f64>>> {
    if a_est.shape() != a_ref.shape() {
        return Err(UnmixError::Shape(format!(
            "estimated endmembers {:?} vs reference {:?}",
            a_est.shape(),
            a_ref.shape()
        )));
    }
    a_ref
        .column_iter()
        .map(|r| {
            a_est
                .column_iter()
                .map(|e| sad(e.as_slice(), r.as_slice()))
                .collect()
        })
        .collect()
}

/// Minimum-total-SAD assignment. `perm[j]` is the estimated column matched
/// to reference column `j`.
pub fn match_endmembers(a_est: &Mat, a_ref: &Mat) -> Result<Vec<usize>> {
    let m = a_ref.ncols();
    if m > MAX_MATCH_ENDMEMBERS {
        return Err(UnmixError::InvalidParameter(format!(
            "matching supports at most {MAX_MATCH_ENDMEMBERS} endmembers, got {m}"
        )));
    }
    let cost = sad_table(a_est, a_ref)?;
    Ok(assign(&cost))
}

/// Exact assignment by dynamic programming over subsets of used columns.
fn assign(cost: &[Vec<f64>]) -> Vec<usize> {
    let m = cost.len();
    let full = 1usize << m;
    let mut best = vec![f64::INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    best[0] = 0.0;
    for mask in 0..full {
        if !best[mask].is_finite() {
            continue;
        }
        let j = mask.count_ones() as usize;
        if j == m {
            continue;
        }
        for e in 0..m {
            if mask & (1 << e) != 0 {
                continue;
            }
            let next = mask | (1 << e);
            let v = best[mask] + cost[j][e];
            if v < best[next] {
                best[next] = v;
                choice[next] = e;
            }
        }
    }
    let mut perm = vec![0; m];
    let mut mask = full - 1;
    for j in (0..m).rev() {
        let e = choice[mask];
        perm[j] = e;
        mask &= !(1 << e);
    }
    perm
}

/// Per-endmember abundance RMSE over pixels and its mean.
pub fn rmse(s_est: &Mat, s_ref: &Mat, perm: &[usize]) -> Result<(Vec<f64>, f64)> {
    if s_est.shape() != s_ref.shape() || perm.len() != s_ref.nrows() {
        return Err(UnmixError::Shape(format!(
            "estimated abundances {:?} vs reference {:?} with {} matches",
            s_est.shape(),
            s_ref.shape(),
            perm.len()
        )));
    }
    let p = s_ref.ncols() as f64;
    let per: Vec<f64> = perm
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let sq: f64 = s_ref
                .row(j)
                .iter()
                .zip(s_est.row(e).iter())
                .map(|(r, s)| (r - s) * (r - s))
                .sum();
            (sq / p).sqrt()
        })
        .collect();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `permutation[j]` is the estimated endmember matched to reference `j`.
    pub permutation: Vec<usize>,
    pub sad_per_endmember: Vec<f64>,
    pub sad_mean: f64,
    pub rmse_per_endmember: Vec<f64>,
    pub rmse_mean: f64,
}

pub fn evaluate(a_est: &Mat, s_est: &Mat, a_ref: &Mat, s_ref: &Mat) -> Result<MetricsReport> {
    let permutation = match_endmembers(a_est, a_ref)?;
    let sad_per_endmember = permutation
        .iter()
        .enumerate()
        .map(|(j, &e)| sad(a_est.column(e).as_slice(), a_ref.column(j).as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let sad_mean = sad_per_endmember.iter().sum::<f64>() / sad_per_endmember.len() as f64;
    let (rmse_per_endmember, rmse_mean) = rmse(s_est, s_ref, &permutation)?;
    Ok(MetricsReport {
        permutation,
        sad_per_endmember,
        sad_mean,
        rmse_per_endmember,
        rmse_mean,
    })
}
