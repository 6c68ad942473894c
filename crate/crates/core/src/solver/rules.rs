//! Single-variable update rules in their direct matrix form.
//!
//! These are the reference implementations of each step; the solver loop
//! evaluates the same expressions through cached Gram products.

use nalgebra::DVector;

use crate::error::{Result, UnmixError};
use crate::hsi_data::{reshape_row, Mat};
use crate::tv_prox::{fgp_denoise, htv_norm, TvDual, TvProxConfig};

fn same_shape(a: &Mat, b: &Mat, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(UnmixError::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Reweighting diagonal of the L2,1 loss: `1 / max(‖r_p‖₂, eps_div)` per
/// residual column.
pub fn row_weights(residual: &Mat, eps_div: f64) -> DVector<f64> {
    DVector::from_iterator(
        residual.ncols(),
        residual.column_iter().map(|c| 1.0 / c.norm().max(eps_div)),
    )
}

/// Multiplies column `p` of `m` by `d[p]`.
pub(crate) fn scale_columns(m: &Mat, d: &DVector<f64>) -> Mat {
    let mut out = m.clone();
    for (mut c, &w) in out.column_iter_mut().zip(d.iter()) {
        c *= w;
    }
    out
}

/// One multiplicative step for layer weight `W_l` of the L2,1 model
/// `X ≈ U·W_l·V`, with the weights `D` taken from the current residual.
pub fn update_w_layer(x: &Mat, u: &Mat, v: &Mat, w: &Mat, eps_div: f64) -> Result<Mat> {
    if u.nrows() != x.nrows()
        || v.ncols() != x.ncols()
        || u.ncols() != w.nrows()
        || w.ncols() != v.nrows()
    {
        return Err(UnmixError::Shape(format!(
            "X {:?} ≈ U {:?} · W {:?} · V {:?}",
            x.shape(),
            u.shape(),
            w.shape(),
            v.shape()
        )));
    }
    let residual = x - u * w * v;
    let d = row_weights(&residual, eps_div);
    let vd = scale_columns(v, &d);
    let numer = u.transpose() * x * vd.transpose();
    let denom = u.transpose() * u * w * (v * vd.transpose());
    Ok(multiplicative(w, &numer, &denom, eps_div))
}

/// `w ⊙ max(numer, 0) ⊘ max(denom + eps, eps)`.
pub(crate) fn multiplicative(w: &Mat, numer: &Mat, denom: &Mat, eps_div: f64) -> Mat {
    w.zip_zip_map(numer, denom, |wv, n, d| {
        wv * n.max(0.0) / (d + eps_div).max(eps_div)
    })
}

/// Appends a constant row `δ·1` (sum-to-one augmentation).
pub(crate) fn augment(m: &Mat, delta: f64) -> Mat {
    let r = m.nrows();
    m.clone().insert_row(r, delta)
}

/// Inputs of the abundance step besides `X`, `A` and `S`.
#[derive(Debug, Clone, Copy)]
pub struct SUpdateParams {
    pub mu: f64,
    pub lambda: f64,
    pub eps_div: f64,
    /// Sum-to-one augmentation weight; 0 disables it.
    pub asc_delta: f64,
}

/// One multiplicative step for the abundances with L2,1 reweighting `H`,
/// the L1/2 sparsity term and the coupling to the auxiliary matrix.
pub fn update_s(
    x: &Mat,
    a: &Mat,
    s: &Mat,
    l_aux: &Mat,
    delta: &Mat,
    params: SUpdateParams,
) -> Result<Mat> {
    if a.nrows() != x.nrows() || a.ncols() != s.nrows() || s.ncols() != x.ncols() {
        return Err(UnmixError::Shape(format!(
            "X {:?} ≈ A {:?} · S {:?}",
            x.shape(),
            a.shape(),
            s.shape()
        )));
    }
    same_shape(s, l_aux, "S vs L")?;
    same_shape(s, delta, "S vs Δ")?;
    let SUpdateParams {
        mu,
        lambda,
        eps_div,
        asc_delta,
    } = params;
    let (x, a) = if asc_delta > 0.0 {
        (augment(x, asc_delta), augment(a, asc_delta))
    } else {
        (x.clone(), a.clone())
    };
    let h = row_weights(&(&x - &a * s), eps_div);
    let numer = a.transpose() * scale_columns(&x, &h) + l_aux * mu;
    let ata_sh = a.transpose() * &a * scale_columns(s, &h);
    let denom = Mat::from_fn(s.nrows(), s.ncols(), |i, p| {
        let sv = s[(i, p)];
        ata_sh[(i, p)] + mu * sv + delta[(i, p)] + 0.5 * lambda / sv.max(eps_div).sqrt()
    });
    Ok(multiplicative(s, &numer, &denom, eps_div))
}

/// Auxiliary-matrix step: each row of `S + Δ/μ` is denoised on the image
/// grid by the TV prox with weight `α/μ`, kept nonnegative.
///
/// `duals` holds one warm-start state per row and is updated in place.
#[allow(clippy::too_many_arguments)]
pub fn update_l(
    s: &Mat,
    delta: &Mat,
    mu: f64,
    alpha: f64,
    rows: usize,
    cols: usize,
    inner_iters: usize,
    duals: &mut [TvDual],
) -> Result<Mat> {
    same_shape(s, delta, "S vs Δ")?;
    if !(mu > 0.0) {
        return Err(UnmixError::InvalidParameter(format!(
            "penalty μ must be positive, got {mu}"
        )));
    }
    if duals.len() != s.nrows() {
        return Err(UnmixError::Shape(format!(
            "{} dual states for {} abundance rows",
            duals.len(),
            s.nrows()
        )));
    }
    let target = s + delta / mu;
    let cfg = TvProxConfig {
        weight: alpha / mu,
        inner_iters,
        box_lower: 0.0,
    };
    let mut l = Mat::zeros(s.nrows(), s.ncols());
    for (j, dual) in duals.iter_mut().enumerate() {
        let row: Vec<f64> = target.row(j).iter().copied().collect();
        let grid = reshape_row(&row, rows, cols)?;
        let out = fgp_denoise(&grid, &cfg, Some(dual))?;
        *dual = out.dual;
        for (p, v) in out.grid.as_slice().iter().enumerate() {
            l[(j, p)] = *v;
        }
    }
    Ok(l)
}

/// `Δ + μ(S − L)`.
pub fn update_multiplier(delta: &Mat, mu: f64, s: &Mat, l_aux: &Mat) -> Result<Mat> {
    same_shape(s, l_aux, "S vs L")?;
    same_shape(s, delta, "S vs Δ")?;
    Ok(delta + (s - l_aux) * mu)
}

/// `min(ρμ, μ_max)`.
pub fn update_mu(mu: f64, rho: f64, mu_max: f64) -> f64 {
    (rho * mu).min(mu_max)
}

/// `Φ·W_1⋯W_L`, multiplied left to right over the weights first.
pub fn endmembers(phi: &Mat, w_stack: &[Mat]) -> Mat {
    phi * weight_product(w_stack)
}

pub(crate) fn weight_product(w_stack: &[Mat]) -> Mat {
    let mut it = w_stack.iter();
    let first = it.next().expect("at least one layer").clone();
    it.fold(first, |acc, w| acc * w)
}

/// `½‖X − A·S‖₂,₁ + α·HTV(S) + λ·Σ S^{1/2}` with `A = Φ·W_1⋯W_L`.
#[allow(clippy::too_many_arguments)]
pub fn cost(
    x: &Mat,
    phi: &Mat,
    w_stack: &[Mat],
    s: &Mat,
    alpha: f64,
    lambda: f64,
    rows: usize,
    cols: usize,
) -> Result<f64> {
    if w_stack.is_empty() {
        return Err(UnmixError::Shape("empty weight stack".into()));
    }
    let a = endmembers(phi, w_stack);
    if a.ncols() != s.nrows() || s.ncols() != x.ncols() || a.nrows() != x.nrows() {
        return Err(UnmixError::Shape(format!(
            "X {:?} ≈ A {:?} · S {:?}",
            x.shape(),
            a.shape(),
            s.shape()
        )));
    }
    let residual = x - &a * s;
    let l21: f64 = residual.column_iter().map(|c| c.norm()).sum();
    let sparsity: f64 = s.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok(0.5 * l21 + alpha * htv_norm(s, rows, cols)? + lambda * sparsity)
}
