//! L1/2-sparsity-constrained NMF, the reference comparator.
//!
//! Frobenius loss `½‖X − AS‖²_F + λ Σ S^{1/2}` minimized by alternating
//! multiplicative steps on a free (nonnegative) `A` and on `S`. No candidate
//! pool and no spatial prior, so it isolates what the other terms buy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::hsi_data::Mat;
use crate::seeds::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub endmembers: usize,
    pub lambda: f64,
    pub t_max: usize,
    pub eps_div: f64,
    pub seed: u64,
    /// Weight of the sum-to-one row appended in the `S` step; 0 disables.
    pub asc_delta: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            endmembers: 5,
            lambda: 0.1,
            t_max: 500,
            eps_div: 1e-12,
            seed: 0,
            asc_delta: 20.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(UnmixError::InvalidParameter(m));
        if self.endmembers == 0 {
            return bad("endmembers must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !(self.eps_div > 0.0 && self.eps_div.is_finite()) {
            return bad(format!(
                "eps_div must be finite and > 0, got {}",
                self.eps_div
            ));
        }
        if !(self.asc_delta >= 0.0 && self.asc_delta.is_finite()) {
            return bad(format!(
                "asc_delta must be finite and >= 0, got {}",
                self.asc_delta
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub a: Mat,
    pub s: Mat,
    /// Objective after each iteration.
    pub cost_trace: Vec<f64>,
}

/// `½‖X − AS‖²_F + λ Σ √S`.
pub fn baseline_cost(x: &Mat, a: &Mat, s: &Mat, lambda: f64) -> f64 {
    let fit = (x - a * s).norm_squared();
    0.5 * fit + lambda * s.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>()
}

/// `A ← A ⊙ (XSᵀ) ⊘ (ASSᵀ + eps)`.
pub fn update_a(x: &Mat, a: &Mat, s: &Mat, eps_div: f64) -> Mat {
    let numer = x * s.transpose();
    let denom = a * (s * s.transpose());
    a.zip_zip_map(&numer, &denom, |v, n, d| v * n.max(0.0) / (d + eps_div))
}

/// `S ← S ⊙ (ÃᵀX̃) ⊘ (ÃᵀÃS + (λ/2)·max(S, eps)^{-1/2} + eps)`, where the
/// tilde marks the optional `δ·1` row appended to `X` and `A`.
pub fn update_s(x: &Mat, a: &Mat, s: &Mat, lambda: f64, eps_div: f64, asc_delta: f64) -> Mat {
    let d2 = asc_delta * asc_delta;
    let numer = (a.transpose() * x).add_scalar(d2);
    let denom = (a.transpose() * a).add_scalar(d2) * s;
    Mat::from_fn(s.nrows(), s.ncols(), |i, p| {
        let sv = s[(i, p)];
        let den = denom[(i, p)] + 0.5 * lambda / sv.max(eps_div).sqrt() + eps_div;
        sv * numer[(i, p)].max(0.0) / den
    })
}

fn check_state(m: &Mat, iteration: usize, matrix: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(UnmixError::NonFiniteState { iteration, matrix })
    }
}

/// Runs `t_max` alternating steps from a uniform `(0, 1]` start.
pub fn l12nmf_solve(x: &Mat, cfg: &BaselineConfig) -> Result<BaselineResult> {
    cfg.validate()?;
    crate::hsi_data::check_finite(x.as_slice())?;
    if x.iter().any(|&v| v < 0.0) {
        return Err(UnmixError::InvalidParameter(
            "data must be nonnegative".into(),
        ));
    }
    let (b, p, m) = (x.nrows(), x.ncols(), cfg.endmembers);
    let mut g = rng(cfg.seed);
    let mut draw = move || 1.0 - g.gen::<f64>();
    let mut a = Mat::from_fn(b, m, |_, _| draw());
    let mut s = Mat::from_fn(m, p, |_, _| draw());
    let mut cost_trace = Vec::with_capacity(cfg.t_max);
    for it in 1..=cfg.t_max {
        a = update_a(x, &a, &s, cfg.eps_div);
        check_state(&a, it, "A")?;
        s = update_s(x, &a, &s, cfg.lambda, cfg.eps_div, cfg.asc_delta);
        check_state(&s, it, "S")?;
        cost_trace.push(baseline_cost(x, &a, &s, cfg.lambda));
    }
    if cfg.asc_delta > 0.0 {
        for mut c in s.column_iter_mut() {
            let total = c.sum();
            if total > 0.0 {
                c /= total;
            }
        }
    }
    Ok(BaselineResult { a, s, cost_trace })
}
