//! Anisotropic total variation and its proximal operator.
//!
//! The prox problem solved here is
//!
//! ```text
//! min_Z  ‖Z − B‖_F² + 2·w·TV(Z)    s.t.  Z ≥ lower
//! ```
//!
//! with `TV` the anisotropic sum of absolute vertical and horizontal
//! forward differences (no wraparound). It is solved on the dual by fast
//! gradient projection: the dual pair `(p, q)` lives on the vertical and
//! horizontal edges, is confined to `[-1, 1]`, and the primal iterate is
//! recovered as `clip(B − w·div(p, q))`.

use crate::error::{Result, UnmixError};

/// A real-valued image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(UnmixError::Shape(format!(
                "grid dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(UnmixError::Shape(format!(
                "{rows}x{cols} grid needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_fn(rows, cols, |_, _| value)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn frobenius_distance(&self, other: &Grid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Anisotropic total variation of a grid.
pub fn tv_aniso(g: &Grid) -> f64 {
    tv_slice(g.rows, g.cols, &g.data)
}

fn tv_slice(rows: usize, cols: usize, z: &[f64]) -> f64 {
    let split = rows.saturating_sub(1) * cols;
    let vertical: f64 = z[..split]
        .iter()
        .zip(&z[cols.min(z.len())..])
        .map(|(a, b)| (a - b).abs())
        .sum();
    let horizontal: f64 = z
        .chunks_exact(cols)
        .map(|r| r.windows(2).map(|w| (w[0] - w[1]).abs()).sum::<f64>())
        .sum();
    vertical + horizontal
}

/// Sum of the TV of each abundance row laid out on the `rows × cols` grid.
pub fn htv_norm(s: &crate::hsi_data::Mat, rows: usize, cols: usize) -> Result<f64> {
    if s.ncols() != rows * cols {
        return Err(UnmixError::Shape(format!(
            "{} pixels do not fit a {rows}x{cols} grid",
            s.ncols()
        )));
    }
    Ok(s.row_iter()
        .map(|row| {
            tv_aniso(&Grid {
                rows,
                cols,
                data: row.iter().copied().collect(),
            })
        })
        .sum())
}

/// Value of the prox objective `‖z − b‖² + 2·weight·TV(z)`.
pub fn prox_objective(z: &Grid, b: &Grid, weight: f64) -> f64 {
    objective_slice(z.rows, z.cols, &z.data, &b.data, weight)
}

fn objective_slice(rows: usize, cols: usize, z: &[f64], b: &[f64], weight: f64) -> f64 {
    let fid: f64 = z.iter().zip(b).map(|(a, c)| (a - c) * (a - c)).sum();
    fid + 2.0 * weight * tv_slice(rows, cols, z)
}

/// Dual variables of the prox problem, kept for warm starts.
#[derive(Debug, Clone, PartialEq)]
pub struct TvDual {
    rows: usize,
    cols: usize,
    /// Vertical edges, `(rows − 1) × cols`.
    p: Vec<f64>,
    /// Horizontal edges, `rows × (cols − 1)`.
    q: Vec<f64>,
}

impl TvDual {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            p: vec![0.0; (rows - 1) * cols],
            q: vec![0.0; rows * (cols - 1)],
        }
    }

    fn fits(&self, rows: usize, cols: usize) -> bool {
        self.rows == rows && self.cols == cols
    }
}

#[derive(Debug, Clone)]
pub struct TvProxConfig {
    pub weight: f64,
    pub inner_iters: usize,
    /// `f64::NEG_INFINITY` disables the box.
    pub box_lower: f64,
}

impl Default for TvProxConfig {
    fn default() -> Self {
        Self {
            weight: 0.0,
            inner_iters: 20,
            box_lower: f64::NEG_INFINITY,
        }
    }
}

impl TvProxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(UnmixError::InvalidParameter(format!(
                "TV weight must be finite and nonnegative, got {}",
                self.weight
            )));
        }
        if self.inner_iters == 0 {
            return Err(UnmixError::InvalidParameter(
                "inner_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`fgp_denoise`].
#[derive(Debug, Clone)]
pub struct TvProxOutput {
    pub grid: Grid,
    pub dual: TvDual,
    pub objective: f64,
}

/// Negative divergence `div(p, q)` with the adjoint boundary convention of
/// the forward differences: `(Lᵀ … )` pairs with `grad(z) = (z_{i,j} −
/// z_{i+1,j}, z_{i,j} − z_{i,j+1})`.
fn apply_div(rows: usize, cols: usize, p: &[f64], q: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let split = rows.saturating_sub(1) * cols;
    for (k, &v) in p[..split].iter().enumerate() {
        out[k] += v;
        out[k + cols] -= v;
    }
    if cols > 1 {
        for (row, qr) in out.chunks_exact_mut(cols).zip(q.chunks_exact(cols - 1)) {
            for (j, &v) in qr.iter().enumerate() {
                row[j] += v;
                row[j + 1] -= v;
            }
        }
    }
}

/// TV prox by monotone fast gradient projection on the dual.
///
/// The returned grid is the best primal iterate seen, starting from
/// `clip(b)`, so the objective never exceeds that of `clip(b)` and never
/// increases when `inner_iters` grows.
pub fn fgp_denoise(b: &Grid, cfg: &TvProxConfig, warm: Option<&TvDual>) -> Result<TvProxOutput> {
    cfg.validate()?;
    let (rows, cols) = (b.rows, b.cols);
    let n = rows * cols;
    let lower = cfg.box_lower;
    let clip = |v: f64| if v < lower { lower } else { v };

    let mut best = Grid {
        rows,
        cols,
        data: b.data.iter().map(|&v| clip(v)).collect(),
    };
    let mut best_obj = prox_objective(&best, b, cfg.weight);
    let start_dual = match warm {
        Some(d) if d.fits(rows, cols) => d.clone(),
        _ => TvDual::zeros(rows, cols),
    };
    if cfg.weight == 0.0 || n == 1 {
        return Ok(TvProxOutput {
            grid: best,
            dual: start_dual,
            objective: best_obj,
        });
    }

    let w = cfg.weight;
    let step = 1.0 / (8.0 * w);
    let mut p_old = start_dual.p.clone();
    let mut q_old = start_dual.q.clone();
    let mut r = start_dual.p;
    let mut s = start_dual.q;
    let mut p_new = vec![0.0; p_old.len()];
    let mut q_new = vec![0.0; q_old.len()];
    let mut div = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = 1.0f64;

    let primal = |p: &[f64], q: &[f64], div: &mut [f64], z: &mut [f64]| {
        apply_div(rows, cols, p, q, div);
        for k in 0..n {
            z[k] = clip(b.data[k] - w * div[k]);
        }
    };

    for _ in 0..cfg.inner_iters {
        primal(&r, &s, &mut div, &mut z);
        // ascent step on the dual, gradient is grad(z), then project to [-1, 1]
        let split = rows.saturating_sub(1) * cols;
        for (k, pn) in p_new.iter_mut().enumerate() {
            *pn = (r[k] + step * (z[k] - z[k + cols])).clamp(-1.0, 1.0);
        }
        debug_assert_eq!(p_new.len(), split);
        if cols > 1 {
            for ((qn, sr), zr) in q_new
                .chunks_exact_mut(cols - 1)
                .zip(s.chunks_exact(cols - 1))
                .zip(z.chunks_exact(cols))
            {
                for j in 0..cols - 1 {
                    qn[j] = (sr[j] + step * (zr[j] - zr[j + 1])).clamp(-1.0, 1.0);
                }
            }
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        for k in 0..p_new.len() {
            r[k] = p_new[k] + beta * (p_new[k] - p_old[k]);
        }
        for k in 0..q_new.len() {
            s[k] = q_new[k] + beta * (q_new[k] - q_old[k]);
        }
        std::mem::swap(&mut p_old, &mut p_new);
        std::mem::swap(&mut q_old, &mut q_new);
        t = t_next;

        primal(&p_old, &q_old, &mut div, &mut z);
        let obj = objective_slice(rows, cols, &z, &b.data, w);
        if obj < best_obj {
            best_obj = obj;
            best.data.copy_from_slice(&z);
        }
    }

    Ok(TvProxOutput {
        grid: best,
        dual: TvDual {
            rows,
            cols,
            p: p_old,
            q: q_old,
        },
        objective: best_obj,
    })
}
