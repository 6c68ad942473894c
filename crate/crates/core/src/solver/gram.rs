//! Update rules evaluated through `ΦᵀX` and `ΦᵀΦ`.
//!
//! Every factor in the loop has the form `U = Φ·P` for some small `P`, so
//! `UᵀX = Pᵀ(ΦᵀX)` and `UᵀU = Pᵀ(ΦᵀΦ)P`. Residual column norms follow from
//! `‖x_p − A v_p‖² = ‖x_p‖² − 2 (AᵀX)_p·v_p + v_pᵀ(AᵀA)v_p`. Nothing of size
//! `B × P` is formed after construction.

use nalgebra::DVector;

use super::rules::{multiplicative, scale_columns, SUpdateParams};
use crate::error::Result;
use crate::hsi_data::Mat;
use crate::tv_prox::htv_norm;

pub(super) struct GramCache {
    /// `ΦᵀX`, `K × P`.
    phi_t_x: Mat,
    /// `ΦᵀΦ`, `K × K`.
    phi_t_phi: Mat,
    /// `‖x_p‖²`.
    x_norm2: Vec<f64>,
    eps_div: f64,
}

impl GramCache {
    pub(super) fn new(x: &Mat, phi: &Mat, eps_div: f64) -> Self {
        Self {
            phi_t_x: phi.transpose() * x,
            phi_t_phi: phi.transpose() * phi,
            x_norm2: x.column_iter().map(|c| c.norm_squared()).collect(),
            eps_div,
        }
    }

    /// `‖x_p − A v_p‖²` for all `p`, given `AᵀX`, `AᵀA` and an offset added
    /// to every `‖x_p‖²` (the augmentation row).
    fn residual_norm2(&self, atx: &Mat, ata: &Mat, v: &Mat, x_offset: f64) -> Vec<f64> {
        let av = ata * v;
        (0..v.ncols())
            .map(|p| {
                let cross = atx.column(p).dot(&v.column(p));
                let quad = av.column(p).dot(&v.column(p));
                (self.x_norm2[p] + x_offset - 2.0 * cross + quad).max(0.0)
            })
            .collect()
    }

    fn weights(&self, r2: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            r2.len(),
            r2.iter().map(|&v| 1.0 / v.sqrt().max(self.eps_div)),
        )
    }

    /// Layer step with `U = Φ·prefix` (`prefix = None` means `U = Φ`).
    pub(super) fn update_w_layer(&self, prefix: Option<&Mat>, w: &Mat, v: &Mat) -> Mat {
        let (utx, utu);
        let (utx, utu) = match prefix {
            None => (&self.phi_t_x, &self.phi_t_phi),
            Some(pr) => {
                utx = pr.transpose() * &self.phi_t_x;
                utu = pr.transpose() * &self.phi_t_phi * pr;
                (&utx, &utu)
            }
        };
        let atx = w.transpose() * utx;
        let ata = w.transpose() * utu * w;
        let d = self.weights(&self.residual_norm2(&atx, &ata, v, 0.0));
        let vd = scale_columns(v, &d);
        let numer = utx * vd.transpose();
        let denom = utu * w * (v * vd.transpose());
        multiplicative(w, &numer, &denom, self.eps_div)
    }

    pub(super) fn update_s(
        &self,
        wall: &Mat,
        s: &Mat,
        l_aux: &Mat,
        delta: &Mat,
        params: SUpdateParams,
    ) -> Mat {
        let SUpdateParams {
            mu,
            lambda,
            eps_div,
            asc_delta,
        } = params;
        let d2 = asc_delta * asc_delta;
        let atx = (wall.transpose() * &self.phi_t_x).add_scalar(d2);
        let ata = (wall.transpose() * &self.phi_t_phi * wall).add_scalar(d2);
        let h = self.weights(&self.residual_norm2(&atx, &ata, s, d2));
        let numer = scale_columns(&atx, &h) + l_aux * mu;
        let ata_sh = &ata * scale_columns(s, &h);
        let denom = Mat::from_fn(s.nrows(), s.ncols(), |i, p| {
            let sv = s[(i, p)];
            ata_sh[(i, p)] + mu * sv + delta[(i, p)] + 0.5 * lambda / sv.max(eps_div).sqrt()
        });
        multiplicative(s, &numer, &denom, eps_div)
    }

    pub(super) fn cost(
        &self,
        wall: &Mat,
        s: &Mat,
        alpha: f64,
        lambda: f64,
        rows: usize,
        cols: usize,
    ) -> Result<f64> {
        let atx = wall.transpose() * &self.phi_t_x;
        let ata = wall.transpose() * &self.phi_t_phi * wall;
        let l21: f64 = self
            .residual_norm2(&atx, &ata, s, 0.0)
            .iter()
            .map(|v| v.sqrt())
            .sum();
        let sparsity: f64 = s.iter().map(|v| v.max(0.0).sqrt()).sum();
        Ok(0.5 * l21 + alpha * htv_norm(s, rows, cols)? + lambda * sparsity)
    }
}
