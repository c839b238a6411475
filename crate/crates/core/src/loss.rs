//! Training objective: reconstruction MSE plus a weighted pairwise-distance
//! (topology) mismatch between true positions and chart coordinates.

use crate::error::{shape_err, Error, Result};
use crate::ndkernel::Matrix;

/// Default weight of the topology term.
pub const DEFAULT_ALPHA: f64 = 0.75;

/// Loss values of one evaluation; `total == recon + alpha·topo`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub topo: f64,
    pub total: f64,
    pub alpha: f64,
}

impl LossBreakdown {
    pub fn new(recon: f64, topo: f64, alpha: f64) -> Self {
        Self {
            recon,
            topo,
            total: recon + alpha * topo,
            alpha,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.recon.is_finite() && self.topo.is_finite() && self.total.is_finite()
    }
}

/// Loss values plus gradients routed to both model heads.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub breakdown: LossBreakdown,
    /// `B × 2`.
    pub d_embeddings: Matrix,
    /// `B` matrices `L × F`.
    pub d_reconstructions: Vec<Matrix>,
}

/// Mean over ordered pairs `i ≠ j` of `(‖pᵢ − pⱼ‖ − ‖eᵢ − eⱼ‖)²` and its
/// gradient with respect to `E`. A pair whose embeddings coincide
/// contributes no gradient.
pub fn topology_loss(positions: &Matrix, embeddings: &Matrix) -> Result<(f64, Matrix)> {
    if positions.shape() != embeddings.shape() || positions.cols() != 2 {
        return Err(shape_err("topology_loss", positions.shape_str(), embeddings.shape_str()));
    }
    let b = positions.rows();
    if b < 2 {
        return Err(Error::InsufficientData(format!("topology loss needs at least 2 samples, got {b}")));
    }
    let norm = 1.0 / (b * (b - 1)) as f64;
    let mut sum = 0.0;
    let mut grad = Matrix::zeros(b, 2);
    for i in 0..b {
        let (pi, ei) = (positions.row(i), embeddings.row(i));
        for j in i + 1..b {
            let (pj, ej) = (positions.row(j), embeddings.row(j));
            let dp = (pi[0] - pj[0]).hypot(pi[1] - pj[1]);
            let (dx, dy) = (ei[0] - ej[0], ei[1] - ej[1]);
            let de = dx.hypot(dy);
            let r = de - dp;
            // (i, j) and (j, i) contribute equally
            sum += 2.0 * r * r;
            if de > 0.0 {
                let s = 4.0 * norm * r / de;
                let (gx, gy) = (s * dx, s * dy);
                let gi = grad.row_mut(i);
                gi[0] += gx;
                gi[1] += gy;
                let gj = grad.row_mut(j);
                gj[0] -= gx;
                gj[1] -= gy;
            }
        }
    }
    Ok((sum * norm, grad))
}

/// Mean squared error over all `B·L·F` entries and its gradient
/// `2(X̂ − X)/(B·L·F)` with respect to `X̂`.
pub fn reconstruction_loss(targets: &[Matrix], reconstructions: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
    if targets.len() != reconstructions.len() {
        return Err(shape_err(
            "reconstruction_loss",
            format!("{} targets", targets.len()),
            format!("{} reconstructions", reconstructions.len()),
        ));
    }
    for (x, y) in targets.iter().zip(reconstructions) {
        if x.shape() != y.shape() {
            return Err(shape_err("reconstruction_loss", x.shape_str(), y.shape_str()));
        }
    }
    let count: usize = targets.iter().map(|x| x.as_slice().len()).sum();
    if count == 0 {
        return Err(Error::InsufficientData("reconstruction loss over an empty batch".into()));
    }
    let inv = 1.0 / count as f64;
    let mut sum = 0.0;
    let grads = targets
        .iter()
        .zip(reconstructions)
        .map(|(x, y)| {
            let mut g = y.clone();
            for (gv, &xv) in g.as_mut_slice().iter_mut().zip(x.as_slice()) {
                let r = *gv - xv;
                sum += r * r;
                *gv = 2.0 * r * inv;
            }
            g
        })
        .collect();
    Ok((sum * inv, grads))
}

/// `recon + alpha·topo` with gradients for both heads.
pub fn total_loss(
    targets: &[Matrix],
    reconstructions: &[Matrix],
    positions: &Matrix,
    embeddings: &Matrix,
    alpha: f64,
) -> Result<LossGrad> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be non-negative, got {alpha}")));
    }
    let (recon, d_reconstructions) = reconstruction_loss(targets, reconstructions)?;
    let (topo, d_topo) = topology_loss(positions, embeddings)?;
    Ok(LossGrad {
        breakdown: LossBreakdown::new(recon, topo, alpha),
        d_embeddings: d_topo.scale(alpha),
        d_reconstructions,
    })
}
