//! Static channel-charting baseline: classical multidimensional scaling of
//! CSI feature distances, ignoring temporal context.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ndkernel::{dot, Matrix, Rng};

/// Largest point count for which the dense `N × N` Gram matrix is formed.
pub const MAX_MDS_POINTS: usize = 2000;

const POWER_MAX_ITERS: usize = 5000;
const POWER_TOL: f64 = 1e-10;

/// Chooses at most `limit` samples: every validation sample first (capped at
/// `limit` by a seeded draw), then a seeded draw of training samples to fill
/// the rest. Both returned lists are sorted.
pub fn select_subsample(train: &[usize], val: &[usize], limit: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = Rng::derive(seed, 0xba5e);
    let mut pick = |from: &[usize], n: usize| -> Vec<usize> {
        let mut v = from.to_vec();
        if v.len() > n {
            rng.shuffle(&mut v);
            v.truncate(n);
        }
        v.sort_unstable();
        v
    };
    let val_kept = pick(val, limit);
    let train_kept = pick(train, limit - val_kept.len());
    (train_kept, val_kept)
}

/// Top eigenpairs of a symmetric matrix by power iteration with deflation.
/// Returns `(eigenvalue, unit eigenvector)` in descending order.
pub fn top_eigenpairs(b: &Matrix, count: usize, seed: u64) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = b.rows();
    if b.cols() != n {
        return Err(crate::error::shape_err("top_eigenpairs", "square matrix", b.shape_str()));
    }
    let mut rng = Rng::derive(seed, 0xe16);
    let mut found: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
    let apply = |v: &[f64], found: &[(f64, Vec<f64>)]| -> Vec<f64> {
        let mut y: Vec<f64> = (0..n).into_par_iter().map(|i| dot(b.row(i), v)).collect();
        for (lam, u) in found {
            let c = lam * dot(u, v);
            y.iter_mut().zip(u).for_each(|(yi, ui)| *yi -= c * ui);
        }
        y
    };
    let normalize = |v: &mut Vec<f64>| {
        let s = dot(v, v).sqrt();
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
        }
        s
    };
    for _ in 0..count {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..POWER_MAX_ITERS {
            let mut w = apply(&v, &found);
            lambda = dot(&v, &w);
            let norm = normalize(&mut w);
            if norm == 0.0 {
                break;
            }
            // Orient consistently so the convergence test is sign-free.
            if dot(&w, &v) < 0.0 {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            let change: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            if change < POWER_TOL {
                break;
            }
        }
        let av = apply(&v, &found);
        lambda = lambda.max(dot(&v, &av));
        found.push((lambda, v));
    }
    Ok(found)
}

/// Classical MDS of the rows of `features` into two dimensions.
pub fn classical_mds(features: &Matrix, seed: u64) -> Result<Matrix> {
    let n = features.rows();
    if n < 3 {
        return Err(Error::InsufficientData(format!("MDS needs at least 3 points, got {n}")));
    }
    if n > MAX_MDS_POINTS {
        return Err(Error::Config(format!(
            "MDS limited to {MAX_MDS_POINTS} points, got {n}; subsample first"
        )));
    }
    // Squared distances, then double centring B = −½·J·D²·J.
    let mut b = Matrix::zeros(n, n);
    b.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = features.row(i);
        for (j, out) in row.iter_mut().enumerate() {
            let xj = features.row(j);
            *out = xi.iter().zip(xj).map(|(a, c)| (a - c) * (a - c)).sum();
        }
    });
    let row_mean: Vec<f64> = b.iter_rows().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    b.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = -0.5 * (*v - row_mean[i] - row_mean[j] + grand);
        }
    });
    let pairs = top_eigenpairs(&b, 2, seed)?;
    if pairs.iter().any(|(l, _)| !(*l > 0.0)) {
        return Err(Error::DegenerateGeometry(
            "CSI distance matrix has fewer than two positive eigenvalues".into(),
        ));
    }
    Ok(Matrix::from_fn(n, 2, |i, c| pairs[c].1[i] * pairs[c].0.sqrt()))
}
