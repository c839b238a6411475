//! Chart quality: continuity, trustworthiness, Kolmogorov–Smirnov distance
//! between pairwise-distance distributions, and positioning error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::ChartEmbedding;
use crate::error::{shape_err, Error, Result};
use crate::ndkernel::Matrix;

/// Normalized distances closer than this are treated as one value by the
/// KS merge walk, so a global rescale cannot split ties by an ulp.
pub const KS_TIE_TOL: f64 = 1e-12;

pub const KL_BINS: usize = 64;

/// `max(1, ⌊0.05·N⌋)`.
pub fn default_k(n: usize) -> usize {
    (n / 20).max(1)
}

fn dist(m: &Matrix, i: usize, j: usize) -> f64 {
    let dx = m.get(i, 0) - m.get(j, 0);
    let dy = m.get(i, 1) - m.get(j, 1);
    (dx * dx + dy * dy).sqrt()
}

fn check_pair(op: &'static str, p: &Matrix, e: &Matrix) -> Result<()> {
    if p.cols() != 2 || e.cols() != 2 || p.rows() != e.rows() {
        return Err(shape_err(op, p.shape_str(), e.shape_str()));
    }
    Ok(())
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::Config(format!("neighbourhood size k={k} must satisfy 1 <= k < N={n}")));
    }
    if 2 * n <= 3 * k + 1 {
        return Err(Error::Config(format!(
            "neighbourhood size k={k} too large for N={n}: the normaliser 2N - 3k - 1 must be positive"
        )));
    }
    Ok(())
}

/// Rank (1 = nearest) of every other point as seen from `i`, ties broken by
/// ascending index. `ranks[i]` is left at 0.
fn ranks_from(m: &Matrix, i: usize) -> Vec<usize> {
    let n = m.rows();
    let d: Vec<f64> = (0..n).map(|j| dist(m, i, j)).collect();
    let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; n];
    for (r, &j) in order.iter().enumerate() {
        ranks[j] = r + 1;
    }
    ranks
}

/// Continuity and trustworthiness from one pass over all rank lists.
pub fn continuity_trustworthiness(p: &Matrix, e: &Matrix, k: usize) -> Result<(f64, f64)> {
    check_pair("continuity_trustworthiness", p, e)?;
    let n = p.rows();
    check_k(n, k)?;
    let per_point: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let rp = ranks_from(p, i);
            let re = ranks_from(e, i);
            let (mut missing, mut intruding) = (0, 0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let in_p = rp[j] <= k;
                let in_e = re[j] <= k;
                if in_p && !in_e {
                    missing += re[j] - k;
                }
                if in_e && !in_p {
                    intruding += rp[j] - k;
                }
            }
            (missing, intruding)
        })
        .collect();
    let (miss, intr) = per_point.iter().fold((0usize, 0usize), |(a, b), &(m, t)| (a + m, b + t));
    let norm = 2.0 / (n as f64 * k as f64 * (2 * n - 3 * k - 1) as f64);
    Ok((1.0 - norm * miss as f64, 1.0 - norm * intr as f64))
}

/// Penalises true neighbours that are torn apart in the chart.
pub fn continuity_ct(p: &Matrix, e: &Matrix, k: usize) -> Result<f64> {
    Ok(continuity_trustworthiness(p, e, k)?.0)
}

/// Penalises chart neighbours that are far apart in reality.
pub fn trustworthiness_tw(p: &Matrix, e: &Matrix, k: usize) -> Result<f64> {
    Ok(continuity_trustworthiness(p, e, k)?.1)
}

/// All pairwise distances `i < j`, divided by their maximum, sorted.
fn normalized_distances(m: &Matrix, which: &str) -> Result<Vec<f64>> {
    let n = m.rows();
    let mut d: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| dist(m, i, j))
        .collect();
    let max = d.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::DegenerateGeometry(format!("all {which} points coincide")));
    }
    d.iter_mut().for_each(|v| *v /= max);
    d.par_sort_unstable_by(f64::total_cmp);
    Ok(d)
}

/// Two-sample Kolmogorov–Smirnov statistic between the max-normalized
/// pairwise-distance distributions of `p` and `e`.
pub fn ks_statistic(p: &Matrix, e: &Matrix) -> Result<f64> {
    check_pair("ks_statistic", p, e)?;
    if p.rows() < 2 {
        return Err(Error::InsufficientData(format!("KS needs at least 2 points, got {}", p.rows())));
    }
    let a = normalized_distances(p, "true")?;
    let b = normalized_distances(e, "embedded")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut sup) = (0, 0, 0.0f64);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x + KS_TIE_TOL {
            i += 1;
        }
        while j < b.len() && b[j] <= x + KS_TIE_TOL {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// `KL(hist_P ‖ hist_E)` over [`KL_BINS`] equal bins of the normalized
/// pairwise distances, with a small floor on empty bins.
pub fn kl_divergence(p: &Matrix, e: &Matrix) -> Result<f64> {
    check_pair("kl_divergence", p, e)?;
    if p.rows() < 2 {
        return Err(Error::InsufficientData(format!("KL needs at least 2 points, got {}", p.rows())));
    }
    let hist = |d: &[f64]| {
        let mut h = vec![0.0; KL_BINS];
        for &v in d {
            h[((v * KL_BINS as f64) as usize).min(KL_BINS - 1)] += 1.0;
        }
        let total = d.len() as f64;
        h.iter_mut().for_each(|c| *c = (*c / total).max(1e-10));
        h
    };
    let hp = hist(&normalized_distances(p, "true")?);
    let he = hist(&normalized_distances(e, "embedded")?);
    Ok(hp.iter().zip(&he).map(|(a, b)| a * (a / b).ln()).sum())
}

fn require_meters(op: &str, e: &ChartEmbedding) -> Result<()> {
    if !e.aligned() {
        return Err(Error::Contract(format!(
            "{op} needs a chart aligned to meters; align the embedding first"
        )));
    }
    Ok(())
}

/// Mean Euclidean distance between true and predicted positions, in meters.
pub fn mae(p: &Matrix, e: &ChartEmbedding) -> Result<f64> {
    require_meters("mae", e)?;
    check_pair("mae", p, e.coords())?;
    if p.rows() == 0 {
        return Err(Error::InsufficientData("MAE of an empty set".into()));
    }
    let c = e.coords();
    let total: f64 = (0..p.rows())
        .map(|i| (p.get(i, 0) - c.get(i, 0)).hypot(p.get(i, 1) - c.get(i, 1)))
        .sum();
    Ok(total / p.rows() as f64)
}

/// Truth and prediction per point, for arrow plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorVectorSet {
    pub pairs: Vec<([f64; 2], [f64; 2])>,
}

impl ErrorVectorSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x_true,y_true,x_pred,y_pred\n");
        for (t, q) in &self.pairs {
            s.push_str(&format!("{},{},{},{}\n", t[0], t[1], q[0], q[1]));
        }
        s
    }
}

pub fn error_vectors(p: &Matrix, e: &ChartEmbedding) -> Result<ErrorVectorSet> {
    require_meters("error_vectors", e)?;
    check_pair("error_vectors", p, e.coords())?;
    let c = e.coords();
    Ok(ErrorVectorSet {
        pairs: (0..p.rows())
            .map(|i| ([p.get(i, 0), p.get(i, 1)], [c.get(i, 0), c.get(i, 1)]))
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ct: f64,
    pub tw: f64,
    pub ks: f64,
    pub mae_m: f64,
    pub k_neighbors: usize,
    pub n_points: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl: Option<f64>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "ct,tw,ks,mae_m";

    /// All metrics of an aligned chart against the truth. `k = None` uses
    /// [`default_k`].
    pub fn compute(p: &Matrix, e: &ChartEmbedding, k: Option<usize>, with_kl: bool) -> Result<Self> {
        let n = p.rows();
        let k = k.unwrap_or_else(|| default_k(n));
        let (ct, tw) = continuity_trustworthiness(p, e.coords(), k)?;
        Ok(Self {
            ct,
            tw,
            ks: ks_statistic(p, e.coords())?,
            mae_m: mae(p, e)?,
            k_neighbors: k,
            n_points: n,
            kl: if with_kl { Some(kl_divergence(p, e.coords())?) } else { None },
        })
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.ct, self.tw, self.ks, self.mae_m)
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}
