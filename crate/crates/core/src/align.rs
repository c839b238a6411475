//! Least-squares affine alignment of a learned chart to physical
//! coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::ndkernel::Matrix;

/// Pivots smaller than this fraction of the largest one mark `[E | 1]` as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Affine map acting on homogeneous rows `[e_x, e_y, 1]`: `p = [e | 1]·T`
/// with `T` of shape 3 × 2. The last row is the translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub t: [[f64; 2]; 3],
}

impl AffineTransform {
    pub const IDENTITY: Self = Self {
        t: [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
    };

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            t: [[1.0, 0.0], [0.0, 1.0], [dx, dy]],
        }
    }

    pub fn apply_point(&self, e: [f64; 2]) -> [f64; 2] {
        let t = &self.t;
        [
            e[0] * t[0][0] + e[1] * t[1][0] + t[2][0],
            e[0] * t[0][1] + e[1] * t[1][1] + t[2][1],
        ]
    }

    pub fn values(&self) -> [f64; 6] {
        let t = &self.t;
        [t[0][0], t[0][1], t[1][0], t[1][1], t[2][0], t[2][1]]
    }

    pub fn from_values(v: [f64; 6]) -> Result<Self> {
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index: i, value: v[i] });
        }
        Ok(Self {
            t: [[v[0], v[1]], [v[2], v[3]], [v[4], v[5]]],
        })
    }

    /// Header line plus one row of the six entries, row-major.
    pub fn to_csv(&self) -> String {
        let v = self.values();
        format!(
            "t00,t01,t10,t11,t20,t21\n{},{},{},{},{},{}\n",
            v[0], v[1], v[2], v[3], v[4], v[5]
        )
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let row = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('t'))
            .ok_or_else(|| Error::Format {
                offset: 0,
                reason: "no transform row".into(),
            })?;
        let parsed: Vec<f64> = row
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Format {
                offset: 0,
                reason: format!("bad transform value: {e}"),
            })?;
        let v: [f64; 6] = parsed.try_into().map_err(|v: Vec<f64>| Error::Format {
            offset: 0,
            reason: format!("expected 6 values, got {}", v.len()),
        })?;
        Self::from_values(v)
    }
}

/// Coordinate frame of a chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Latent,
    Meters,
}

/// A 2-D chart together with the frame its coordinates live in.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartEmbedding {
    coords: Matrix,
    frame: Frame,
}

impl ChartEmbedding {
    /// Raw network output; not comparable to positions in meters.
    pub fn latent(coords: Matrix) -> Result<Self> {
        check_n_by_2("ChartEmbedding::latent", &coords)?;
        Ok(Self {
            coords,
            frame: Frame::Latent,
        })
    }

    /// Coordinates already expressed in meters, e.g. a forced-to-truth chart.
    pub fn meters(coords: Matrix) -> Result<Self> {
        check_n_by_2("ChartEmbedding::meters", &coords)?;
        Ok(Self {
            coords,
            frame: Frame::Meters,
        })
    }

    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    pub fn into_coords(self) -> Matrix {
        self.coords
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn aligned(&self) -> bool {
        self.frame == Frame::Meters
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows() == 0
    }
}

fn check_n_by_2(op: &'static str, m: &Matrix) -> Result<()> {
    if m.cols() != 2 {
        return Err(shape_err(op, "N × 2", m.shape_str()));
    }
    Ok(())
}

/// Minimises `‖P − [E | 1]·T‖_F` over `T` with a Householder QR of the
/// design matrix.
pub fn fit_affine(p: &Matrix, e: &Matrix) -> Result<AffineTransform> {
    check_n_by_2("fit_affine", p)?;
    check_n_by_2("fit_affine", e)?;
    if p.rows() != e.rows() {
        return Err(shape_err("fit_affine", p.shape_str(), e.shape_str()));
    }
    let n = p.rows();
    if n < 3 {
        return Err(Error::InsufficientData(format!("affine fit needs at least 3 points, got {n}")));
    }
    if !p.is_finite() || !e.is_finite() {
        return Err(Error::Contract("affine fit received non-finite coordinates".into()));
    }

    // Column-major working copies: A = [E | 1] and B = P.
    let mut a: Vec<Vec<f64>> = vec![
        e.iter_rows().map(|r| r[0]).collect(),
        e.iter_rows().map(|r| r[1]).collect(),
        vec![1.0; n],
    ];
    let mut b: Vec<Vec<f64>> = vec![
        p.iter_rows().map(|r| r[0]).collect(),
        p.iter_rows().map(|r| r[1]).collect(),
    ];
    let col_norm = |c: &[f64]| c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = a.iter().map(|c| col_norm(c)).fold(0.0, f64::max);

    let mut r = [[0.0f64; 3]; 3];
    for k in 0..3 {
        let norm = col_norm(&a[k][k..]);
        if norm <= RANK_TOL * scale {
            return Err(Error::DegenerateGeometry(
                "embedding points are collinear or coincident; [E | 1] is rank deficient".into(),
            ));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let s: f64 = v.iter().zip(col.iter()).map(|(x, y)| x * y).sum::<f64>() * 2.0 / vv;
            for (c, x) in col.iter_mut().zip(&v) {
                *c -= s * x;
            }
        };
        for col in a.iter_mut().skip(k) {
            reflect(&mut col[k..]);
        }
        for col in b.iter_mut() {
            reflect(&mut col[k..]);
        }
        for (j, col) in a.iter().enumerate().skip(k) {
            r[k][j] = col[k];
        }
    }
    // Back substitution R·T = Qᵀ·P (first three rows).
    let mut t = [[0.0f64; 2]; 3];
    for (c, col) in b.iter().enumerate() {
        for i in (0..3).rev() {
            let mut s = col[i];
            for j in i + 1..3 {
                s -= r[i][j] * t[j][c];
            }
            t[i][c] = s / r[i][i];
        }
    }
    AffineTransform::from_values([t[0][0], t[0][1], t[1][0], t[1][1], t[2][0], t[2][1]])
}

/// `[E | 1]·T`, labelled as meters.
pub fn apply_affine(e: &Matrix, t: &AffineTransform) -> Result<ChartEmbedding> {
    check_n_by_2("apply_affine", e)?;
    let coords = Matrix::from_fn(e.rows(), 2, |i, c| t.apply_point([e.get(i, 0), e.get(i, 1)])[c]);
    ChartEmbedding::meters(coords)
}

/// `P − [E | 1]·T`.
pub fn residuals(p: &Matrix, e: &Matrix, t: &AffineTransform) -> Result<Matrix> {
    let aligned = apply_affine(e, t)?;
    p.sub(aligned.coords())
}
