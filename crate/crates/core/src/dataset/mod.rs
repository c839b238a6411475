//! CSI datasets: synthesis, the `CSID1` file format, flattening, windowing
//! and the train/validation split.

mod io;
mod synth;
mod window;

pub use io::{
    decode_dataset, encode_dataset, load_dataset, load_positions_csv, save_dataset, write_atomic, CSID_MAGIC,
    CSID_VERSION,
};
pub use synth::{generate_synthetic_csi, ChannelSpec, Noise, SynthSpec, Trajectory};
pub use window::{build_sequences, split, SequenceBatch, Sequences};

use crate::error::{shape_err, Error, Result};
use crate::ndkernel::Matrix;

/// Default sliding-window length.
pub const DEFAULT_SEQ_LEN: usize = 10;
/// Default CSI sampling interval in seconds.
pub const DEFAULT_SAMPLING_INTERVAL: f64 = 0.192;
/// Default user speed in m/s.
pub const DEFAULT_SPEED: f64 = 0.3;

/// Axis lengths of a CSI tensor `(samples, links, 2, subcarriers, taps)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CsiShape {
    pub samples: usize,
    pub links: usize,
    pub subcarriers: usize,
    pub taps: usize,
}

impl CsiShape {
    /// Number of features per sample once flattened.
    pub fn features(&self) -> usize {
        self.links * 2 * self.subcarriers * self.taps
    }

    pub fn len(&self) -> usize {
        self.samples * self.features()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 5] {
        [self.samples, self.links, 2, self.subcarriers, self.taps]
    }

    /// Offset of element `[n, link, part, sub, tap]` in the row-major tensor.
    #[inline]
    pub fn offset(&self, n: usize, link: usize, part: usize, sub: usize, tap: usize) -> usize {
        (((n * self.links + link) * 2 + part) * self.subcarriers + sub) * self.taps + tap
    }
}

/// Raw CSI tensor with the true 2-D position of every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiDataset {
    shape: CsiShape,
    csi: Vec<f64>,
    positions: Matrix,
    pub sampling_interval: f64,
    pub provenance: String,
}

impl CsiDataset {
    pub fn new(
        shape: CsiShape,
        csi: Vec<f64>,
        positions: Matrix,
        sampling_interval: f64,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if csi.len() != shape.len() {
            return Err(shape_err(
                "CsiDataset::new",
                format!("{:?}", shape.dims()),
                format!("{} values", csi.len()),
            ));
        }
        if positions.rows() != shape.samples || positions.cols() != 2 {
            return Err(shape_err(
                "CsiDataset::new",
                format!("{} samples", shape.samples),
                format!("positions {}", positions.shape_str()),
            ));
        }
        check_finite(&csi, "CSI")?;
        check_finite(positions.as_slice(), "positions")?;
        Ok(Self {
            shape,
            csi,
            positions,
            sampling_interval,
            provenance: provenance.into(),
        })
    }

    pub fn shape(&self) -> CsiShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.samples
    }

    pub fn is_empty(&self) -> bool {
        self.shape.samples == 0
    }

    pub fn csi(&self) -> &[f64] {
        &self.csi
    }

    pub fn positions(&self) -> &Matrix {
        &self.positions
    }

    /// Replaces the position labels, e.g. with ones imported from CSV.
    pub fn set_positions(&mut self, positions: Matrix) -> Result<()> {
        if positions.rows() != self.shape.samples || positions.cols() != 2 {
            return Err(shape_err(
                "set_positions",
                format!("{} samples", self.shape.samples),
                positions.shape_str(),
            ));
        }
        self.positions = positions;
        Ok(())
    }

    /// Flattened feature row of sample `n`.
    pub fn sample(&self, n: usize) -> &[f64] {
        let f = self.shape.features();
        &self.csi[n * f..(n + 1) * f]
    }
}

/// Per-feature mean and standard deviation used to standardize a flattened
/// dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Statistics over the rows of `flat`. Constant features get unit scale.
    pub fn fit(flat: &Matrix) -> Self {
        let n = flat.rows().max(1) as f64;
        let f = flat.cols();
        let mut mean = vec![0.0; f];
        for row in flat.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for row in flat.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, flat: &mut Matrix) {
        for r in 0..flat.rows() {
            for ((v, m), s) in flat.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }

    pub fn invert(&self, flat: &mut Matrix) {
        for r in 0..flat.rows() {
            for ((v, m), s) in flat.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
    }
}

/// Reshapes the tensor to `N × F`, row `i` being sample `i` flattened
/// row-major. With `standardize`, every feature is shifted and scaled to
/// zero mean and unit variance and the statistics are returned.
pub fn flatten(d: &CsiDataset, standardize: bool) -> (Matrix, Option<Standardizer>) {
    let shape = d.shape();
    let mut flat = Matrix::from_vec(shape.samples, shape.features(), d.csi.clone())
        .expect("tensor length checked at construction");
    if standardize {
        let stats = Standardizer::fit(&flat);
        stats.apply(&mut flat);
        (flat, Some(stats))
    } else {
        (flat, None)
    }
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Contract(format!("{what}: non-finite value at index {i}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize, links: usize, sub: usize, taps: usize) -> CsiDataset {
        let shape = CsiShape {
            samples: n,
            links,
            subcarriers: sub,
            taps,
        };
        let csi = (0..shape.len()).map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.0).collect();
        let pos = Matrix::from_fn(n, 2, |r, c| (r * 2 + c) as f64);
        CsiDataset::new(shape, csi, pos, 0.192, "test").unwrap()
    }

    #[test]
    fn feature_count_is_product_of_trailing_axes() {
        let table = CsiShape {
            samples: 20827,
            links: 4,
            subcarriers: 4,
            taps: 32,
        };
        assert_eq!(table.features(), 1024);
        let d = tiny(5, 1, 1, 2);
        let (flat, stats) = flatten(&d, false);
        assert_eq!(flat.shape(), (5, 4));
        assert!(stats.is_none());
        assert_eq!(flat.row(3), d.sample(3));
    }

    #[test]
    fn offset_matches_row_major() {
        let s = CsiShape {
            samples: 3,
            links: 2,
            subcarriers: 3,
            taps: 4,
        };
        let mut expected = 0;
        for n in 0..3 {
            for l in 0..2 {
                for p in 0..2 {
                    for sc in 0..3 {
                        for t in 0..4 {
                            assert_eq!(s.offset(n, l, p, sc, t), expected);
                            expected += 1;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn standardize_round_trip() {
        let d = tiny(7, 2, 2, 3);
        let (raw, _) = flatten(&d, false);
        let (mut z, stats) = flatten(&d, true);
        let stats = stats.unwrap();
        for c in 0..z.cols() {
            let mean: f64 = (0..z.rows()).map(|r| z.get(r, c)).sum::<f64>() / z.rows() as f64;
            let var: f64 = (0..z.rows()).map(|r| (z.get(r, c) - mean).powi(2)).sum::<f64>() / z.rows() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        stats.invert(&mut z);
        assert!(z.max_abs_diff(&raw) < 1e-10);
    }

    #[test]
    fn constructor_rejects_bad_lengths() {
        let shape = CsiShape {
            samples: 2,
            links: 1,
            subcarriers: 1,
            taps: 2,
        };
        assert!(CsiDataset::new(shape, vec![0.0; 7], Matrix::zeros(2, 2), 0.1, "x").is_err());
        assert!(CsiDataset::new(shape, vec![0.0; 8], Matrix::zeros(3, 2), 0.1, "x").is_err());
    }
}
