use crate::error::{shape_err, Error, Result};
use crate::ndkernel::{Matrix, Rng};

/// All sliding windows over a flattened series.
///
/// A sample is identified by the index of its last row; windows share the
/// underlying rows instead of copying them.
#[derive(Clone, Debug)]
pub struct Sequences {
    flat: Matrix,
    positions: Matrix,
    seq_len: usize,
    ends: Vec<usize>,
}

impl Sequences {
    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn features(&self) -> usize {
        self.flat.cols()
    }

    /// Window-end indices, one per sample, ascending.
    pub fn samples(&self) -> &[usize] {
        &self.ends
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn flat(&self) -> &Matrix {
        &self.flat
    }

    pub fn positions(&self) -> &Matrix {
        &self.positions
    }

    /// The `L × F` window ending at row `end`.
    pub fn window(&self, end: usize) -> Matrix {
        let f = self.flat.cols();
        let start = end + 1 - self.seq_len;
        let data = self.flat.as_slice()[start * f..(end + 1) * f].to_vec();
        Matrix::from_vec(self.seq_len, f, data).expect("window within series")
    }

    /// Materialises the samples ending at `ends`, in the given order.
    pub fn batch(&self, ends: &[usize]) -> Result<SequenceBatch> {
        let mut targets = Matrix::zeros(ends.len(), 2);
        let mut inputs = Vec::with_capacity(ends.len());
        for (b, &end) in ends.iter().enumerate() {
            if end + 1 < self.seq_len || end >= self.flat.rows() {
                return Err(Error::Contract(format!(
                    "window end {end} outside [{}, {})",
                    self.seq_len - 1,
                    self.flat.rows()
                )));
            }
            inputs.push(self.window(end));
            targets.row_mut(b).copy_from_slice(self.positions.row(end));
        }
        Ok(SequenceBatch {
            inputs,
            targets_position: targets,
            source_indices: ends.to_vec(),
        })
    }
}

/// `B` windows of shape `L × F` with their end-of-window positions.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    pub inputs: Vec<Matrix>,
    /// `B × 2`, meters.
    pub targets_position: Matrix,
    pub source_indices: Vec<usize>,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Reconstruction target; identical to the inputs.
    pub fn targets_csi(&self) -> &[Matrix] {
        &self.inputs
    }
}

/// Every window of `seq_len` consecutive rows: `N − L + 1` samples, the
/// one ending at row `i` labelled with `positions[i]`.
pub fn build_sequences(flat: Matrix, positions: &Matrix, seq_len: usize) -> Result<Sequences> {
    if seq_len == 0 {
        return Err(Error::Config("sequence length must be positive".into()));
    }
    if positions.rows() != flat.rows() || positions.cols() != 2 {
        return Err(shape_err("build_sequences", flat.shape_str(), positions.shape_str()));
    }
    let n = flat.rows();
    if n < seq_len {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot fill a window of length {seq_len}"
        )));
    }
    Ok(Sequences {
        flat,
        positions: positions.clone(),
        seq_len,
        ends: (seq_len - 1..n).collect(),
    })
}

/// Seeded shuffle, then the first `⌊ratio·M⌋` items go to training and the
/// rest to validation.
pub fn split<T: Clone>(samples: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("cannot split an empty sample list".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let order = Rng::derive(seed, 2).permutation(samples.len());
    // the product can land just below an integer (0.29·100 = 28.999…)
    let n_train = (ratio * samples.len() as f64 + 1e-9).floor() as usize;
    let mut train = Vec::with_capacity(n_train);
    let mut val = Vec::with_capacity(samples.len() - n_train);
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_train {
            train.push(samples[i].clone());
        } else {
            val.push(samples[i].clone());
        }
    }
    Ok((train, val))
}
