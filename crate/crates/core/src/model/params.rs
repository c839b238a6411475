use std::ops::Range;

use crate::error::{shape_err, Error, Result};
use crate::ndkernel::{Matrix, Rng};

/// Gate order inside [`LstmParams`]: forget, input, candidate, output.
pub const FORGET: usize = 0;
pub const INPUT: usize = 1;
pub const CANDIDATE: usize = 2;
pub const OUTPUT: usize = 3;
const GATE_NAMES: [&str; 4] = ["f", "i", "c", "o"];

/// Layer widths of the autoencoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    /// LSTM hidden width `U`.
    pub units: usize,
    /// Latent width `D`.
    pub latent: usize,
    /// Window length `L`.
    pub seq_len: usize,
    /// Flattened CSI features `F`.
    pub features: usize,
}

impl ModelDims {
    pub const EMBED: usize = 2;

    /// U = 64, D = 32, L = 10.
    pub fn standard(features: usize) -> Self {
        Self {
            units: 64,
            latent: 32,
            seq_len: 10,
            features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.units == 0 || self.latent == 0 || self.seq_len == 0 || self.features == 0 {
            return Err(Error::Config(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// One LSTM layer. Every gate weight is `U × (U + in)` and multiplies the
/// concatenation `[h_prev; x_t]`, hidden state first.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w: [Matrix; 4],
    pub b: [Vec<f64>; 4],
}

impl LstmParams {
    pub fn zeros(units: usize, input: usize) -> Self {
        Self {
            w: std::array::from_fn(|_| Matrix::zeros(units, units + input)),
            b: std::array::from_fn(|_| vec![0.0; units]),
        }
    }

    pub fn units(&self) -> usize {
        self.w[0].rows()
    }

    pub fn input_width(&self) -> usize {
        self.w[0].cols() - self.units()
    }
}

/// Affine layer `y = W·x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(out: usize, input: usize) -> Self {
        Self {
            w: Matrix::zeros(out, input),
            b: vec![0.0; out],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.clone();
        for (yi, row) in y.iter_mut().zip(self.w.iter_rows()) {
            *yi += crate::ndkernel::dot(row, x);
        }
        y
    }
}

/// Every weight and bias of the LSTM autoencoder.
///
/// Flat order (see [`ModelParams::blocks`]): encoder `W_f W_i W_c W_o b_f
/// b_i b_c b_o`, latent `W_z b_z`, embedding `W_e b_e`, decoder input
/// `W_dec b_dec`, decoder `W_f W_i W_c W_o b_f b_i b_c b_o`, output
/// `W_out b_out`. Matrices are row-major. The same type doubles as the
/// gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub encoder: LstmParams,
    /// `D × U`.
    pub latent: Dense,
    /// `2 × D`.
    pub embed: Dense,
    /// `D × 2`.
    pub dec_in: Dense,
    pub decoder: LstmParams,
    /// `F × U`.
    pub output: Dense,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let ModelDims {
            units: u,
            latent: d,
            features: f,
            ..
        } = dims;
        Self {
            dims,
            encoder: LstmParams::zeros(u, f),
            latent: Dense::zeros(d, u),
            embed: Dense::zeros(ModelDims::EMBED, d),
            dec_in: Dense::zeros(d, ModelDims::EMBED),
            decoder: LstmParams::zeros(u, d),
            output: Dense::zeros(f, u),
        }
    }

    /// Weights uniform in `±1/√fan_in`, forget-gate biases 1, other biases 0.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut p = Self::zeros(dims);
        let mut rng = Rng::derive(seed, 3);
        let mut fill = |m: &mut Matrix| {
            let bound = 1.0 / (m.cols() as f64).sqrt();
            for v in m.as_mut_slice() {
                *v = rng.uniform(-bound, bound);
            }
        };
        for lstm in [&mut p.encoder, &mut p.decoder] {
            lstm.w.iter_mut().for_each(&mut fill);
            lstm.b[FORGET].iter_mut().for_each(|b| *b = 1.0);
        }
        for dense in [&mut p.latent, &mut p.embed, &mut p.dec_in, &mut p.output] {
            fill(&mut dense.w);
        }
        Ok(p)
    }

    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::with_capacity(24);
        push_lstm(&mut out, "enc", &self.encoder);
        out.push(("latent.W_z".into(), self.latent.w.as_slice()));
        out.push(("latent.b_z".into(), &self.latent.b));
        out.push(("embed.W_e".into(), self.embed.w.as_slice()));
        out.push(("embed.b_e".into(), &self.embed.b));
        out.push(("dec_in.W_dec".into(), self.dec_in.w.as_slice()));
        out.push(("dec_in.b_dec".into(), &self.dec_in.b));
        push_lstm(&mut out, "dec", &self.decoder);
        out.push(("out.W_out".into(), self.output.w.as_slice()));
        out.push(("out.b_out".into(), &self.output.b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(24);
        let (enc_w, enc_b) = (&mut self.encoder.w, &mut self.encoder.b);
        out.extend(enc_w.iter_mut().map(Matrix::as_mut_slice));
        out.extend(enc_b.iter_mut().map(Vec::as_mut_slice));
        out.push(self.latent.w.as_mut_slice());
        out.push(&mut self.latent.b);
        out.push(self.embed.w.as_mut_slice());
        out.push(&mut self.embed.b);
        out.push(self.dec_in.w.as_mut_slice());
        out.push(&mut self.dec_in.b);
        let (dec_w, dec_b) = (&mut self.decoder.w, &mut self.decoder.b);
        out.extend(dec_w.iter_mut().map(Matrix::as_mut_slice));
        out.extend(dec_b.iter_mut().map(Vec::as_mut_slice));
        out.push(self.output.w.as_mut_slice());
        out.push(&mut self.output.b);
        out
    }

    /// Named ranges of every parameter block in the flat vector.
    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut at = 0;
        self.tensors()
            .into_iter()
            .map(|(name, t)| {
                let r = at..at + t.len();
                at = r.end;
                (name, r)
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for (_, t) in self.tensors() {
            v.extend_from_slice(t);
        }
        v
    }

    pub fn from_flat(dims: ModelDims, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(dims);
        p.set_flat(flat)?;
        Ok(p)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(shape_err("ModelParams::set_flat", format!("{n} parameters"), format!("{} values", flat.len())));
        }
        let mut at = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        }
        Ok(())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

fn push_lstm<'a>(out: &mut Vec<(String, &'a [f64])>, prefix: &str, l: &'a LstmParams) {
    for (g, w) in GATE_NAMES.iter().zip(&l.w) {
        out.push((format!("{prefix}.W_{g}"), w.as_slice()));
    }
    for (g, b) in GATE_NAMES.iter().zip(&l.b) {
        out.push((format!("{prefix}.b_{g}"), b.as_slice()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelDims {
        ModelDims {
            units: 3,
            latent: 2,
            seq_len: 4,
            features: 2,
        }
    }

    #[test]
    fn parameter_count() {
        let p = ModelParams::zeros(toy());
        let (u, d, f) = (3, 2, 2);
        let expected = 4 * u * (u + f) + 4 * u + d * u + d + 2 * d + 2 + d * 2 + d + 4 * u * (u + d) + 4 * u + f * u + f;
        assert_eq!(p.num_params(), expected);
        assert_eq!(p.blocks().last().unwrap().1.end, expected);
        assert_eq!(p.blocks().len(), 24);
    }

    #[test]
    fn flat_round_trip_follows_block_order() {
        let p = ModelParams::init(toy(), 4).unwrap();
        let flat = p.to_flat();
        let q = ModelParams::from_flat(toy(), &flat).unwrap();
        assert_eq!(p, q);
        let blocks = p.blocks();
        let (name, r) = &blocks[8];
        assert_eq!(name, "latent.W_z");
        assert_eq!(&flat[r.clone()], p.latent.w.as_slice());
        let (name, r) = &blocks[4];
        assert_eq!(name, "enc.b_f");
        assert!(flat[r.clone()].iter().all(|&b| b == 1.0));
        assert!(ModelParams::from_flat(toy(), &flat[1..]).is_err());
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let p = ModelParams::init(ModelDims::standard(16), 1).unwrap();
        let bound = 1.0 / ((64 + 16) as f64).sqrt();
        assert!(p.encoder.w.iter().all(|w| w.as_slice().iter().all(|v| v.abs() <= bound)));
        assert!(p.decoder.b[FORGET].iter().all(|&b| b == 1.0));
        assert!(p.decoder.b[INPUT].iter().all(|&b| b == 0.0));
        assert_eq!(p, ModelParams::init(ModelDims::standard(16), 1).unwrap());
        assert_ne!(p, ModelParams::init(ModelDims::standard(16), 2).unwrap());
    }
}
