//! LSTM autoencoder with a 2-D embedding bottleneck.
//!
//! Encoder path: LSTM over the window → last hidden state `h_enc` →
//! `z = W_z·h_enc + b_z` → `ReLU` → `e = W_e·z_active + b_e` (the chart
//! coordinate). Decoder path: `z_dec = W_dec·e + b_dec`, repeated `L` times
//! into a second LSTM, then a per-step affine read-out back to `F` features.

mod checkpoint;
mod lstm;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CKPT_MAGIC, CKPT_VERSION};
pub use lstm::{lstm_backward, lstm_cell_forward, lstm_forward, CellTrace};
pub use params::{Dense, LstmParams, ModelDims, ModelParams, CANDIDATE, FORGET, INPUT, OUTPUT};

use rayon::prelude::*;

use crate::dataset::SequenceBatch;
use crate::error::{shape_err, Error, Result};
use crate::ndkernel::{relu_scalar, Matrix};

/// Samples per parallel work unit. Fixed so gradient sums are reduced in
/// the same order whatever the thread count.
const CHUNK: usize = 8;

/// Encoder half of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderTrace {
    pub steps: Vec<CellTrace>,
    pub h_enc: Vec<f64>,
    pub z: Vec<f64>,
    pub z_active: Vec<f64>,
    pub e: Vec<f64>,
}

/// Decoder half of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderTrace {
    pub z_dec: Vec<f64>,
    pub steps: Vec<CellTrace>,
}

impl DecoderTrace {
    /// `L × D` matrix of the repeated decoder input.
    pub fn z_repeat(&self) -> Matrix {
        let d = self.z_dec.len();
        Matrix::from_fn(self.steps.len(), d, |_, c| self.z_dec[c])
    }

    /// `L × U` decoder hidden states.
    pub fn h_dec(&self) -> Matrix {
        let rows: Vec<&[f64]> = self.steps.iter().map(|s| s.h.as_slice()).collect();
        Matrix::from_rows(&rows).expect("equal-width hidden states")
    }
}

/// Everything computed for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub encoder: EncoderTrace,
    pub decoder: DecoderTrace,
    /// Reconstruction `X̂`, `L × F`.
    pub x_hat: Matrix,
}

/// Batched forward output.
#[derive(Clone, Debug)]
pub struct Forward {
    /// `B × 2` chart coordinates.
    pub embeddings: Matrix,
    /// `B` reconstructions of shape `L × F`.
    pub reconstructions: Vec<Matrix>,
    pub traces: Vec<ForwardTrace>,
}

fn check_sequence(sequence: &Matrix, dims: &ModelDims) -> Result<()> {
    if sequence.shape() != (dims.seq_len, dims.features) {
        return Err(shape_err(
            "encode",
            format!("L×F = {}x{}", dims.seq_len, dims.features),
            sequence.shape_str(),
        ));
    }
    Ok(())
}

/// Chart coordinate of one `L × F` window.
pub fn encode(sequence: &Matrix, params: &ModelParams) -> Result<EncoderTrace> {
    check_sequence(sequence, &params.dims)?;
    let steps = lstm_forward(&params.encoder, sequence.iter_rows())?;
    let h_enc = steps.last().map(|s| s.h.clone()).unwrap_or_else(|| vec![0.0; params.dims.units]);
    let z = params.latent.apply(&h_enc);
    let z_active: Vec<f64> = z.iter().copied().map(relu_scalar).collect();
    let e = params.embed.apply(&z_active);
    Ok(EncoderTrace {
        steps,
        h_enc,
        z,
        z_active,
        e,
    })
}

/// Reconstruction `X̂` (`L × F`) from a chart coordinate.
pub fn decode(e: &[f64], params: &ModelParams) -> Result<(Matrix, DecoderTrace)> {
    if e.len() != ModelDims::EMBED {
        return Err(shape_err("decode", "2-vector", format!("{}-vector", e.len())));
    }
    let dims = params.dims;
    let z_dec = params.dec_in.apply(e);
    let steps = lstm_forward(&params.decoder, std::iter::repeat_n(z_dec.as_slice(), dims.seq_len))?;
    let mut x_hat = Matrix::zeros(dims.seq_len, dims.features);
    for (t, s) in steps.iter().enumerate() {
        let row = x_hat.row_mut(t);
        row.copy_from_slice(&params.output.b);
        for (v, w) in row.iter_mut().zip(params.output.w.iter_rows()) {
            *v += crate::ndkernel::dot(w, &s.h);
        }
    }
    Ok((x_hat, DecoderTrace { z_dec, steps }))
}

fn forward_one(sequence: &Matrix, params: &ModelParams) -> Result<ForwardTrace> {
    let encoder = encode(sequence, params)?;
    let (x_hat, decoder) = decode(&encoder.e, params)?;
    Ok(ForwardTrace { encoder, decoder, x_hat })
}

/// Encode + decode every window of the batch, preserving order.
pub fn forward(batch: &SequenceBatch, params: &ModelParams) -> Result<Forward> {
    let traces: Vec<ForwardTrace> = batch
        .inputs
        .par_iter()
        .map(|x| forward_one(x, params))
        .collect::<Result<_>>()?;
    let mut embeddings = Matrix::zeros(traces.len(), 2);
    for (b, t) in traces.iter().enumerate() {
        embeddings.row_mut(b).copy_from_slice(&t.encoder.e);
    }
    let reconstructions = traces.iter().map(|t| t.x_hat.clone()).collect();
    Ok(Forward {
        embeddings,
        reconstructions,
        traces,
    })
}

/// Chart coordinates only (`B × 2`), skipping the decoder.
pub fn embed(inputs: &[Matrix], params: &ModelParams) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = inputs
        .par_iter()
        .map(|x| encode(x, params).map(|t| t.e))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, 2));
    }
    Matrix::from_rows(&rows)
}

fn backward_one(params: &ModelParams, trace: &ForwardTrace, d_e: &[f64], d_xhat: &Matrix, grad: &mut ModelParams) {
    let dims = params.dims;
    let u = dims.units;

    // time-distributed read-out
    let mut dh_dec = vec![vec![0.0; u]; dims.seq_len];
    for (t, step) in trace.decoder.steps.iter().enumerate() {
        let dy = d_xhat.row(t);
        grad.output.w.add_outer(dy, &step.h);
        for (b, d) in grad.output.b.iter_mut().zip(dy) {
            *b += d;
        }
        params.output.w.t_matvec_acc(dy, 0, &mut dh_dec[t]);
    }

    // decoder LSTM; every step consumed the same z_dec
    let ext: Vec<Option<&[f64]>> = dh_dec.iter().map(|v| Some(v.as_slice())).collect();
    let dx = lstm_backward(&params.decoder, &trace.decoder.steps, &ext, &mut grad.decoder, true);
    let mut dz_dec = vec![0.0; dims.latent];
    for d in &dx {
        for (a, b) in dz_dec.iter_mut().zip(d) {
            *a += b;
        }
    }

    let enc = &trace.encoder;
    grad.dec_in.w.add_outer(&dz_dec, &enc.e);
    for (b, d) in grad.dec_in.b.iter_mut().zip(&dz_dec) {
        *b += d;
    }
    let mut de = d_e.to_vec();
    params.dec_in.w.t_matvec_acc(&dz_dec, 0, &mut de);

    // embedding head
    grad.embed.w.add_outer(&de, &enc.z_active);
    for (b, d) in grad.embed.b.iter_mut().zip(&de) {
        *b += d;
    }
    let mut dz = vec![0.0; dims.latent];
    params.embed.w.t_matvec_acc(&de, 0, &mut dz);
    // ReLU; subgradient 0 at z = 0
    for (d, &z) in dz.iter_mut().zip(&enc.z) {
        if z <= 0.0 {
            *d = 0.0;
        }
    }

    grad.latent.w.add_outer(&dz, &enc.h_enc);
    for (b, d) in grad.latent.b.iter_mut().zip(&dz) {
        *b += d;
    }
    let mut dh_enc = vec![0.0; u];
    params.latent.w.t_matvec_acc(&dz, 0, &mut dh_enc);

    let mut ext: Vec<Option<&[f64]>> = vec![None; enc.steps.len()];
    if let Some(last) = ext.last_mut() {
        *last = Some(&dh_enc);
    }
    lstm_backward(&params.encoder, &enc.steps, &ext, &mut grad.encoder, false);
}

/// Gradient of a loss with respect to every parameter, given the loss
/// gradients `d_e` (`B × 2`) at the chart coordinates and `d_xhat`
/// (`B` matrices `L × F`) at the reconstructions.
pub fn backward(params: &ModelParams, traces: &[ForwardTrace], d_e: &Matrix, d_xhat: &[Matrix]) -> Result<ModelParams> {
    let b = traces.len();
    if d_e.shape() != (b, 2) || d_xhat.len() != b {
        return Err(shape_err(
            "backward",
            format!("{b} traces"),
            format!("dE {}, {} dX̂", d_e.shape_str(), d_xhat.len()),
        ));
    }
    let dims = params.dims;
    for (t, dx) in traces.iter().zip(d_xhat) {
        if t.encoder.steps.len() != dims.seq_len
            || t.decoder.steps.len() != dims.seq_len
            || t.encoder.h_enc.len() != dims.units
            || dx.shape() != (dims.seq_len, dims.features)
        {
            return Err(Error::Contract(format!(
                "trace or gradient does not match model dims {dims:?}"
            )));
        }
    }

    let partials: Vec<ModelParams> = (0..b)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|idx| {
            let mut g = ModelParams::zeros(dims);
            for &i in idx {
                backward_one(params, &traces[i], d_e.row(i), &d_xhat[i], &mut g);
            }
            g
        })
        .collect();
    let mut total = ModelParams::zeros(dims);
    for g in &partials {
        total.add_assign(g);
    }
    Ok(total)
}
