//! Single LSTM step and its hand-derived backward pass.

use super::params::{LstmParams, CANDIDATE, FORGET, INPUT, OUTPUT};
use crate::error::{shape_err, Result};
use crate::ndkernel::sigmoid_scalar;

/// Activations of one time step, kept for backpropagation.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTrace {
    /// `[h_{t−1}; x_t]`.
    pub concat: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    /// Candidate cell `c̃_t`.
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One step:
///
/// ```text
/// f = σ(W_f·[h;x] + b_f)    i = σ(W_i·[h;x] + b_i)
/// c̃ = tanh(W_c·[h;x] + b_c) o = σ(W_o·[h;x] + b_o)
/// c' = f⊙c + i⊙c̃            h' = o⊙tanh(c')
/// ```
pub fn lstm_cell_forward(gates: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<CellTrace> {
    let u = gates.units();
    if h_prev.len() != u || c_prev.len() != u || x.len() != gates.input_width() {
        return Err(shape_err(
            "lstm_cell_forward",
            format!("U={u}, input={}", gates.input_width()),
            format!("h={}, c={}, x={}", h_prev.len(), c_prev.len(), x.len()),
        ));
    }
    let mut concat = Vec::with_capacity(h_prev.len() + x.len());
    concat.extend_from_slice(h_prev);
    concat.extend_from_slice(x);

    let pre = |k: usize| -> Vec<f64> {
        let mut a = vec![0.0; u];
        gates.w[k].matvec_into(&concat, &mut a);
        for (v, b) in a.iter_mut().zip(&gates.b[k]) {
            *v += b;
        }
        a
    };
    let f: Vec<f64> = pre(FORGET).into_iter().map(sigmoid_scalar).collect();
    let i: Vec<f64> = pre(INPUT).into_iter().map(sigmoid_scalar).collect();
    let g: Vec<f64> = pre(CANDIDATE).into_iter().map(f64::tanh).collect();
    let o: Vec<f64> = pre(OUTPUT).into_iter().map(sigmoid_scalar).collect();
    let c: Vec<f64> = (0..u).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = (0..u).map(|k| o[k] * tanh_c[k]).collect();
    Ok(CellTrace {
        concat,
        c_prev: c_prev.to_vec(),
        f,
        i,
        g,
        o,
        c,
        tanh_c,
        h,
    })
}

/// Runs the layer from zero state over `inputs`.
pub fn lstm_forward<'a>(gates: &LstmParams, inputs: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<CellTrace>> {
    let u = gates.units();
    let mut h = vec![0.0; u];
    let mut c = vec![0.0; u];
    let mut steps = Vec::new();
    for x in inputs {
        let step = lstm_cell_forward(gates, x, &h, &c)?;
        h.clone_from(&step.h);
        c.clone_from(&step.c);
        steps.push(step);
    }
    Ok(steps)
}

/// Backpropagation through time over a whole sequence.
///
/// `dh_ext[t]` is the loss gradient arriving at `h_t` from outside the
/// recurrence (`None` for steps with no external consumer). Weight and bias
/// gradients are accumulated into `grad`. When `want_dx` is set, the
/// gradients with respect to every input `x_t` are returned.
pub fn lstm_backward(
    gates: &LstmParams,
    steps: &[CellTrace],
    dh_ext: &[Option<&[f64]>],
    grad: &mut LstmParams,
    want_dx: bool,
) -> Vec<Vec<f64>> {
    let u = gates.units();
    let input = gates.input_width();
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut dx = if want_dx { vec![Vec::new(); steps.len()] } else { Vec::new() };
    let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; u]);

    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let mut dh = dh_next.clone();
        if let Some(ext) = dh_ext[t] {
            for (a, b) in dh.iter_mut().zip(ext) {
                *a += b;
            }
        }
        for k in 0..u {
            let d_o = dh[k] * s.tanh_c[k];
            let dc = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            let d_f = dc * s.c_prev[k];
            let d_i = dc * s.g[k];
            let d_g = dc * s.i[k];
            dc_next[k] = dc * s.f[k];
            da[FORGET][k] = d_f * s.f[k] * (1.0 - s.f[k]);
            da[INPUT][k] = d_i * s.i[k] * (1.0 - s.i[k]);
            da[CANDIDATE][k] = d_g * (1.0 - s.g[k] * s.g[k]);
            da[OUTPUT][k] = d_o * s.o[k] * (1.0 - s.o[k]);
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let mut dx_t = if want_dx { vec![0.0; input] } else { Vec::new() };
        for gate in 0..4 {
            grad.w[gate].add_outer(&da[gate], &s.concat);
            for (b, d) in grad.b[gate].iter_mut().zip(&da[gate]) {
                *b += d;
            }
            gates.w[gate].t_matvec_acc(&da[gate], 0, &mut dh_next);
            if want_dx {
                gates.w[gate].t_matvec_acc(&da[gate], u, &mut dx_t);
            }
        }
        if want_dx {
            dx[t] = dx_t;
        }
    }
    dx
}
