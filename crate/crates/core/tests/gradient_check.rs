//! Analytic backpropagation against central finite differences, block by
//! block, for the full autoencoder under the joint loss.

use chartforge::dataset::SequenceBatch;
use chartforge::loss::{reconstruction_loss, total_loss};
use chartforge::model::{backward, forward, ModelDims, ModelParams};
use chartforge::ndkernel::{finite_diff_grad, relative_error};
use chartforge::{Matrix, Rng};

const EPS: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely.
const FLOOR: f64 = 1e-7;

fn toy_dims() -> ModelDims {
    ModelDims {
        units: 3,
        latent: 2,
        seq_len: 4,
        features: 2,
    }
}

fn random_params(dims: ModelDims, seed: u64) -> ModelParams {
    let mut p = ModelParams::zeros(dims);
    let mut rng = Rng::new(seed);
    let flat: Vec<f64> = (0..p.num_params()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    p.set_flat(&flat).unwrap();
    p
}

fn random_batch(dims: ModelDims, b: usize, seed: u64) -> SequenceBatch {
    let mut rng = Rng::derive(seed, 77);
    SequenceBatch {
        inputs: (0..b)
            .map(|_| Matrix::from_fn(dims.seq_len, dims.features, |_, _| rng.uniform(-1.0, 1.0)))
            .collect(),
        targets_position: Matrix::from_fn(b, 2, |_, _| rng.uniform(-2.0, 2.0)),
        source_indices: (0..b).collect(),
    }
}

fn loss_at(dims: ModelDims, flat: &[f64], batch: &SequenceBatch, alpha: f64) -> f64 {
    let p = ModelParams::from_flat(dims, flat).unwrap();
    let out = forward(batch, &p).unwrap();
    total_loss(&batch.inputs, &out.reconstructions, &batch.targets_position, &out.embeddings, alpha)
        .unwrap()
        .breakdown
        .total
}

fn analytic(p: &ModelParams, batch: &SequenceBatch, alpha: f64) -> Vec<f64> {
    let out = forward(batch, p).unwrap();
    let lg = total_loss(&batch.inputs, &out.reconstructions, &batch.targets_position, &out.embeddings, alpha).unwrap();
    backward(p, &out.traces, &lg.d_embeddings, &lg.d_reconstructions).unwrap().to_flat()
}

/// Worst relative error per named block.
fn check(seed: u64, b: usize, alpha: f64) -> Vec<(String, f64)> {
    let dims = toy_dims();
    let p = random_params(dims, seed);
    let batch = random_batch(dims, b, seed);
    let an = analytic(&p, &batch, alpha);
    let num = finite_diff_grad(|v| loss_at(dims, v, &batch, alpha), &p.to_flat(), EPS).unwrap();
    p.blocks()
        .into_iter()
        .map(|(name, r)| {
            let worst = r.clone().map(|i| relative_error(an[i], num[i], FLOOR)).fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}

#[test]
fn all_blocks_match_on_seed_11() {
    for (name, err) in check(11, 2, 0.75) {
        assert!(err <= 1e-4, "{name}: relative error {err:.3e}");
    }
}

#[test]
fn all_blocks_match_across_seeds() {
    for seed in [1, 2, 3, 4, 5, 6] {
        for (name, err) in check(seed, 3, 0.75) {
            assert!(err <= 1e-4, "seed {seed}, {name}: relative error {err:.3e}");
        }
    }
}

#[test]
fn every_block_receives_gradient() {
    let dims = toy_dims();
    let p = random_params(dims, 12);
    let an = analytic(&p, &random_batch(dims, 3, 12), 0.75);
    for (name, r) in p.blocks() {
        assert!(an[r].iter().any(|&g| g != 0.0), "{name} has an identically zero gradient");
    }
}

#[test]
fn output_bias_gradient_is_mean_residual() {
    // X̂ = W_out·h + b_out at every step, so ∂L_recon/∂b_out[f] is
    // Σ_{n,t} 2(X̂ − X)[n,t,f] / (B·L·F).
    let dims = toy_dims();
    let p = random_params(dims, 13);
    let batch = random_batch(dims, 3, 13);
    let out = forward(&batch, &p).unwrap();
    let (_, d_rec) = reconstruction_loss(&batch.inputs, &out.reconstructions).unwrap();
    let g = backward(&p, &out.traces, &Matrix::zeros(3, 2), &d_rec).unwrap();
    let count = (3 * dims.seq_len * dims.features) as f64;
    for f in 0..dims.features {
        let mut expected = 0.0;
        for (x, xh) in batch.inputs.iter().zip(&out.reconstructions) {
            for t in 0..dims.seq_len {
                expected += 2.0 * (xh.get(t, f) - x.get(t, f)) / count;
            }
        }
        assert!((g.output.b[f] - expected).abs() < 1e-14, "{} vs {expected}", g.output.b[f]);
    }
}
