//! Mini-batch Adam with reduce-on-plateau learning-rate scheduling and
//! best-validation checkpointing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Sequences;
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossBreakdown, DEFAULT_ALPHA};
use crate::model::{backward, forward, ModelDims, ModelParams};
use crate::ndkernel::Rng;

/// Optimiser, schedule and architecture settings for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub lr_factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    /// Relative improvement a validation loss must make to reset patience.
    pub plateau_threshold: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub units: usize,
    pub latent: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            batch_size: 64,
            epochs: 150,
            alpha: DEFAULT_ALPHA,
            lr_factor: 0.5,
            patience: 5,
            min_lr: 1e-6,
            plateau_threshold: 1e-4,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            units: 64,
            latent: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad(format!("lr_factor must lie in (0, 1), got {}", self.lr_factor));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.lr0 > 0.0 && self.min_lr >= 0.0 && self.min_lr <= self.lr0) {
            return bad(format!("need 0 <= min_lr <= lr0 and lr0 > 0, got {} / {}", self.min_lr, self.lr0));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(crate::error::shape_err(
            "adam_step",
            format!("{} params", params.len()),
            format!("{} grads, {} moments", grads.len(), state.m.len()),
        ));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            index: i,
            value: grads[i],
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Halves (by `factor`) the learning rate after `patience` consecutive
/// epochs without a relative improvement of `threshold` in validation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64, threshold: f64) -> Self {
        Self {
            lr,
            factor,
            patience,
            min_lr,
            threshold,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feeds one validation loss; returns the learning rate for the next
    /// epoch and whether a reduction fired.
    pub fn step(&mut self, val_loss: f64) -> (f64, bool) {
        if val_loss < self.best * (1.0 - self.threshold) || self.best.is_infinite() {
            self.best = val_loss;
            self.bad_epochs = 0;
            return (self.lr, false);
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            self.lr = (self.lr * self.factor).max(self.min_lr);
            return (self.lr, true);
        }
        (self.lr, false)
    }
}

/// Learning rate after the last entry of `val_history`, given that `lr` was
/// in force when it was recorded. The patience counter is replayed from the
/// whole history, so this agrees with a [`PlateauScheduler`] fed the same
/// sequence.
pub fn reduce_lr_on_plateau(
    val_history: &[f64],
    lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    threshold: f64,
) -> f64 {
    let mut sched = PlateauScheduler::new(lr, factor, patience, min_lr, threshold);
    let mut fired = false;
    for &v in val_history {
        fired = sched.step(v).1;
    }
    if fired {
        (lr * factor).max(min_lr)
    } else {
        lr
    }
}

/// One completed epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// CSV with one row per epoch. Wall time is left out so reruns produce
    /// identical bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,recon,topo,total,val_recon,val_topo,val_total,lr\n");
        for r in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.epoch, r.train.recon, r.train.topo, r.train.total, r.val.recon, r.val.topo, r.val.total, r.lr
            ));
        }
        s
    }

    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.iter().fold(None, |best: Option<&EpochRecord>, r| match best {
            Some(b) if b.val.total <= r.val.total => Some(b),
            _ => Some(r),
        })
    }
}

/// Trained parameters and the per-epoch record.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub history: TrainHistory,
}

/// Splits `samples` into consecutive batches of `batch_size`; a trailing
/// batch of one is folded into its predecessor when `merge_single` is set
/// and dropped otherwise.
fn batches(samples: &[usize], batch_size: usize, merge_single: bool) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = samples.chunks(batch_size).collect();
    if let Some(last) = out.last() {
        if last.len() < 2 {
            out.pop();
            if merge_single && !out.is_empty() {
                let n = out.len();
                let start = (n - 1) * batch_size;
                out[n - 1] = &samples[start..];
            }
        }
    }
    out
}

/// Size-weighted mean loss over `samples`, evaluated in order in batches.
pub fn evaluate(
    params: &ModelParams,
    seqs: &Sequences,
    samples: &[usize],
    alpha: f64,
    batch_size: usize,
) -> Result<LossBreakdown> {
    let parts = batches(samples, batch_size.max(2), true);
    if parts.is_empty() {
        return Err(Error::InsufficientData(format!(
            "loss evaluation needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let (mut recon, mut topo, mut n) = (0.0, 0.0, 0usize);
    for ends in parts {
        let batch = seqs.batch(ends)?;
        let out = forward(&batch, params)?;
        let lg = total_loss(&batch.inputs, &out.reconstructions, &batch.targets_position, &out.embeddings, alpha)?;
        recon += lg.breakdown.recon * ends.len() as f64;
        topo += lg.breakdown.topo * ends.len() as f64;
        n += ends.len();
    }
    Ok(LossBreakdown::new(recon / n as f64, topo / n as f64, alpha))
}

/// Trains an autoencoder on `train_set` and selects the epoch with the
/// lowest validation loss on `val_set`. Both sets are window-end indices
/// into `seqs`.
pub fn train(
    seqs: &Sequences,
    train_set: &[usize],
    val_set: &[usize],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.len() < 2 {
        return Err(Error::InsufficientData(format!("training set has {} samples", train_set.len())));
    }
    if val_set.len() < 2 {
        return Err(Error::InsufficientData(format!("validation set has {} samples", val_set.len())));
    }
    let dims = ModelDims {
        units: config.units,
        latent: config.latent,
        seq_len: seqs.seq_len(),
        features: seqs.features(),
    };
    let mut params = ModelParams::init(dims, config.seed)?;
    let mut flat = params.to_flat();
    let mut adam = AdamState::new(flat.len());
    let mut sched = PlateauScheduler::new(config.lr0, config.lr_factor, config.patience, config.min_lr, config.plateau_threshold);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = sched.lr;
        let mut order = train_set.to_vec();
        Rng::derive(config.seed, 1000 + epoch as u64).shuffle(&mut order);

        let (mut recon, mut topo, mut seen) = (0.0, 0.0, 0usize);
        for (bi, ends) in batches(&order, config.batch_size, false).into_iter().enumerate() {
            let diverged = |reason: String| Error::Diverged {
                epoch,
                batch: bi,
                reason,
            };
            let batch = seqs.batch(ends)?;
            let out = forward(&batch, &params)?;
            let lg = total_loss(&batch.inputs, &out.reconstructions, &batch.targets_position, &out.embeddings, config.alpha)?;
            if !lg.breakdown.is_finite() {
                return Err(diverged(format!(
                    "loss {:?} on window ends {:?}",
                    lg.breakdown, batch.source_indices
                )));
            }
            let grad = backward(&params, &out.traces, &lg.d_embeddings, &lg.d_reconstructions)?;
            adam_step(&mut flat, &grad.to_flat(), &mut adam, lr, config.beta1, config.beta2, config.adam_eps)
                .map_err(|e| diverged(e.to_string()))?;
            params.set_flat(&flat)?;
            recon += lg.breakdown.recon * ends.len() as f64;
            topo += lg.breakdown.topo * ends.len() as f64;
            seen += ends.len();
        }
        let train_loss = LossBreakdown::new(recon / seen as f64, topo / seen as f64, config.alpha);
        let val_loss = evaluate(&params, seqs, val_set, config.alpha, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                reason: format!("validation loss {val_loss:?}"),
            });
        }
        if best.as_ref().is_none_or(|(b, _)| val_loss.total < *b) {
            best = Some((val_loss.total, params.clone()));
        }
        sched.step(val_loss.total);

        let record = EpochRecord {
            epoch,
            train: train_loss,
            val: val_loss,
            lr,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.epochs.push(record);
    }

    Ok(TrainOutcome {
        params: best.map_or(params, |(_, p)| p),
        history,
    })
}
