//! The three training regimes: pre-train with exact activations, re-train
//! after the PWL swap, and train from scratch with PWL activations.
//!
//! Loss is mean squared error on the (real, imag) outputs. Within a batch,
//! per-window gradients are computed concurrently and reduced in a fixed
//! order, so results are bit-identical regardless of thread count. The
//! best-validation-loss checkpoint is returned, with the pre-update state
//! (epoch 0) always a candidate.

use crate::activation::PwlSpec;
use crate::channel::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{hard_decision, QFactor, QResult};
use crate::model::{
    backward_from_cache, dataset_windows, equalizer_forward_stats, forward_cached, ActivationSet,
    EqualizerParams, TailStats, WindowPair, TARGET_LEN, WINDOW_LEN,
};
use crate::nncore::{AdamHyper, AdamState, Tensor};
use crate::rng::Rng64;
use crate::util::ordered_par_map;
use num_complex::Complex64;
use std::path::Path;

/// Fraction of activation inputs allowed in zero-slope tails before
/// training aborts with a dead-gradient diagnostic.
pub const TAIL_FRACTION_LIMIT: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Maximum epochs (early stopping may end the run sooner).
    pub epochs: usize,
    /// Windows per gradient step.
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Early-stop patience in epochs without validation improvement;
    /// 0 disables early stopping.
    pub patience: usize,
    /// Fraction of the window pool used for training; the rest validates.
    pub split: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            lr: 1e-3,
            seed: 1,
            patience: 10,
            split: 4096.0 / 4608.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Argument("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Argument("batch_size must be >= 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Argument(format!("split must be in (0, 1), got {}", self.split)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Argument(format!("lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One log line: epoch 0 is the pre-update state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_q: QFactor,
    pub tail_fraction: f64,
}

impl EpochLog {
    pub fn line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch,
            self.train_mse,
            self.val_mse,
            self.val_q.to_field(),
            self.tail_fraction
        )
    }
}

/// Per-epoch training log plus the index of the returned checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainLog {
    /// `epoch,train_mse,val_mse,val_q_db,tail_fraction` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            s.push_str(&e.line());
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io_path(e, path))
    }

    pub fn best(&self) -> &EpochLog {
        &self.epochs[self.best_epoch]
    }

    /// First epoch whose validation Q reaches `target_db`, if any.
    pub fn epochs_to_reach(&self, target_db: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.val_q.as_ord() >= target_db).map(|e| e.epoch)
    }
}

/// Splits a dataset at a window boundary: the first `train_windows` windows
/// (plus their context) form the training pool, the remainder the held-out
/// partition. Window positions in both halves stay on the stride grid, so
/// held-out targets were never training targets.
pub fn split_dataset(ds: &Dataset, train_windows: usize) -> Result<(Dataset, Dataset)> {
    let n = ds.len();
    if n < WINDOW_LEN {
        return Err(Error::Argument(format!("dataset has {n} symbols, needs >= {WINDOW_LEN}")));
    }
    let total_windows = (n - WINDOW_LEN) / TARGET_LEN + 1;
    if train_windows == 0 || train_windows >= total_windows {
        return Err(Error::Argument(format!(
            "train_windows {train_windows} must be in 1..{total_windows}"
        )));
    }
    let trainval = ds.slice(0, TARGET_LEN * train_windows + (WINDOW_LEN - TARGET_LEN))?;
    let test_start = TARGET_LEN * train_windows;
    let test = ds.slice(test_start, n - test_start)?;
    Ok((trainval, test))
}

fn mse_and_grad(out: &Tensor, target: &Tensor) -> (f64, Tensor) {
    let n = out.len() as f64;
    let mut grad = Tensor::zeros(out.shape());
    let mut loss = 0.0;
    for (i, (o, t)) in out.data().iter().zip(target.data()).enumerate() {
        let d = o - t;
        loss += d * d;
        grad.data_mut()[i] = 2.0 * d / n;
    }
    (loss / n, grad)
}

fn loss_and_grad(
    params: &EqualizerParams,
    acts: &ActivationSet,
    w: &WindowPair,
) -> Result<(f64, EqualizerParams)> {
    let cache = forward_cached(params, &w.input, acts)?;
    let (loss, grad_out) = mse_and_grad(&cache.output, &w.target);
    let grads = backward_from_cache(params, &w.input, acts, &cache, &grad_out)?;
    Ok((loss, grads))
}

struct ValStats {
    mse: f64,
    q: QFactor,
    tail_fraction: f64,
}

fn validation_pass(
    params: &EqualizerParams,
    acts: &ActivationSet,
    windows: &[WindowPair],
    order: u32,
) -> Result<ValStats> {
    let per: Vec<Result<(f64, u64, u64, TailStats)>> = ordered_par_map(windows, |w| {
        let (out, tails) = equalizer_forward_stats(params, &w.input, acts)?;
        let (mse, _) = mse_and_grad(&out, &w.target);
        let est: Vec<Complex64> = (0..TARGET_LEN)
            .map(|t| Complex64::new(out.at2(t, 0), out.at2(t, 1)))
            .collect();
        let want: Vec<Complex64> = (0..TARGET_LEN)
            .map(|t| Complex64::new(w.target.at2(t, 0), w.target.at2(t, 1)))
            .collect();
        let got_bits = hard_decision(&est, order)?;
        let want_bits = hard_decision(&want, order)?;
        let errors = got_bits.iter().zip(&want_bits).filter(|(a, b)| a != b).count() as u64;
        Ok((mse, errors, want_bits.len() as u64, tails))
    });
    let mut mse_sum = 0.0;
    let mut errors = 0u64;
    let mut bits = 0u64;
    let mut tails = TailStats::default();
    for r in per {
        let (m, e, b, t) = r?;
        mse_sum += m;
        errors += e;
        bits += b;
        tails.merge(t);
    }
    let result = QResult::from_errors(errors, bits)?;
    Ok(ValStats {
        mse: mse_sum / windows.len() as f64,
        q: result.q,
        tail_fraction: tails.fraction(),
    })
}

fn train_mse_only(
    params: &EqualizerParams,
    acts: &ActivationSet,
    windows: &[WindowPair],
) -> Result<f64> {
    let per: Vec<Result<f64>> = ordered_par_map(windows, |w| {
        let cache = forward_cached(params, &w.input, acts)?;
        Ok(mse_and_grad(&cache.output, &w.target).0)
    });
    let mut sum = 0.0;
    for r in per {
        sum += r?;
    }
    Ok(sum / windows.len() as f64)
}

fn train_loop(
    mut params: EqualizerParams,
    acts: &ActivationSet,
    ds: &Dataset,
    tc: &TrainConfig,
) -> Result<(EqualizerParams, TrainLog)> {
    tc.validate()?;
    let windows = dataset_windows(ds)?;
    if windows.len() < 2 {
        return Err(Error::Argument(format!(
            "training needs >= 2 windows, dataset yields {}",
            windows.len()
        )));
    }
    let n = windows.len();
    let n_train = ((n as f64 * tc.split).round() as usize).clamp(1, n - 1);
    let (train, val) = windows.split_at(n_train);
    let order = ds.config.qam_order;

    let mut adam = {
        let tensors = params.tensors();
        let refs: Vec<&Tensor> = tensors.iter().map(|(_, t)| *t).collect();
        AdamState::new(&refs, AdamHyper { lr: tc.lr, ..Default::default() })
    };

    let mut log = Vec::with_capacity(tc.epochs + 1);
    let guard = |frac: f64, epoch: usize| -> Result<()> {
        if frac >= TAIL_FRACTION_LIMIT {
            return Err(Error::Training(format!(
                "dead-gradient collapse at epoch {epoch}: {:.1}% of activation inputs sit in \
                 zero-slope tails (limit {:.0}%)",
                frac * 100.0,
                TAIL_FRACTION_LIMIT * 100.0
            )));
        }
        Ok(())
    };

    // Epoch 0: the pre-update state is always a checkpoint candidate.
    let v0 = validation_pass(&params, acts, val, order)?;
    guard(v0.tail_fraction, 0)?;
    log.push(EpochLog {
        epoch: 0,
        train_mse: train_mse_only(&params, acts, train)?,
        val_mse: v0.mse,
        val_q: v0.q,
        tail_fraction: v0.tail_fraction,
    });
    let mut best_val = v0.mse;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut stale = 0usize;

    let mut indices: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=tc.epochs {
        let mut shuffle_rng = Rng64::stream(tc.seed, 0x7000 + epoch as u64);
        shuffle_rng.shuffle(&mut indices);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in indices.chunks(tc.batch_size) {
            let batch_windows: Vec<&WindowPair> = batch.iter().map(|&i| &train[i]).collect();
            let results: Vec<Result<(f64, EqualizerParams)>> =
                ordered_par_map(&batch_windows, |w| loss_and_grad(&params, acts, w));
            let mut gsum =
                EqualizerParams::zeros(params.hidden, params.input, params.kernel, params.filters);
            for r in results {
                let (l, g) = r?;
                loss_sum += l;
                gsum.add_scaled(&g, 1.0)?;
            }
            seen += batch.len();
            let scale = 1.0 / batch.len() as f64;
            for (_, t) in gsum.tensors_mut() {
                t.scale(scale);
            }
            if !loss_sum.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            let mut pts = params.tensors_mut();
            let mut prefs: Vec<&mut Tensor> = pts.iter_mut().map(|(_, t)| &mut **t).collect();
            let gts = gsum.tensors();
            let grefs: Vec<&Tensor> = gts.iter().map(|(_, t)| *t).collect();
            adam.step(&mut prefs, &grefs)?;
        }
        let train_mse = loss_sum / seen as f64;

        let v = validation_pass(&params, acts, val, order)?;
        guard(v.tail_fraction, epoch)?;
        log.push(EpochLog {
            epoch,
            train_mse,
            val_mse: v.mse,
            val_q: v.q,
            tail_fraction: v.tail_fraction,
        });

        if v.mse < best_val {
            best_val = v.mse;
            best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if tc.patience > 0 && stale >= tc.patience {
                break;
            }
        }
    }

    Ok((best_params, TrainLog { epochs: log, best_epoch }))
}

/// Pre-training with the exact activation functions.
pub fn pretrain(ds: &Dataset, tc: &TrainConfig) -> Result<(EqualizerParams, TrainLog)> {
    let params = EqualizerParams::standard(tc.seed);
    train_loop(params, &ActivationSet::exact(), ds, tc)
}

/// Continues training a pre-trained model after swapping in the PWL
/// approximations; gradients flow through the piecewise-constant slopes.
pub fn retrain(
    params: &EqualizerParams,
    sigmoid_spec: &PwlSpec,
    tanh_spec: &PwlSpec,
    ds: &Dataset,
    tc: &TrainConfig,
) -> Result<(EqualizerParams, TrainLog)> {
    let acts = ActivationSet::pwl(sigmoid_spec.clone(), tanh_spec.clone())?;
    train_loop(params.clone(), &acts, ds, tc)
}

/// Trains with PWL activations from a fresh seeded initialization.
pub fn train_scratch(
    sigmoid_spec: &PwlSpec,
    tanh_spec: &PwlSpec,
    ds: &Dataset,
    tc: &TrainConfig,
) -> Result<(EqualizerParams, TrainLog)> {
    let acts = ActivationSet::pwl(sigmoid_spec.clone(), tanh_spec.clone())?;
    let params = EqualizerParams::standard(tc.seed);
    train_loop(params, &acts, ds, tc)
}
