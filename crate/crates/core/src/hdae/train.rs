use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use super::adam::{adam_step, AdamState};
use super::config::{ModelConfig, TrainConfig};
use super::loss::LossParts;
use super::model::{forward, loss_and_gradients, Mode};
use super::noise::apply_noise_with;
use super::params::{init_params, ModelParams};
use super::hybrid_loss;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::seed;
use crate::split::Split;
use crate::Scalar;

/// Minimum absolute drop in validation loss that counts as an improvement.
pub const IMPROVEMENT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 0 is the evaluation before any optimizer step.
    pub epoch: usize,
    pub train: LossParts<f64>,
    pub val: LossParts<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainReport {
    pub fn best_val(&self) -> LossParts<f64> {
        self.epochs[self.best_epoch].val
    }

    /// `epoch,train_total,train_mse,train_bce,val_total,val_mse,val_bce`
    pub fn to_csv(&self) -> String {
        use crate::io::fmt_f64 as f;
        let mut out = String::from("epoch,train_total,train_mse,train_bce,val_total,val_mse,val_bce\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch,
                f(r.train.total),
                f(r.train.mse),
                f(r.train.bce),
                f(r.val.total),
                f(r.val.mse),
                f(r.val.bce)
            ));
        }
        out
    }
}

fn to_f64<T: Scalar>(l: LossParts<T>) -> LossParts<f64> {
    LossParts {
        total: l.total.as_f64(),
        mse: l.mse.as_f64(),
        bce: l.bce.as_f64(),
    }
}

fn evaluate<T: Scalar>(params: &ModelParams<T>, x: &Array2<T>, y: &[bool]) -> Result<LossParts<f64>> {
    let out = forward(params, x, Mode::Eval)?;
    let cfg = &params.config;
    Ok(to_f64(hybrid_loss(&out.recon, x, &out.logits, y, cfg.lambda_cls, cfg.pos_weight)))
}

/// Mini-batch Adam training with validation-based early stopping.
///
/// Initialization and batch order/noise draw from independent streams
/// derived from `tcfg.seed`. Returns the parameters of the best validation
/// epoch (epoch 0 is the untrained model).
pub fn train<T: Scalar>(
    features: &FeatureTable<T>,
    labels: &[bool],
    split: &Split,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(ModelParams<T>, TrainReport)> {
    mcfg.validate()?;
    tcfg.validate()?;
    if features.norm_stats.is_none() {
        return Err(Error::Config("training expects z-score normalized features".into()));
    }
    if mcfg.input_dim != features.n_features() {
        return Err(Error::Shape(format!(
            "model input_dim {} but table has {} features",
            mcfg.input_dim,
            features.n_features()
        )));
    }
    if labels.len() != features.n_rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            features.n_rows()
        )));
    }
    if split.train_ids.is_empty() || split.val_ids.is_empty() {
        return Err(Error::Config("split must have non-empty train and validation parts".into()));
    }

    let x_train = features.values.select(Axis(0), &split.train_ids);
    let y_train: Vec<bool> = split.train_ids.iter().map(|&i| labels[i]).collect();
    let x_val = features.values.select(Axis(0), &split.val_ids);
    let y_val: Vec<bool> = split.val_ids.iter().map(|&i| labels[i]).collect();

    let mut params: ModelParams<T> = init_params(mcfg, seed::stage_seed(tcfg.seed, "hdae.init"));
    let mut rng = seed::rng(seed::stage_seed(tcfg.seed, "hdae.batches"));
    let mut adam = AdamState::new(&params);

    let val0 = evaluate(&params, &x_val, &y_val).map_err(|_| Error::Diverged { epoch: 0 })?;
    let train0 = evaluate(&params, &x_train, &y_train).map_err(|_| Error::Diverged { epoch: 0 })?;
    if !val0.total.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        train: train0,
        val: val0,
    }];
    let mut best = val0.total;
    let mut best_epoch = 0;
    let mut best_params = params.clone();
    let mut stale = 0;
    let mut stopped_epoch = tcfg.max_epochs;

    let mut order: Vec<usize> = (0..x_train.nrows()).collect();
    for epoch in 1..=tcfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sums = LossParts { total: 0.0, mse: 0.0, bce: 0.0 };
        for batch in order.chunks(tcfg.batch_size) {
            let xb = x_train.select(Axis(0), batch);
            let yb: Vec<bool> = batch.iter().map(|&i| y_train[i]).collect();
            let noisy = apply_noise_with(&xb, mcfg.noise_prob, mcfg.noise_std, &mut rng);
            let (loss, grads) =
                loss_and_gradients(&params, &noisy, &xb, &yb).map_err(|_| Error::Diverged { epoch })?;
            let w = batch.len() as f64;
            sums.total += loss.total.as_f64() * w;
            sums.mse += loss.mse.as_f64() * w;
            sums.bce += loss.bce.as_f64() * w;
            adam_step(&mut params, &grads, &mut adam, tcfg.learning_rate);
        }
        let n = x_train.nrows() as f64;
        let train_loss = LossParts {
            total: sums.total / n,
            mse: sums.mse / n,
            bce: sums.bce / n,
        };
        let val = evaluate(&params, &x_val, &y_val).map_err(|_| Error::Diverged { epoch })?;
        if !val.total.is_finite() || !train_loss.total.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        epochs.push(EpochRecord {
            epoch,
            train: train_loss,
            val,
        });
        if val.total < best - IMPROVEMENT_THRESHOLD {
            best = val.total;
            best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= tcfg.patience {
                stopped_epoch = epoch;
                break;
            }
        }
    }
    Ok((
        best_params,
        TrainReport {
            epochs,
            best_epoch,
            stopped_epoch,
        },
    ))
}
