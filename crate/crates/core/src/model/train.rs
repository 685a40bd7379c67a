use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::pipeline::Example;
use super::{forward, ModelParams, PreparedGraph};
use crate::autodiff::{Adam, AdamConfig, PlateauScheduler, Tape};
use crate::error::{Error, Result};
use crate::eval::compute_metrics;
use crate::rng::{mix_seed, substream};
use crate::scalar::Scalar;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss; signals a stop after `patience`
/// consecutive epochs without strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            bad: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if self.best.is_none_or(|b| loss < b) {
            self.best = Some(loss);
            self.best_epoch = epoch;
            self.bad = 0;
            return StopDecision::Improved;
        }
        self.bad += 1;
        if self.bad >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: ModelParams<T>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Probability of being machine-generated, dropout off.
pub fn predict_prepared<T: Scalar>(model: &ModelParams<T>, g: &PreparedGraph<T>) -> Result<f64> {
    let mut tape = Tape::new(&model.params);
    let state = forward(&mut tape, model, g, false, 0)?;
    Ok(tape.scalar(state.prob).as_f64())
}

fn with_context(e: Error, epoch: usize, id: &str) -> Error {
    match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} (epoch {epoch}, resume `{id}`)")),
        other => other,
    }
}

fn evaluate<T: Scalar>(model: &ModelParams<T>, set: &[Example<T>]) -> Result<(f64, Vec<f64>)> {
    let probs = set
        .iter()
        .map(|ex| predict_prepared(model, &ex.graph))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<f64> = set.iter().map(|e| e.label).collect();
    Ok((super::bce_loss(&probs, &labels)?, probs))
}

/// Mini-batch Adam with gradient accumulation over the subgraphs of a batch,
/// plateau learning-rate decay and early stopping on validation loss.
pub fn train<T: Scalar>(model: ModelParams<T>, train: &[Example<T>], val: &[Example<T>]) -> Result<TrainOutcome<T>> {
    if train.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation split".into()));
    }
    let cfg = model.cfg;
    let mut model = model;
    let mut adam = Adam::new(
        &model.params,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut scheduler = PlateauScheduler::new(cfg.lr_factor, cfg.lr_patience, cfg.min_lr);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut log = Vec::new();
    let mut grads = model.params.zero_grads();
    let mut stopped_early = false;
    let val_labels: Vec<f64> = val.iter().map(|e| e.label).collect();

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut substream(mix_seed(cfg.seed, 0x5eed), epoch as u64));
        let epoch_seed = mix_seed(cfg.seed, epoch as u64);
        let mut total_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            for &i in batch {
                let ex = &train[i];
                let mut tape = Tape::new(&model.params);
                let run = |tape: &mut Tape<'_, T>| -> Result<_> {
                    let state = forward(tape, &model, &ex.graph, true, mix_seed(epoch_seed, i as u64))?;
                    tape.bce(state.prob, &[T::of(ex.label)])
                };
                let loss = run(&mut tape).map_err(|e| with_context(e, epoch, &ex.id))?;
                total_loss += tape.scalar(loss).as_f64();
                tape.backward(loss, &mut grads)?;
            }
            grads.scale(T::of(1.0 / batch.len() as f64));
            adam.step(&mut model.params, &grads)
                .map_err(|e| with_context(e, epoch, "batch update"))?;
        }
        let (val_loss, probs) = evaluate(&model, val)?;
        let val_f1 = compute_metrics(&probs, &val_labels, 0.5)?.f1_positive;
        log.push(EpochLog {
            epoch,
            train_loss: total_loss / train.len() as f64,
            val_loss,
            val_f1,
            lr: adam.lr(),
        });
        log::debug!("epoch {epoch}: train {:.5} val {val_loss:.5} f1 {val_f1:.3}", total_loss / train.len() as f64);
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
        let lr = scheduler.observe(val_loss, adam.lr());
        adam.set_lr(lr);
    }
    Ok(TrainOutcome {
        model: best,
        log,
        best_epoch: stopper.best_epoch(),
        stopped_early,
    })
}
