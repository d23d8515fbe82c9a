//! Mini-batch Adam training with validation-based early stopping.

mod adam;
mod split;

pub use adam::{adam_step, AdamState};
pub use split::{split_cohort, Splits};

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Graph, Tensor, TensorError};
use crate::cohort::{PreparedPatient, ScalerParams};
use crate::kv::{format_list, parse_list, KvError, KvMap};
use crate::model::{Batch, LossWeights, Losses, Model, ModelError, ModelKind};
use crate::nn::Checkpoint;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training configuration: {0}")]
    Config(String),
    #[error("non-finite gradient {value} in parameter {param}")]
    NonFiniteGradient { param: String, value: f64 },
    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        /// Best model seen before divergence (the initial model if no epoch
        /// completed).
        last_good: Box<Model>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub split: [f64; 3],
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl TrainConfig {
    pub fn full() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 0.0001,
            batch_size: 128,
            max_epochs: 500,
            patience: 10,
            split: [0.70, 0.15, 0.15],
            weights: LossWeights::default(),
            seed: 0,
        }
    }

    /// Laptop-scale schedule: batches of 32, at most 60 epochs.
    pub fn desk() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 60,
            ..Self::full()
        }
    }

    pub const KEYS: [&'static str; 13] = [
        "train.lr",
        "train.beta1",
        "train.beta2",
        "train.eps",
        "train.l2",
        "train.batch_size",
        "train.max_epochs",
        "train.patience",
        "train.split",
        "train.seed",
        "loss.mortality",
        "loss.auxiliary",
        "loss.imputation",
    ];

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("train.lr", self.lr);
        m.set("train.beta1", self.beta1);
        m.set("train.beta2", self.beta2);
        m.set("train.eps", self.eps);
        m.set("train.l2", self.l2);
        m.set("train.batch_size", self.batch_size);
        m.set("train.max_epochs", self.max_epochs);
        m.set("train.patience", self.patience);
        m.set("train.split", format_list(&self.split));
        m.set("train.seed", self.seed);
        m.set("loss.mortality", self.weights.mortality);
        m.set("loss.auxiliary", self.weights.auxiliary);
        m.set("loss.imputation", self.weights.imputation);
        m
    }

    pub fn update_from(&mut self, kv: &KvMap) -> Result<(), TrainError> {
        kv.update("train.lr", &mut self.lr)?;
        kv.update("train.beta1", &mut self.beta1)?;
        kv.update("train.beta2", &mut self.beta2)?;
        kv.update("train.eps", &mut self.eps)?;
        kv.update("train.l2", &mut self.l2)?;
        kv.update("train.batch_size", &mut self.batch_size)?;
        kv.update("train.max_epochs", &mut self.max_epochs)?;
        kv.update("train.patience", &mut self.patience)?;
        if let Some(s) = kv.get("train.split") {
            let bad = || KvError::Value {
                key: "train.split".into(),
                value: s.into(),
            };
            let v: Vec<f64> = parse_list(s).ok_or_else(bad)?;
            self.split = v.try_into().map_err(|_| bad())?;
        }
        kv.update("train.seed", &mut self.seed)?;
        kv.update("loss.mortality", &mut self.weights.mortality)?;
        kv.update("loss.auxiliary", &mut self.weights.auxiliary)?;
        kv.update("loss.imputation", &mut self.weights.imputation)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [self.lr, self.eps];
        if positive.iter().any(|x| !(*x > 0.0)) {
            return Err(TrainError::Config("learning rate and eps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(TrainError::Config("l2 must be non-negative".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::Config("batch size and max epochs must be positive".into()));
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(TrainError::Config(format!("split fractions {:?} must sum to 1", self.split)));
        }
        self.weights.validate()?;
        Ok(())
    }
}

/// Losses after one epoch. Training losses are the hour-weighted mean over
/// the epoch's mini-batches in train mode; validation losses come from a
/// separate eval-mode pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: Losses,
    pub val: Losses,
    pub improved: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub best: Model,
    pub best_epoch: usize,
    pub best_val: Losses,
    pub history: Vec<EpochRecord>,
    pub steps: u64,
}

const EVAL_BATCH: usize = 256;

/// Trains `model` and returns the best-validation parameters. Stops once
/// `patience` epochs pass without improvement or after `max_epochs`.
pub fn train(
    model: Model,
    train: &[PreparedPatient],
    val: &[PreparedPatient],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Config("training and validation sets must be non-empty".into()));
    }
    let mut model = model;
    let mut state = AdamState::new(&model.store);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);

    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_val: Option<Losses> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut order_rng);
        let mut acc = [0.0; 4];
        let mut hours = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&PreparedPatient> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = Batch::from_patients(&refs)?;
            let mut g = Graph::new();
            let p = model.store.bind(&mut g);
            let step = model
                .forward(&mut g, &p, &batch, Some(&mut dropout_rng))
                .and_then(|fwd| model.losses(&mut g, &fwd, &batch, &cfg.weights));
            let loss = match step {
                Ok(l) => l,
                Err(ModelError::Tensor(e @ TensorError::Domain { .. })) => {
                    return Err(TrainError::Diverged {
                        epoch,
                        reason: e.to_string(),
                        last_good: Box::new(best),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            let l = loss.values(&g);
            if !l.total.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    reason: format!("training loss is {}", l.total),
                    last_good: Box::new(best),
                });
            }
            g.backward(loss.total).map_err(ModelError::from)?;
            model.store.zero_grad();
            model.store.accumulate_grads(&g, &p);
            match adam_step(&mut model.store, &mut state, cfg) {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient { param, value }) => {
                    return Err(TrainError::Diverged {
                        epoch,
                        reason: format!("gradient of {param} is {value}"),
                        last_good: Box::new(best),
                    })
                }
                Err(e) => return Err(e),
            }
            let h = batch.n_valid() as f64;
            acc[0] += h * l.mort;
            acc[1] += h * l.aux.unwrap_or(0.0);
            acc[2] += h * l.impute;
            acc[3] += h * l.total;
            hours += h;
        }
        let train_losses = Losses {
            mort: acc[0] / hours,
            aux: (model.kind() == ModelKind::Senn).then(|| acc[1] / hours),
            impute: acc[2] / hours,
            total: acc[3] / hours,
        };
        let val_losses = model.evaluate(val, EVAL_BATCH, &cfg.weights)?;
        if !val_losses.total.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                reason: format!("validation loss is {}", val_losses.total),
                last_good: Box::new(best),
            });
        }
        let improved = best_val.is_none_or(|b| val_losses.total < b.total);
        if improved {
            best = model.clone();
            best_epoch = epoch;
            best_val = Some(val_losses);
            since_best = 0;
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            train: train_losses,
            val: val_losses,
            improved,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5}{}",
            record.train.total,
            record.val.total,
            if improved { " *" } else { "" }
        );
        on_epoch(&record);
        history.push(record);
        if since_best >= cfg.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val: best_val.expect("at least one epoch"),
        history,
        steps: state.step,
    })
}

pub const EPOCH_LOG_HEADER: &str =
    "epoch,train_total,train_mort,train_aux,train_impute,val_total,val_mort,val_aux,val_impute";

/// Loss history as CSV. Wall-clock times go to a separate file (see
/// [`write_epoch_timing`]) so that seeded runs produce identical logs.
pub fn write_epoch_log(out: &mut impl Write, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "{EPOCH_LOG_HEADER}")?;
    let aux = |l: &Losses| l.aux.map(|a| a.to_string()).unwrap_or_default();
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.train.total,
            r.train.mort,
            aux(&r.train),
            r.train.impute,
            r.val.total,
            r.val.mort,
            aux(&r.val),
            r.val.impute
        )?;
    }
    Ok(())
}

pub fn write_epoch_timing(out: &mut impl Write, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "epoch,wall_seconds")?;
    for r in history {
        writeln!(out, "{},{:.3}", r.epoch, r.wall_seconds)?;
    }
    Ok(())
}

const SCALER_FIELDS: [&str; 4] = ["p01", "p99", "median", "iqr"];

/// Model parameters, scaler parameters and both configurations in one
/// checkpoint.
pub fn bundle_checkpoint(model: &Model, scaler: &ScalerParams, cfg: &TrainConfig, best_epoch: usize) -> Checkpoint {
    let mut ckpt = model.checkpoint();
    let mut meta = cfg.to_kv();
    meta.set("train.best_epoch", best_epoch);
    ckpt.metadata
        .extend(meta.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    for (name, values) in SCALER_FIELDS
        .iter()
        .zip([&scaler.p01, &scaler.p99, &scaler.median, &scaler.iqr])
    {
        let t = Tensor::new(vec![values.len()], values.clone()).expect("1-d");
        ckpt.records.push((format!("scaler.{name}"), t));
    }
    ckpt
}

/// Inverse of [`bundle_checkpoint`].
pub fn unbundle_checkpoint(ckpt: &Checkpoint) -> Result<(Model, ScalerParams), TrainError> {
    let model = Model::from_checkpoint(ckpt)?;
    let mut fields = Vec::with_capacity(4);
    for name in SCALER_FIELDS {
        let t = ckpt.record(&format!("scaler.{name}")).ok_or_else(|| {
            TrainError::Config(format!("checkpoint has no scaler.{name} record"))
        })?;
        if t.len() != model.config.d_series {
            return Err(TrainError::Config(format!(
                "scaler.{name} has {} features, model expects {}",
                t.len(),
                model.config.d_series
            )));
        }
        fields.push(t.data().to_vec());
    }
    let [p01, p99, median, iqr]: [Vec<f64>; 4] = fields.try_into().expect("four fields");
    Ok((
        model,
        ScalerParams {
            p01,
            p99,
            median,
            iqr,
            degenerate: Vec::new(),
        },
    ))
}
