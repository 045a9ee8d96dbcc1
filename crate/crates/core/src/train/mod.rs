//! Losses, optimizer, schedule, checkpoints and the training loop.

mod checkpoint;
mod config;
pub mod loss;
pub mod optim;
mod schedule;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CheckpointHeader, RngState, TensorEntry, CONTAINER_VERSION, MAGIC};
pub use config::TrainConfig;
pub use loss::{batch_loss, bce, cls_loss, traj_loss, BatchLoss, PROB_CLAMP};
pub use optim::{clip_factor, grad_norm, Adam, AdamHyper};
pub use schedule::CosineSchedule;

use crate::autograd::Graph;
use crate::data::{augment_rotation, ObservationWindow};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{Batch, Model};

/// Stream id that separates the training RNG from the initialization RNG.
const TRAIN_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub total: f64,
    pub traj: f64,
    pub cls: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss_traj: f64,
    pub train_loss_cls: f64,
    pub val_ade: Option<f64>,
    pub val_fde: Option<f64>,
}

pub const METRICS_HEADER: &str = "epoch,lr,train_loss_traj,train_loss_cls,val_ade,val_fde";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.9}"));
        format!(
            "{},{:.9e},{:.9},{:.9},{},{}",
            self.epoch,
            self.lr,
            self.train_loss_traj,
            self.train_loss_cls,
            opt(self.val_ade),
            opt(self.val_fde)
        )
    }
}

pub fn write_metrics_csv(mut out: impl Write, log: &[EpochLog]) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for e in log {
        writeln!(out, "{}", e.csv_row())?;
    }
    Ok(())
}

/// Owns the model, optimizer and RNG of one run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub optimizer: Adam,
    rng: ChaCha8Rng,
    /// Completed epochs.
    epoch: usize,
    steps: usize,
    best_val_ade: Option<f64>,
    best_model: Option<Model>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.model.clone(), config.seed)?;
        let optimizer = Adam::new(&model.params, config.adam);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(TRAIN_STREAM);
        Ok(Self { config, model, optimizer, rng, epoch: 0, steps: 0, best_val_ade: None, best_model: None })
    }

    /// Continue a run from a checkpoint written by [`Trainer::checkpoint`].
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        let model = ckpt.model()?;
        let optimizer = match &ckpt.optimizer {
            Some(o) => o.clone(),
            None => return Err(Error::Config("checkpoint carries no optimizer state; cannot resume".into())),
        };
        Ok(Self {
            config: ckpt.config.clone(),
            model,
            optimizer,
            rng: ckpt.rng.restore()?,
            epoch: ckpt.epoch,
            steps: 0,
            best_val_ade: ckpt.best_val_ade,
            best_model: None,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn best_val_ade(&self) -> Option<f64> {
        self.best_val_ade
    }

    /// Model with the lowest validation ADE seen by this trainer, if any.
    pub fn best_model(&self) -> Option<&Model> {
        self.best_model.as_ref()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.config, &self.model, Some(&self.optimizer), &self.rng, self.epoch, self.best_val_ade)
    }

    pub fn best_checkpoint(&self) -> Option<Checkpoint> {
        self.best_model
            .as_ref()
            .map(|m| Checkpoint::capture(&self.config, m, None, &self.rng, self.epoch, self.best_val_ade))
    }

    /// One optimizer step on `windows` at learning rate `lr`.
    pub fn step(&mut self, windows: &[&ObservationWindow], lr: f64) -> Result<StepLoss> {
        let batch = Batch::from_windows(windows)?;
        let rng = std::mem::replace(&mut self.rng, ChaCha8Rng::seed_from_u64(0));
        let mut g = Graph::training(&self.model.params, rng);
        let forward = self.model.forward(&mut g, &batch);
        let result = forward.and_then(|out| batch_loss(&mut g, out.head.trajectories, out.head.probabilities, &batch.future));
        let loss = match result {
            Ok(l) => l,
            Err(e) => {
                self.rng = g.take_rng().expect("training tape holds the RNG");
                return Err(self.diverged(e));
            }
        };
        let values = (g.value(loss.total)[[]], g.value(loss.traj)[[]], g.value(loss.cls)[[]]);
        let grads = g.backward(loss.total);
        self.rng = g.take_rng().expect("training tape holds the RNG");
        drop(g);
        let norm = grad_norm(&grads);
        if !values.0.is_finite() || !norm.is_finite() {
            return Err(Error::Diverged {
                epoch: self.epoch,
                step: self.steps,
                detail: format!("loss {} (traj {}, cls {}), gradient norm {norm}", values.0, values.1, values.2),
            });
        }
        self.optimizer.update(&mut self.model.params, &grads, lr, clip_factor(norm, self.config.grad_clip));
        self.steps += 1;
        Ok(StepLoss { total: values.0, traj: values.1, cls: values.2, grad_norm: norm })
    }

    fn diverged(&self, e: Error) -> Error {
        match e {
            Error::NonFinite(what) => Error::Diverged { epoch: self.epoch, step: self.steps, detail: format!("non-finite {what}") },
            other => other,
        }
    }

    /// Shuffle, augment and step through one epoch, then validate.
    pub fn run_epoch(&mut self, train: &[ObservationWindow], val: &[ObservationWindow]) -> Result<EpochLog> {
        if train.is_empty() {
            return Err(Error::Empty("no training windows".into()));
        }
        let lr = self.config.schedule().lr(self.epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut traj, mut cls, mut seen) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<ObservationWindow> = chunk
                .iter()
                .map(|&i| {
                    if self.config.augment_rotation {
                        let angle = self.rng.random_range(0.0..std::f64::consts::TAU);
                        augment_rotation(&train[i], angle)
                    } else {
                        train[i].clone()
                    }
                })
                .collect();
            let refs: Vec<&ObservationWindow> = batch.iter().collect();
            let loss = self.step(&refs, lr)?;
            traj += loss.traj * chunk.len() as f64;
            cls += loss.cls * chunk.len() as f64;
            seen += chunk.len();
        }
        let (val_ade, val_fde) = if val.is_empty() {
            (None, None)
        } else {
            let report = evaluate(&self.model, val, false)?;
            (Some(report.average_ade), Some(report.average_fde))
        };
        if let Some(ade) = val_ade {
            if self.best_val_ade.is_none_or(|b| ade < b) {
                self.best_val_ade = Some(ade);
                self.best_model = Some(self.model.clone());
            }
        }
        let log = EpochLog {
            epoch: self.epoch,
            lr,
            train_loss_traj: traj / seen as f64,
            train_loss_cls: cls / seen as f64,
            val_ade,
            val_fde,
        };
        self.epoch += 1;
        Ok(log)
    }

    /// Run the remaining epochs, or at most `limit` of them.
    /// `on_epoch` sees the trainer after every epoch (for logging or checkpointing).
    pub fn run<F>(
        &mut self,
        train: &[ObservationWindow],
        val: &[ObservationWindow],
        limit: Option<usize>,
        mut on_epoch: F,
    ) -> Result<Vec<EpochLog>>
    where
        F: FnMut(&Trainer, &EpochLog) -> Result<()>,
    {
        let mut log = Vec::new();
        while !self.is_finished() && limit.is_none_or(|l| log.len() < l) {
            let entry = self.run_epoch(train, val)?;
            on_epoch(self, &entry)?;
            log.push(entry);
        }
        Ok(log)
    }
}

pub struct TrainOutcome {
    pub trainer: Trainer,
    pub log: Vec<EpochLog>,
}

/// Full run: split off the validation block, train for every epoch.
pub fn train(config: TrainConfig, windows: &[ObservationWindow]) -> Result<TrainOutcome> {
    if windows.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    let (train_set, val_set) = crate::data::validation_split(windows, config.val_fraction);
    let mut trainer = Trainer::new(config)?;
    let log = trainer.run(&train_set, &val_set, None, |_, _| Ok(()))?;
    Ok(TrainOutcome { trainer, log })
}
