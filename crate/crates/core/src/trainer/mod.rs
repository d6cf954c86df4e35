//! Epoch loop: shuffle positives, corrupt, compute batch gradients, and take
//! row-sparse AdamW steps with an epoch-wise step-decayed learning rate.

mod config;
mod optimizer;
mod sampler;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::gcp::{gcp_grad, gcp_grad_parallel, Batch, BatchRows, FactorModel, GcpError, LossFamily};
use crate::real::Real;
use crate::store::TripleStore;

pub use config::{ConfigErrors, TrainConfig, CONFIG_KEYS};
pub use optimizer::{apply_row_grads, apply_update, AdamW, OptimizerState, RowGrads};
pub use sampler::{make_batches, Batches, NegativeSampler};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Kernel(#[from] GcpError),
    #[error("training store is empty")]
    EmptyStore,
    #[error("cannot corrupt triples with n_e = {n_e} (need at least 2 entities)")]
    CannotCorrupt { n_e: usize },
    #[error("store has {store} entities / {store_r} relations but model has {model} / {model_r}")]
    DimensionMismatch {
        store: usize,
        store_r: usize,
        model: usize,
        model_r: usize,
    },
    #[error("non-finite gradient in batch entry {entry}")]
    NonFiniteGradient { entry: usize },
    #[error("non-finite {matrix} parameter at row {row}, column {col} after update")]
    NonFiniteParameter {
        matrix: &'static str,
        row: u32,
        col: usize,
    },
    #[error("epoch {epoch}: non-finite loss")]
    NonFiniteLoss { epoch: usize },
    #[error("observer aborted training: {0}")]
    Observer(String),
}

/// `learning_rate · gamma^⌊epoch / step⌋`.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    let decays = (epoch / config.lr_decay_step.max(1)) as i32;
    config.learning_rate * config.lr_decay_gamma.powi(decays)
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub entries: usize,
    /// Bytes held by the step's scratch buffers (rows, gradients,
    /// accumulation).
    pub transient_bytes: usize,
    pub touched_entities: usize,
    pub touched_relations: usize,
}

/// Per-epoch telemetry record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochTelemetry {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub mean_loss: f64,
    pub entries: usize,
    pub steps: usize,
    pub wall_seconds: f64,
    pub peak_transient_bytes: usize,
}

impl EpochTelemetry {
    pub fn to_text(&self) -> String {
        format!(
            "epoch={} lr={} loss={} mean_loss={} entries={} steps={} wall_seconds={:.3} peak_transient_bytes={}",
            self.epoch,
            self.lr,
            self.loss,
            self.mean_loss,
            self.entries,
            self.steps,
            self.wall_seconds,
            self.peak_transient_bytes
        )
    }
}

/// Hook run on the training thread after every epoch.
pub trait TrainObserver<T> {
    fn on_epoch_end(&mut self, telemetry: &EpochTelemetry, model: &FactorModel<T>) -> Result<(), String>;
}

impl<T> TrainObserver<T> for () {
    fn on_epoch_end(&mut self, _: &EpochTelemetry, _: &FactorModel<T>) -> Result<(), String> {
        Ok(())
    }
}

impl<T, F> TrainObserver<T> for F
where
    F: FnMut(&EpochTelemetry, &FactorModel<T>) -> Result<(), String>,
{
    fn on_epoch_end(&mut self, telemetry: &EpochTelemetry, model: &FactorModel<T>) -> Result<(), String> {
        self(telemetry, model)
    }
}

/// Model, optimizer state and RNG for one training run.
pub struct Trainer<T> {
    config: TrainConfig,
    adam: AdamW,
    model: FactorModel<T>,
    state: OptimizerState<T>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<T: Real> Trainer<T> {
    /// Draws the initial factors from `seed` (RNG stream 0); shuffling and
    /// corruption use stream 1 of the same seed.
    pub fn new(n_e: usize, n_r: usize, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = FactorModel::random_normal(n_e, n_r, config.rank, config.init_scale, &mut init_rng);
        Ok(Self::with_model(model, config))
    }

    /// Starts from given factors with fresh optimizer state.
    pub fn with_model(model: FactorModel<T>, config: TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let state = OptimizerState::new(model.n_entities(), model.n_relations(), model.rank());
        let adam = AdamW {
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            weight_decay: config.l2_coeff,
        };
        Self {
            config,
            adam,
            model,
            state,
            rng,
            epoch: 0,
        }
    }

    pub fn model(&self) -> &FactorModel<T> {
        &self.model
    }

    pub fn into_model(self) -> FactorModel<T> {
        self.model
    }

    pub fn optimizer_state(&self) -> &OptimizerState<T> {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Gradient computation and optimizer update for one batch.
    pub fn step(&mut self, batch: &Batch, lr: f64) -> Result<StepReport, TrainError> {
        step_parts(
            &mut self.model,
            &mut self.state,
            &self.adam,
            self.config.deterministic,
            batch,
            lr,
        )
    }

    /// One pass over `store`: shuffle, batch with corruptions, step.
    pub fn run_epoch(&mut self, store: &TripleStore) -> Result<EpochTelemetry, TrainError> {
        if store.is_empty() {
            return Err(TrainError::EmptyStore);
        }
        if store.n_entities() != self.model.n_entities() || store.n_relations() != self.model.n_relations() {
            return Err(TrainError::DimensionMismatch {
                store: store.n_entities(),
                store_r: store.n_relations(),
                model: self.model.n_entities(),
                model_r: self.model.n_relations(),
            });
        }
        let started = Instant::now();
        let lr = lr_at_epoch(&self.config, self.epoch);
        let Self {
            config,
            adam,
            model,
            state,
            rng,
            epoch,
        } = self;
        let sampler = match (config.filtered_negatives, config.n_negatives) {
            (_, 0) => NegativeSampler::unchecked(store.n_entities()),
            (true, _) => NegativeSampler::filtered(store.n_entities(), store)?,
            (false, _) => NegativeSampler::new(store.n_entities())?,
        };
        let mut order: Vec<u32> = (0..store.len() as u32).collect();
        order.shuffle(rng);

        let mut loss = 0.0;
        let mut entries = 0;
        let mut steps = 0;
        let mut peak = 0;
        for batch in make_batches(store.triples(), &order, sampler, rng, config.batch_size, config.n_negatives) {
            let report = step_parts(model, state, adam, config.deterministic, &batch, lr)?;
            loss += report.loss;
            entries += report.entries;
            steps += 1;
            peak = peak.max(report.transient_bytes + batch.heap_bytes());
        }
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch: *epoch });
        }
        let telemetry = EpochTelemetry {
            epoch: *epoch,
            lr,
            loss,
            mean_loss: if entries > 0 { loss / entries as f64 } else { 0.0 },
            entries,
            steps,
            wall_seconds: started.elapsed().as_secs_f64(),
            peak_transient_bytes: peak,
        };
        *epoch += 1;
        Ok(telemetry)
    }
}

fn step_parts<T: Real>(
    model: &mut FactorModel<T>,
    state: &mut OptimizerState<T>,
    adam: &AdamW,
    deterministic: bool,
    batch: &Batch,
    lr: f64,
) -> Result<StepReport, TrainError> {
    let rows = BatchRows::gather(model, batch);
    let grads = if deterministic {
        gcp_grad(batch, &rows, LossFamily::Bernoulli)?
    } else {
        gcp_grad_parallel(batch, &rows, LossFamily::Bernoulli)?
    };
    let acc = apply_update(model, state, batch, &grads, lr, adam)?;
    Ok(StepReport {
        loss: grads.loss,
        entries: batch.len(),
        transient_bytes: rows.heap_bytes() + grads.heap_bytes() + acc.heap_bytes(),
        touched_entities: acc.entity_rows.len(),
        touched_relations: acc.relation_rows.len(),
    })
}

/// Trains for `config.n_epochs` and returns the final factors. The observer
/// sees every epoch; an error from it stops training.
pub fn train<T: Real>(
    store: &TripleStore,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<FactorModel<T>, TrainError> {
    if store.is_empty() {
        return Err(TrainError::EmptyStore);
    }
    let mut trainer = Trainer::<T>::new(store.n_entities(), store.n_relations(), config.clone())?;
    for _ in 0..config.n_epochs {
        let telemetry = trainer.run_epoch(store)?;
        observer
            .on_epoch_end(&telemetry, trainer.model())
            .map_err(TrainError::Observer)?;
    }
    Ok(trainer.into_model())
}
