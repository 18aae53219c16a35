//! AdaDelta, the mini-batch loop and validation-based model selection.

pub mod checkpoint;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaldata::{classification_metrics, pearson};
use crate::model::{Example, Gold, Model};
use crate::numcore::rng::{stream, Stream};
use crate::numcore::{Grads, ParamStore};
use crate::objectives::Task;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Stop after this many epochs without a new best validation metric.
    pub patience: usize,
    pub shuffle: bool,
    /// L2 coefficient added to the gradient; 0 disables it.
    pub weight_decay: f64,
    /// Rescale the batch gradient to at most this global norm.
    pub clip_norm: Option<f64>,
    /// Stop as soon as the validation metric reaches this value.
    pub target_metric: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 30,
            epochs: 50,
            rho: 0.95,
            epsilon: 1e-6,
            seed: 1,
            patience: 10,
            shuffle: true,
            weight_decay: 0.0,
            clip_norm: None,
            target_metric: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho {} not in (0, 1)", self.rho)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay {} must be >= 0",
                self.weight_decay
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("clip_norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Decayed averages of squared gradients and squared updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaDeltaState {
    pub rho: f64,
    pub epsilon: f64,
    pub eg2: Grads,
    pub edx2: Grads,
}

impl AdaDeltaState {
    pub fn new(params: &ParamStore, rho: f64, epsilon: f64) -> Self {
        AdaDeltaState {
            rho,
            epsilon,
            eg2: params.zeros_like(),
            edx2: params.zeros_like(),
        }
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> Result<()> {
        if grads.len() != params.len() || self.eg2.len() != params.len() {
            return Err(Error::shape("adadelta_step", params.len(), grads.len()));
        }
        let (rho, eps) = (self.rho, self.epsilon);
        for (((p, g), eg2), edx2) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.eg2.iter_mut())
            .zip(self.edx2.iter_mut())
        {
            if p.value.shape() != g.shape() || g.shape() != eg2.shape() {
                return Err(Error::shape(
                    "adadelta_step",
                    format!("{}{:?}", p.name, p.value.shape()),
                    format!("{:?}", g.shape()),
                ));
            }
            let theta = p.value.as_mut_slice();
            let eg2 = eg2.as_mut_slice();
            let edx2 = edx2.as_mut_slice();
            for (i, &gi) in g.as_slice().iter().enumerate() {
                eg2[i] = rho * eg2[i] + (1.0 - rho) * gi * gi;
                let dx = -((edx2[i] + eps).sqrt() / (eg2[i] + eps).sqrt()) * gi;
                edx2[i] = rho * edx2[i] + (1.0 - rho) * dx * dx;
                theta[i] += dx;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's examples (training mode).
    pub loss: f64,
    /// Validation metric: Pearson r for similarity, accuracy otherwise.
    pub metric: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_params: ParamStore,
    pub best_state: AdaDeltaState,
    /// 1-based epoch of the retained parameters.
    pub best_epoch: usize,
    pub best_metric: Option<f64>,
    pub history: Vec<EpochRecord>,
    pub steps: usize,
}

/// Evaluation summary of a model on labelled examples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub pearson: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

impl Metrics {
    /// The model-selection metric.
    pub fn primary(&self) -> Option<f64> {
        self.pearson.or(self.accuracy)
    }
}

/// Predicts every example (in parallel, order preserved) and scores them.
pub fn evaluate(model: &Model, examples: &[Example]) -> Result<Metrics> {
    let preds = examples
        .par_iter()
        .map(|e| model.predict(&e.input))
        .collect::<Result<Vec<_>>>()?;
    match model.config.task {
        Task::Sts => {
            let mut gold = Vec::with_capacity(examples.len());
            for e in examples {
                match e.gold {
                    Gold::Score(s) => gold.push(s),
                    Gold::Label(_) => {
                        return Err(Error::Data("similarity data needs scores".into()))
                    }
                }
            }
            let pred: Vec<f64> = preds
                .iter()
                .map(|p| p.score.expect("sts prediction"))
                .collect();
            Ok(Metrics {
                pearson: Some(pearson(&pred, &gold)?),
                accuracy: None,
                f1: None,
            })
        }
        task => {
            let mut gold = Vec::with_capacity(examples.len());
            for e in examples {
                match e.gold {
                    Gold::Label(l) => gold.push(l),
                    Gold::Score(_) => {
                        return Err(Error::Data("classification data needs labels".into()))
                    }
                }
            }
            let pred: Vec<usize> = preds
                .iter()
                .map(|p| p.label.expect("class prediction"))
                .collect();
            let m = classification_metrics(&gold, &pred, task == Task::Paraphrase)?;
            Ok(Metrics {
                pearson: None,
                accuracy: Some(m.accuracy),
                f1: m.f1,
            })
        }
    }
}

fn selection_metric(model: &Model, valid: &[Example]) -> Result<f64> {
    match evaluate(model, valid) {
        Ok(m) => Ok(m.primary().unwrap_or(f64::NAN)),
        // Constant predictions leave Pearson undefined; the epoch simply
        // cannot become the best one.
        Err(Error::Data(msg)) if msg.contains("constant") => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Trains `model` in place and returns the best parameters seen.
///
/// Without a validation set every epoch counts as an improvement, so the
/// final parameters are retained and early stopping never triggers.
/// `on_epoch` is called after each epoch, e.g. to stream the history.
pub fn train(
    model: &mut Model,
    train_set: &[Example],
    valid: Option<&[Example]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let mut state = AdaDeltaState::new(&model.params, cfg.rho, cfg.epsilon);
    let mut shuffle_rng = stream(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = stream(cfg.seed, Stream::Dropout);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best = (model.params.clone(), state.clone(), 0usize, None::<f64>);
    let mut since_best = 0;
    let mut steps = 0;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = model.params.zeros_like();
            let weight = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let loss = model.accumulate_gradient(
                    &model.params,
                    &train_set[i],
                    true,
                    &mut dropout_rng,
                    weight,
                    &mut grads,
                )?;
                batch_loss += loss;
            }
            if cfg.weight_decay > 0.0 {
                for (g, p) in grads.iter_mut().zip(model.params.iter()) {
                    for (g, t) in g.as_mut_slice().iter_mut().zip(p.1.value.as_slice()) {
                        *g += cfg.weight_decay * t;
                    }
                }
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite { epoch, batch: b });
            }
            if let Some(c) = cfg.clip_norm {
                let norm = grads.global_norm();
                if norm > c {
                    grads.scale(c / norm);
                }
            }
            state.step(&mut model.params, &grads)?;
            steps += 1;
            epoch_loss += batch_loss;
        }
        let metric = match valid {
            Some(v) => Some(selection_metric(model, v)?),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            loss: epoch_loss / train_set.len() as f64,
            metric,
        };
        log::debug!("epoch {epoch}: loss {:.6} metric {:?}", record.loss, metric);
        on_epoch(&record);
        history.push(record);

        let improved = match (metric, best.3) {
            (None, _) => true,
            (Some(m), None) => !m.is_nan(),
            (Some(m), Some(b)) => m > b,
        };
        if improved {
            best = (model.params.clone(), state.clone(), epoch, metric);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if let (Some(t), Some(m)) = (cfg.target_metric, metric) {
            if m >= t {
                break;
            }
        }
        if valid.is_some() && since_best >= cfg.patience {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    let (best_params, best_state, best_epoch, best_metric) = best;
    Ok(TrainOutcome {
        best_params,
        best_state,
        best_epoch,
        best_metric,
        history,
        steps,
    })
}
