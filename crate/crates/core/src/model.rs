//! Full sentence-pair model: encoder, comparison block and head over one
//! parameter store.

use rand::Rng;

use crate::comparison::{Comparison, ComparisonDims, ComparisonMode, Head};
use crate::embeddings::FusedLexicon;
use crate::encoder::{Encoder, EncoderKind};
use crate::error::{Error, Result};
use crate::numcore::rng::{stream, Stream};
use crate::numcore::{Grads, NodeId, Objective, ParamStore, Prng, Tape};
use crate::objectives::{argmax, decode_score, sparse_target, ScoreSpec, Task};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub task: Task,
    pub encoder: EncoderKind,
    pub comparison: ComparisonMode,
    /// Dimension of each pre-trained table, in fusion order.
    pub emb_dims: Vec<usize>,
    pub filters: usize,
    pub lstm_dim: usize,
    pub dims: ComparisonDims,
    pub hidden: usize,
    pub dropout: f64,
    pub score: ScoreSpec,
}

impl ModelConfig {
    /// Full-size configuration: 1600 filters, 1600 LSTM units, five tables.
    pub fn full_size(task: Task) -> Self {
        ModelConfig {
            task,
            encoder: EncoderKind::MaxLstm,
            comparison: ComparisonMode::Multi,
            emb_dims: vec![300, 300, 300, 400, 300],
            filters: 1600,
            lstm_dim: 1600,
            dims: ComparisonDims::default(),
            hidden: 250,
            dropout: 0.5,
            score: ScoreSpec::stsb(),
        }
    }

    /// Small dimensions for tests: two tables (5 + 3), H = l = 16, L = 4,
    /// d_neu = 8, dropout off.
    pub fn desk(task: Task) -> Self {
        ModelConfig {
            emb_dims: vec![5, 3],
            dropout: 0.0,
            filters: 16,
            lstm_dim: 16,
            dims: ComparisonDims {
                max_len: 4,
                d_neu: 8,
                ..ComparisonDims::default()
            },
            ..ModelConfig::full_size(task)
        }
    }

    pub fn input_dim(&self) -> usize {
        self.emb_dims.iter().sum()
    }

    /// Number of head outputs: score levels or classes.
    pub fn outputs(&self) -> usize {
        match self.task {
            Task::Sts => self.score.k,
            t => t.label_names().len(),
        }
    }
}

/// Parameter ids of every block; independent of the parameter values.
#[derive(Clone, Debug)]
pub struct Layout {
    pub encoder: Encoder,
    pub comparison: Comparison,
    pub head: Head,
}

/// Fused word vectors of both sentences of a pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairInput {
    pub words1: Vec<Vec<f64>>,
    pub words2: Vec<Vec<f64>>,
}

impl PairInput {
    pub fn lookup(lex: &FusedLexicon, tokens1: &[String], tokens2: &[String]) -> Self {
        PairInput {
            words1: tokens1.iter().map(|t| lex.lookup(t)).collect(),
            words2: tokens2.iter().map(|t| lex.lookup(t)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gold {
    /// Score in the dataset's native range.
    Score(f64),
    Label(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: PairInput,
    pub gold: Gold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    /// Decoded score in the native range (similarity task).
    pub score: Option<f64>,
    /// Arg-max class (classification tasks).
    pub label: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: ParamStore,
}

impl Model {
    /// Fresh model initialized from the `init` stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, Stream::Init);
        let mut params = ParamStore::new();
        let layout = build_layout(&config, &mut params, &mut rng)?;
        Ok(Model {
            config,
            layout,
            params,
        })
    }

    /// Model with the given parameter values; names and shapes must match
    /// the layout implied by `config`.
    pub fn with_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Model::new(config, 0)?;
        if model.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for ((_, want), (_, got)) in model.params.iter().zip(params.iter()) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match layout entry {} {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn logits(
        &self,
        tape: &mut Tape,
        input: &PairInput,
        training: bool,
        rng: &mut Prng,
    ) -> Result<NodeId> {
        let l = &self.layout;
        let s1 = l.encoder.encode(tape, &input.words1)?;
        let s2 = l.encoder.encode(tape, &input.words2)?;
        let sim = l
            .comparison
            .compare(tape, s1.sentence, s2.sentence, &s1.words, &s2.words)?;
        l.head.logits(tape, sim, training, rng)
    }

    pub fn loss_node(&self, tape: &mut Tape, logits: NodeId, gold: Gold) -> Result<NodeId> {
        match (self.config.task, gold) {
            (Task::Sts, Gold::Score(raw)) => {
                let y = self.config.score.to_mapped(raw);
                let target = sparse_target(y, self.config.score.k)?;
                tape.kl_loss(logits, &target.p)
            }
            (Task::Sts, Gold::Label(_)) => Err(Error::Data(
                "similarity task needs a score, got a label".into(),
            )),
            (_, Gold::Label(c)) => tape.ce_loss(logits, c),
            (_, Gold::Score(_)) => Err(Error::Data(
                "classification task needs a label, got a score".into(),
            )),
        }
    }

    /// Loss of one example evaluated with `params` (same layout as
    /// `self.params`); accumulates `weight * ∂loss/∂θ` into `grads`.
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_gradient(
        &self,
        params: &ParamStore,
        example: &Example,
        training: bool,
        rng: &mut Prng,
        weight: f64,
        grads: &mut Grads,
    ) -> Result<f64> {
        let mut tape = Tape::new(params);
        let z = self.logits(&mut tape, &example.input, training, rng)?;
        let loss = self.loss_node(&mut tape, z, example.gold)?;
        tape.backward(loss, weight, grads);
        Ok(tape.scalar(loss))
    }

    /// Mean inference-mode loss over `batch` with parameter values `params`.
    pub fn mean_loss(&self, params: &ParamStore, batch: &[Example]) -> Result<f64> {
        let mut rng = stream(0, Stream::Dropout);
        let mut total = 0.0;
        for ex in batch {
            let mut tape = Tape::new(params);
            let z = self.logits(&mut tape, &ex.input, false, &mut rng)?;
            let loss = self.loss_node(&mut tape, z, ex.gold)?;
            total += tape.scalar(loss);
        }
        Ok(total / batch.len() as f64)
    }

    pub fn predict(&self, input: &PairInput) -> Result<Prediction> {
        let mut rng = stream(0, Stream::Dropout);
        let mut tape = Tape::new(&self.params);
        let z = self.logits(&mut tape, input, false, &mut rng)?;
        let logits = tape.value(z).to_vec();
        let (score, label) = match self.config.task {
            Task::Sts => (Some(decode_score(&logits, &self.config.score)?), None),
            _ => (None, Some(argmax(&logits))),
        };
        Ok(Prediction {
            logits,
            score,
            label,
        })
    }

    /// Inference-mode mean loss over a batch as a checkable objective.
    pub fn objective<'a>(&'a self, batch: &'a [Example]) -> BatchObjective<'a> {
        BatchObjective { model: self, batch }
    }
}

fn build_layout<R: Rng + ?Sized>(
    config: &ModelConfig,
    params: &mut ParamStore,
    rng: &mut R,
) -> Result<Layout> {
    if config.emb_dims.is_empty() || config.emb_dims.contains(&0) {
        return Err(Error::Config(format!(
            "embedding dimensions {:?} must be nonempty and positive",
            config.emb_dims
        )));
    }
    let encoder = Encoder::register(
        config.encoder,
        config.input_dim(),
        config.filters,
        config.lstm_dim,
        params,
        rng,
    )?;
    let comparison = Comparison::register(
        config.comparison,
        encoder.sentence_dim(params),
        encoder.word_dim(params),
        &config.dims,
        params,
        rng,
    )?;
    let head = Head::register(
        comparison.output_dim(params),
        config.hidden,
        config.outputs(),
        config.dropout,
        params,
        rng,
    )?;
    Ok(Layout {
        encoder,
        comparison,
        head,
    })
}

/// Mean loss of a fixed batch, dropout off.
pub struct BatchObjective<'a> {
    model: &'a Model,
    batch: &'a [Example],
}

impl Objective for BatchObjective<'_> {
    fn value(&self, params: &ParamStore) -> f64 {
        self.model.mean_loss(params, self.batch).unwrap_or(f64::NAN)
    }

    fn gradient(&self, params: &ParamStore) -> Grads {
        let mut grads = params.zeros_like();
        let mut rng = stream(0, Stream::Dropout);
        let w = 1.0 / self.batch.len() as f64;
        for ex in self.batch {
            // shape errors surface through value() as NaN
            let _ = self
                .model
                .accumulate_gradient(params, ex, false, &mut rng, w, &mut grads);
        }
        grads
    }
}
