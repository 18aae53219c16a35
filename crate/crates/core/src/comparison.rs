//! Multi-level comparison of two encoded sentences and the prediction head.
//!
//! * word-word: cosine table between the (padded) word rows of both
//!   sentences, flattened row-major, then `σ(W_word · A + b_word)`;
//! * sentence-sentence: `cos ⊕ (e1 ⊙ e2) ⊕ |e1 − e2| ⊕ (W_neu (e1 ⊕ e2) + b_neu)`
//!   followed by `σ(W_sent · d + b_sent)`;
//! * word-sentence: for each word row `i` of the other sentence,
//!   `σ(W_ws (e ⊕ row_i) + b_ws)`; both directions are flattened,
//!   concatenated (s1-vs-words-of-s2 first) and squashed by
//!   `σ(W_ws2 · [..] + b_ws2)`.
//!
//! Sentences are padded with zero rows (or truncated) to a fixed length `L`
//! so that the flattened tables have a fixed width.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, NodeId, ParamId, ParamStore, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ComparisonMode {
    /// Word-word, sentence-sentence and word-sentence features.
    Multi,
    /// Sentence-sentence features only.
    Sentence,
}

impl ComparisonMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ComparisonMode::Multi => "multi",
            ComparisonMode::Sentence => "sentence",
        }
    }

    /// Table prefix (`M-` / `S-`).
    pub fn prefix(self) -> &'static str {
        match self {
            ComparisonMode::Multi => "M",
            ComparisonMode::Sentence => "S",
        }
    }
}

impl fmt::Display for ComparisonMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComparisonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "multi" | "m" => Ok(ComparisonMode::Multi),
            "sentence" | "s" => Ok(ComparisonMode::Sentence),
            other => Err(Error::Config(format!("unknown comparison mode `{other}`"))),
        }
    }
}

/// Widths of the comparison and head layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonDims {
    pub max_len: usize,
    pub d_neu: usize,
    pub word_out: usize,
    pub sent_out: usize,
    pub ws_out: usize,
    pub ws2_out: usize,
}

impl Default for ComparisonDims {
    fn default() -> Self {
        ComparisonDims {
            max_len: 32,
            d_neu: 128,
            word_out: 50,
            sent_out: 5,
            ws_out: 5,
            ws2_out: 100,
        }
    }
}

type Affine = (ParamId, ParamId);

fn register_affine<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    out: usize,
    inp: usize,
    rng: &mut R,
) -> Affine {
    let w = store.add_glorot(format!("{prefix}.W"), out, inp, rng);
    let b = store.add_constant(format!("{prefix}.b"), out, 0.0);
    (w, b)
}

/// Parameter layout of the comparison block.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub mode: ComparisonMode,
    pub max_len: usize,
    pub sentence_dim: usize,
    pub word_dim: usize,
    pub word: Option<Affine>,
    pub neu: Affine,
    pub sent: Affine,
    pub ws: Option<Affine>,
    pub ws2: Option<Affine>,
}

impl Comparison {
    pub fn register<R: Rng + ?Sized>(
        mode: ComparisonMode,
        sentence_dim: usize,
        word_dim: usize,
        dims: &ComparisonDims,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        let positive = [
            ("max_len", dims.max_len),
            ("d_neu", dims.d_neu),
            ("word_out", dims.word_out),
            ("sent_out", dims.sent_out),
            ("ws_out", dims.ws_out),
            ("ws2_out", dims.ws2_out),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        let multi = mode == ComparisonMode::Multi;
        let l = dims.max_len;
        let word = multi.then(|| register_affine(store, "compare.word", dims.word_out, l * l, rng));
        let neu = register_affine(store, "compare.neu", dims.d_neu, 2 * sentence_dim, rng);
        let sent = register_affine(
            store,
            "compare.sent",
            dims.sent_out,
            1 + 2 * sentence_dim + dims.d_neu,
            rng,
        );
        let ws = multi.then(|| {
            register_affine(
                store,
                "compare.ws",
                dims.ws_out,
                sentence_dim + word_dim,
                rng,
            )
        });
        let ws2 = multi
            .then(|| register_affine(store, "compare.ws2", dims.ws2_out, 2 * l * dims.ws_out, rng));
        Ok(Comparison {
            mode,
            max_len: l,
            sentence_dim,
            word_dim,
            word,
            neu,
            sent,
            ws,
            ws2,
        })
    }

    /// Width of the concatenated similarity vector fed to the head.
    pub fn output_dim(&self, store: &ParamStore) -> usize {
        let rows = |a: Option<Affine>| a.map_or(0, |(w, _)| store.get(w).rows());
        rows(self.word) + store.get(self.sent.0).rows() + rows(self.ws2)
    }

    /// First `L` rows, then zero rows up to `L`.
    pub fn pad_rows(&self, tape: &mut Tape, rows: &[NodeId]) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = rows.iter().take(self.max_len).copied().collect();
        while out.len() < self.max_len {
            out.push(tape.input(vec![0.0; self.word_dim]));
        }
        out
    }

    /// Cosine table of two padded row lists, flattened row-major.
    pub fn cosine_table(&self, tape: &mut Tape, s1: &[NodeId], s2: &[NodeId]) -> Result<NodeId> {
        let mut cells = Vec::with_capacity(s1.len() * s2.len());
        for &a in s1 {
            for &b in s2 {
                cells.push(tape.cosine(a, b)?);
            }
        }
        Ok(tape.concat(&cells))
    }

    pub fn word_word(&self, tape: &mut Tape, s1: &[NodeId], s2: &[NodeId]) -> Result<NodeId> {
        let (w, b) = self.word.ok_or_else(|| no_block("word-word"))?;
        self.check_rows(s1.len())?;
        self.check_rows(s2.len())?;
        let a = self.cosine_table(tape, s1, s2)?;
        let z = tape.linear(a, w, Some(b))?;
        Ok(tape.sigmoid(z))
    }

    /// The `d_sent` feature vector (before the sigmoid layer).
    pub fn sentence_features(&self, tape: &mut Tape, e1: NodeId, e2: NodeId) -> Result<NodeId> {
        let cos = tape.cosine(e1, e2)?;
        let mul = tape.mul(e1, e2)?;
        let abs = tape.abs_diff(e1, e2)?;
        let pair = tape.concat(&[e1, e2]);
        let neu = tape.linear(pair, self.neu.0, Some(self.neu.1))?;
        Ok(tape.concat(&[cos, mul, abs, neu]))
    }

    pub fn sentence_sentence(&self, tape: &mut Tape, e1: NodeId, e2: NodeId) -> Result<NodeId> {
        let d = self.sentence_features(tape, e1, e2)?;
        let z = tape.linear(d, self.sent.0, Some(self.sent.1))?;
        Ok(tape.sigmoid(z))
    }

    /// `L x ws_out` matrix (flattened) of sentence `e` against each word row.
    pub fn word_sentence_rows(
        &self,
        tape: &mut Tape,
        e: NodeId,
        rows: &[NodeId],
    ) -> Result<NodeId> {
        let (w, b) = self.ws.ok_or_else(|| no_block("word-sentence"))?;
        let mut out = Vec::with_capacity(rows.len());
        for &r in rows {
            let x = tape.concat(&[e, r]);
            let z = tape.linear(x, w, Some(b))?;
            out.push(tape.sigmoid(z));
        }
        Ok(tape.concat(&out))
    }

    pub fn word_sentence(
        &self,
        tape: &mut Tape,
        e1: NodeId,
        e2: NodeId,
        s1: &[NodeId],
        s2: &[NodeId],
    ) -> Result<NodeId> {
        let (w, b) = self.ws2.ok_or_else(|| no_block("word-sentence"))?;
        self.check_rows(s1.len())?;
        self.check_rows(s2.len())?;
        let m1 = self.word_sentence_rows(tape, e1, s2)?;
        let m2 = self.word_sentence_rows(tape, e2, s1)?;
        let x = tape.concat(&[m1, m2]);
        let z = tape.linear(x, w, Some(b))?;
        Ok(tape.sigmoid(z))
    }

    /// Full similarity vector `sim_word ⊕ sim_sent ⊕ sim_ws` (or just
    /// `sim_sent` in sentence-only mode).
    pub fn compare(
        &self,
        tape: &mut Tape,
        e1: NodeId,
        e2: NodeId,
        words1: &[NodeId],
        words2: &[NodeId],
    ) -> Result<NodeId> {
        let sim_sent = self.sentence_sentence(tape, e1, e2)?;
        if self.mode == ComparisonMode::Sentence {
            return Ok(sim_sent);
        }
        let p1 = self.pad_rows(tape, words1);
        let p2 = self.pad_rows(tape, words2);
        let sim_word = self.word_word(tape, &p1, &p2)?;
        let sim_ws = self.word_sentence(tape, e1, e2, &p1, &p2)?;
        Ok(tape.concat(&[sim_word, sim_sent, sim_ws]))
    }

    fn check_rows(&self, n: usize) -> Result<()> {
        if n != self.max_len {
            return Err(Error::shape("comparison rows", self.max_len, n));
        }
        Ok(())
    }
}

fn no_block(what: &str) -> Error {
    Error::Config(format!(
        "{what} comparison is disabled in sentence-only mode"
    ))
}

/// Two-layer prediction head: `σ(W_l1 sim + b_l1)`, dropout, `W_l2 h + b_l2`.
#[derive(Clone, Debug)]
pub struct Head {
    pub l1: Affine,
    pub l2: Affine,
    pub dropout: f64,
}

impl Head {
    pub fn register<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        outputs: usize,
        dropout: f64,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden == 0 || outputs == 0 {
            return Err(Error::Config("head dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} not in [0, 1)")));
        }
        let l1 = register_affine(store, "head.l1", hidden, input_dim, rng);
        let l2 = register_affine(store, "head.l2", outputs, hidden, rng);
        Ok(Head { l1, l2, dropout })
    }

    /// Pre-softmax logits.
    pub fn logits<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        sim: NodeId,
        training: bool,
        rng: &mut R,
    ) -> Result<NodeId> {
        let z = tape.linear(sim, self.l1.0, Some(self.l1.1))?;
        let h = tape.sigmoid(z);
        let h = tape.dropout(h, self.dropout, training, rng)?;
        tape.linear(h, self.l2.0, Some(self.l2.1))
    }
}

/// First `min(n, L)` rows of `m`, zero rows after.
pub fn pad_or_truncate(m: &Matrix, max_len: usize) -> Matrix {
    let mut out = Matrix::zeros(max_len, m.cols());
    for r in 0..m.rows().min(max_len) {
        out.row_mut(r).copy_from_slice(m.row(r));
    }
    out
}
