//! Sentence encoders.
//!
//! The main encoder turns each fused word vector into a multi-aspect vector
//! `σ(R e + b_r)` (H width-one filters), then builds the sentence vector as
//! the column-wise max over words concatenated with the final LSTM hidden
//! state. The four baselines (word average, projected average, plain LSTM,
//! max-pooled filters) share the same interface so the comparison stack can
//! be reused unchanged.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::embeddings::FusedLexicon;
use crate::error::{Error, Result};
use crate::numcore::{Matrix, NodeId, ParamId, ParamStore, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    WordAvg,
    ProjAvg,
    Lstm,
    MaxCnn,
    MaxLstm,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 5] = [
        EncoderKind::WordAvg,
        EncoderKind::ProjAvg,
        EncoderKind::Lstm,
        EncoderKind::MaxCnn,
        EncoderKind::MaxLstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::WordAvg => "word_avg",
            EncoderKind::ProjAvg => "proj_avg",
            EncoderKind::Lstm => "lstm",
            EncoderKind::MaxCnn => "maxcnn",
            EncoderKind::MaxLstm => "maxlstm",
        }
    }

    /// Human-readable name as used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            EncoderKind::WordAvg => "Word Average",
            EncoderKind::ProjAvg => "Project Average",
            EncoderKind::Lstm => "LSTM",
            EncoderKind::MaxCnn => "Max-CNN",
            EncoderKind::MaxLstm => "MaxLSTM-CNN",
        }
    }

    /// Whether per-word rows are multi-aspect vectors (width H) rather than
    /// raw fused embeddings.
    pub fn uses_filters(self) -> bool {
        matches!(self, EncoderKind::MaxCnn | EncoderKind::MaxLstm)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "word_avg" => Ok(EncoderKind::WordAvg),
            "proj_avg" => Ok(EncoderKind::ProjAvg),
            "lstm" | "lstm_only" => Ok(EncoderKind::Lstm),
            "maxcnn" | "maxcnn_only" | "max-cnn" => Ok(EncoderKind::MaxCnn),
            "maxlstm" | "maxlstm-cnn" | "maxlstm_cnn" => Ok(EncoderKind::MaxLstm),
            other => Err(Error::Config(format!("unknown encoder `{other}`"))),
        }
    }
}

/// Gate parameters of one LSTM layer (input, forget, output, candidate).
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_i: ParamId,
    pub w_f: ParamId,
    pub w_o: ParamId,
    pub w_u: ParamId,
    pub u_i: ParamId,
    pub u_f: ParamId,
    pub u_o: ParamId,
    pub u_u: ParamId,
    pub b_i: ParamId,
    pub b_f: ParamId,
    pub b_o: ParamId,
    pub b_u: ParamId,
    pub input_dim: usize,
    pub dim: usize,
}

impl LstmParams {
    /// Glorot-uniform weights, zero biases except the forget gate at 1.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut w = |g: &str| store.add_glorot(format!("{prefix}.W_{g}"), dim, input_dim, rng);
        let (w_i, w_f, w_o, w_u) = (w("i"), w("f"), w("o"), w("u"));
        let mut u = |g: &str| store.add_glorot(format!("{prefix}.U_{g}"), dim, dim, rng);
        let (u_i, u_f, u_o, u_u) = (u("i"), u("f"), u("o"), u("u"));
        let b_i = store.add_constant(format!("{prefix}.b_i"), dim, 0.0);
        let b_f = store.add_constant(format!("{prefix}.b_f"), dim, 1.0);
        let b_o = store.add_constant(format!("{prefix}.b_o"), dim, 0.0);
        let b_u = store.add_constant(format!("{prefix}.b_u"), dim, 0.0);
        LstmParams {
            w_i,
            w_f,
            w_o,
            w_u,
            u_i,
            u_f,
            u_o,
            u_u,
            b_i,
            b_f,
            b_o,
            b_u,
            input_dim,
            dim,
        }
    }

    /// Runs the recurrence from `h_0 = c_0 = 0` and returns `h_n`.
    pub fn run(&self, tape: &mut Tape, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence("lstm"));
        }
        let mut h = tape.input(vec![0.0; self.dim]);
        let mut c = tape.input(vec![0.0; self.dim]);
        for &x in inputs {
            let gate = |tape: &mut Tape, w, u, b| -> Result<NodeId> {
                let wx = tape.linear(x, w, Some(b))?;
                let uh = tape.linear(h, u, None)?;
                tape.add(wx, uh)
            };
            let i = gate(tape, self.w_i, self.u_i, self.b_i)?;
            let i = tape.sigmoid(i);
            let f = gate(tape, self.w_f, self.u_f, self.b_f)?;
            let f = tape.sigmoid(f);
            let o = gate(tape, self.w_o, self.u_o, self.b_o)?;
            let o = tape.sigmoid(o);
            let u = gate(tape, self.w_u, self.u_u, self.b_u)?;
            let u = tape.tanh(u);
            let fc = tape.mul(f, c)?;
            let iu = tape.mul(i, u)?;
            c = tape.add(fc, iu)?;
            let tc = tape.tanh(c);
            h = tape.mul(o, tc)?;
        }
        Ok(h)
    }
}

/// Parameter layout of an encoder.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub kind: EncoderKind,
    pub input_dim: usize,
    /// Filter matrix `R` (H x input_dim) and per-filter bias.
    pub filters: Option<(ParamId, ParamId)>,
    pub lstm: Option<LstmParams>,
    /// Projection `W`, `b` of the projected-average baseline.
    pub proj: Option<(ParamId, ParamId)>,
}

/// Tape nodes produced by encoding one sentence.
#[derive(Clone, Debug)]
pub struct EncodedNodes {
    /// Per-word rows compared at the word level (multi-aspect vectors for the
    /// filter-based encoders, fused embeddings otherwise).
    pub words: Vec<NodeId>,
    pub sentence: NodeId,
    pub e_max: Option<NodeId>,
    pub e_lstm: Option<NodeId>,
}

impl Encoder {
    /// Registers the encoder parameters. `filters` and `lstm_dim` apply to
    /// the filter-based encoders; the plain LSTM baseline runs on fused
    /// embeddings with memory size equal to `input_dim`.
    pub fn register<R: Rng + ?Sized>(
        kind: EncoderKind,
        input_dim: usize,
        filters: usize,
        lstm_dim: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if kind.uses_filters() && filters == 0 {
            return Err(Error::Config("filters must be positive".into()));
        }
        if kind == EncoderKind::MaxLstm && lstm_dim == 0 {
            return Err(Error::Config("lstm_dim must be positive".into()));
        }
        let mut enc = Encoder {
            kind,
            input_dim,
            filters: None,
            lstm: None,
            proj: None,
        };
        match kind {
            EncoderKind::WordAvg => {}
            EncoderKind::ProjAvg => {
                let w = store.add_glorot("encoder.proj.W", input_dim, input_dim, rng);
                let b = store.add_constant("encoder.proj.b", input_dim, 0.0);
                enc.proj = Some((w, b));
            }
            EncoderKind::Lstm => {
                enc.lstm = Some(LstmParams::register(
                    store,
                    "encoder.lstm",
                    input_dim,
                    input_dim,
                    rng,
                ));
            }
            EncoderKind::MaxCnn | EncoderKind::MaxLstm => {
                let r = store.add_glorot("encoder.filters", filters, input_dim, rng);
                let b = store.add_constant("encoder.filter_bias", filters, 0.0);
                enc.filters = Some((r, b));
                if kind == EncoderKind::MaxLstm {
                    enc.lstm = Some(LstmParams::register(
                        store,
                        "encoder.lstm",
                        filters,
                        lstm_dim,
                        rng,
                    ));
                }
            }
        }
        Ok(enc)
    }

    /// Width of the sentence vector.
    pub fn sentence_dim(&self, store: &ParamStore) -> usize {
        let h = self.filters.map(|(r, _)| store.get(r).rows());
        let l = self.lstm.as_ref().map(|l| l.dim);
        match self.kind {
            EncoderKind::WordAvg | EncoderKind::ProjAvg => self.input_dim,
            EncoderKind::Lstm => l.unwrap_or(self.input_dim),
            EncoderKind::MaxCnn => h.unwrap_or(0),
            EncoderKind::MaxLstm => h.unwrap_or(0) + l.unwrap_or(0),
        }
    }

    /// Width of the per-word rows exposed for word-level comparison.
    pub fn word_dim(&self, store: &ParamStore) -> usize {
        match self.filters {
            Some((r, _)) => store.get(r).rows(),
            None => self.input_dim,
        }
    }

    /// Multi-aspect vector `σ(R e + b_r)` as a tape node.
    pub fn multi_aspect_node(&self, tape: &mut Tape, e_concat: NodeId) -> Result<NodeId> {
        let (r, b) = self
            .filters
            .ok_or_else(|| Error::Config(format!("{} encoder has no filters", self.kind)))?;
        let z = tape.linear(e_concat, r, Some(b))?;
        Ok(tape.sigmoid(z))
    }

    /// Encodes a sentence given its fused word vectors.
    pub fn encode(&self, tape: &mut Tape, word_vectors: &[Vec<f64>]) -> Result<EncodedNodes> {
        if word_vectors.is_empty() {
            return Err(Error::EmptySequence("encode_sentence"));
        }
        for v in word_vectors {
            if v.len() != self.input_dim {
                return Err(Error::shape("encode_sentence", self.input_dim, v.len()));
            }
        }
        let inputs: Vec<NodeId> = word_vectors.iter().map(|v| tape.input(v.clone())).collect();
        match self.kind {
            EncoderKind::WordAvg => {
                let s = tape.mean(&inputs)?;
                Ok(EncodedNodes {
                    words: inputs,
                    sentence: s,
                    e_max: None,
                    e_lstm: None,
                })
            }
            EncoderKind::ProjAvg => {
                let (w, b) = self.proj.expect("registered with projection");
                let mean = tape.mean(&inputs)?;
                let z = tape.linear(mean, w, Some(b))?;
                let s = tape.sigmoid(z);
                Ok(EncodedNodes {
                    words: inputs,
                    sentence: s,
                    e_max: None,
                    e_lstm: None,
                })
            }
            EncoderKind::Lstm => {
                let h = self
                    .lstm
                    .as_ref()
                    .expect("registered with lstm")
                    .run(tape, &inputs)?;
                Ok(EncodedNodes {
                    words: inputs,
                    sentence: h,
                    e_max: None,
                    e_lstm: Some(h),
                })
            }
            EncoderKind::MaxCnn | EncoderKind::MaxLstm => {
                let multi = inputs
                    .iter()
                    .map(|&x| self.multi_aspect_node(tape, x))
                    .collect::<Result<Vec<_>>>()?;
                let e_max = tape.max_over_time(&multi)?;
                let (sentence, e_lstm) = match &self.lstm {
                    Some(lstm) => {
                        let h = lstm.run(tape, &multi)?;
                        (tape.concat(&[e_max, h]), Some(h))
                    }
                    None => (e_max, None),
                };
                Ok(EncodedNodes {
                    words: multi,
                    sentence,
                    e_max: Some(e_max),
                    e_lstm,
                })
            }
        }
    }
}

/// Concrete values of a MaxLSTM-CNN sentence encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceEncoding {
    /// Row `t` is the multi-aspect vector of word `t`.
    pub s_multi: Matrix,
    pub e_max: Vec<f64>,
    pub e_lstm: Vec<f64>,
    /// `e_max ⊕ e_lstm`.
    pub e_s: Vec<f64>,
}

/// Multi-aspect vector of one fused word vector.
pub fn multi_aspect(enc: &Encoder, params: &ParamStore, e_concat: &[f64]) -> Result<Vec<f64>> {
    if e_concat.len() != enc.input_dim {
        return Err(Error::shape("multi_aspect", enc.input_dim, e_concat.len()));
    }
    let mut tape = Tape::new(params);
    let x = tape.input(e_concat.to_vec());
    let y = enc.multi_aspect_node(&mut tape, x)?;
    Ok(tape.value(y).to_vec())
}

/// Full sentence encoding for a MaxLSTM-CNN (or Max-CNN) encoder; `e_lstm`
/// is empty for the latter.
pub fn encode_sentence(
    enc: &Encoder,
    params: &ParamStore,
    lex: &FusedLexicon,
    tokens: &[String],
) -> Result<SentenceEncoding> {
    if !enc.kind.uses_filters() {
        return Err(Error::Config(format!(
            "encode_sentence needs a filter-based encoder, got {}",
            enc.kind
        )));
    }
    let vectors: Vec<Vec<f64>> = tokens.iter().map(|t| lex.lookup(t)).collect();
    let mut tape = Tape::new(params);
    let nodes = enc.encode(&mut tape, &vectors)?;
    let rows: Vec<&[f64]> = nodes.words.iter().map(|&n| tape.value(n)).collect();
    Ok(SentenceEncoding {
        s_multi: Matrix::from_rows(&rows)?,
        e_max: tape.value(nodes.e_max.expect("filter encoder")).to_vec(),
        e_lstm: nodes
            .e_lstm
            .map(|n| tape.value(n).to_vec())
            .unwrap_or_default(),
        e_s: tape.value(nodes.sentence).to_vec(),
    })
}

/// Sentence vector from any encoder kind.
pub fn encode_baseline(
    enc: &Encoder,
    params: &ParamStore,
    lex: &FusedLexicon,
    tokens: &[String],
) -> Result<Vec<f64>> {
    let vectors: Vec<Vec<f64>> = tokens.iter().map(|t| lex.lookup(t)).collect();
    let mut tape = Tape::new(params);
    let nodes = enc.encode(&mut tape, &vectors)?;
    Ok(tape.value(nodes.sentence).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::EmbeddingTable;
    use crate::numcore::ops::sigmoid_scalar;
    use crate::numcore::rng::{stream, Stream};

    fn lexicon(words: &[(&str, Vec<f64>)]) -> FusedLexicon {
        let dim = words[0].1.len();
        let mut t = EmbeddingTable::new("t", dim);
        for (w, v) in words {
            t.insert(w, v).unwrap();
        }
        FusedLexicon::new(vec![t], 0.1, 0).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn zero_filters_give_one_half() {
        let mut store = ParamStore::new();
        let enc = Encoder::register(
            EncoderKind::MaxCnn,
            3,
            4,
            0,
            &mut store,
            &mut stream(0, Stream::Init),
        )
        .unwrap();
        let (r, _) = enc.filters.unwrap();
        store.get_mut(r).fill(0.0);
        assert_eq!(
            multi_aspect(&enc, &store, &[1.0, -2.0, 3.0]).unwrap(),
            vec![0.5; 4]
        );
    }

    #[test]
    fn two_filter_toy_values() {
        let mut store = ParamStore::new();
        let enc = Encoder::register(
            EncoderKind::MaxCnn,
            3,
            2,
            0,
            &mut store,
            &mut stream(0, Stream::Init),
        )
        .unwrap();
        let (r, b) = enc.filters.unwrap();
        let rm = [[0.5, -1.0, 2.0], [0.0, 0.25, -0.75]];
        let bv = [0.1, -0.2];
        *store.get_mut(r) = Matrix::from_rows(&rm).unwrap();
        *store.get_mut(b) = Matrix::column(bv.to_vec());
        let e = [1.0, 2.0, -0.5];
        let mut expected = Vec::new();
        for k in 0..2 {
            let mut z = bv[k];
            for j in 0..3 {
                z += rm[k][j] * e[j];
            }
            expected.push(1.0 / (1.0 + (-z).exp()));
        }
        let got = multi_aspect(&enc, &store, &e).unwrap();
        for (g, x) in got.iter().zip(&expected) {
            assert!((g - x).abs() < 1e-15);
        }
        // single filter picking a zero coordinate
        let mut store1 = ParamStore::new();
        let enc1 = Encoder::register(
            EncoderKind::MaxCnn,
            3,
            1,
            0,
            &mut store1,
            &mut stream(0, Stream::Init),
        )
        .unwrap();
        let (r1, _) = enc1.filters.unwrap();
        *store1.get_mut(r1) = Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(
            multi_aspect(&enc1, &store1, &[0.0, 5.0, -3.0]).unwrap(),
            vec![sigmoid_scalar(0.0)]
        );
    }

    #[test]
    fn zero_lstm_gives_zero_state() {
        let mut store = ParamStore::new();
        let enc = Encoder::register(
            EncoderKind::MaxLstm,
            2,
            3,
            4,
            &mut store,
            &mut stream(1, Stream::Init),
        )
        .unwrap();
        for p in store.iter_mut() {
            if p.name.starts_with("encoder.lstm") {
                p.value.fill(0.0);
            }
        }
        let lex = lexicon(&[("a", vec![1.0, 2.0]), ("b", vec![-1.0, 0.5])]);
        let enc_s = encode_sentence(&enc, &store, &lex, &toks("a b a")).unwrap();
        assert_eq!(enc_s.e_lstm, vec![0.0; 4]);
        assert_eq!(enc_s.e_s.len(), 7);
    }

    #[test]
    fn single_word_max_is_the_word() {
        let mut store = ParamStore::new();
        let enc = Encoder::register(
            EncoderKind::MaxLstm,
            2,
            3,
            2,
            &mut store,
            &mut stream(2, Stream::Init),
        )
        .unwrap();
        let lex = lexicon(&[("a", vec![1.0, 2.0])]);
        let s = encode_sentence(&enc, &store, &lex, &toks("a")).unwrap();
        assert_eq!(s.e_max, multi_aspect(&enc, &store, &[1.0, 2.0]).unwrap());
        assert_eq!(s.e_max, s.s_multi.row(0));
        assert_eq!(&s.e_s[..3], &s.e_max[..]);
        assert_eq!(&s.e_s[3..], &s.e_lstm[..]);
    }

    #[test]
    fn empty_sentence_is_an_error() {
        let mut store = ParamStore::new();
        let enc = Encoder::register(
            EncoderKind::MaxLstm,
            2,
            3,
            2,
            &mut store,
            &mut stream(2, Stream::Init),
        )
        .unwrap();
        let lex = lexicon(&[("a", vec![1.0, 2.0])]);
        assert!(matches!(
            encode_sentence(&enc, &store, &lex, &[]),
            Err(Error::EmptySequence(_))
        ));
    }

    #[test]
    fn baselines() {
        let lex = lexicon(&[("a", vec![1.0, -2.0, 0.5]), ("b", vec![-1.0, 2.0, -0.5])]);
        let mut store = ParamStore::new();
        let avg = Encoder::register(
            EncoderKind::WordAvg,
            3,
            0,
            0,
            &mut store,
            &mut stream(0, Stream::Init),
        )
        .unwrap();
        assert_eq!(
            encode_baseline(&avg, &store, &lex, &toks("a")).unwrap(),
            vec![1.0, -2.0, 0.5]
        );
        assert_eq!(
            encode_baseline(&avg, &store, &lex, &toks("a b")).unwrap(),
            vec![0.0; 3]
        );

        let mut store = ParamStore::new();
        let proj = Encoder::register(
            EncoderKind::ProjAvg,
            3,
            0,
            0,
            &mut store,
            &mut stream(0, Stream::Init),
        )
        .unwrap();
        store.get_mut(proj.proj.unwrap().0).fill(0.0);
        assert_eq!(
            encode_baseline(&proj, &store, &lex, &toks("a b")).unwrap(),
            vec![0.5; 3]
        );

        let mut store = ParamStore::new();
        let lstm = Encoder::register(
            EncoderKind::Lstm,
            3,
            0,
            0,
            &mut store,
            &mut stream(0, Stream::Init),
        )
        .unwrap();
        assert_eq!(lstm.sentence_dim(&store), 3);
        assert_eq!(
            encode_baseline(&lstm, &store, &lex, &toks("a b"))
                .unwrap()
                .len(),
            3
        );

        let mut store = ParamStore::new();
        let cnn = Encoder::register(
            EncoderKind::MaxCnn,
            3,
            5,
            0,
            &mut store,
            &mut stream(0, Stream::Init),
        )
        .unwrap();
        assert_eq!(
            encode_baseline(&cnn, &store, &lex, &toks("b a"))
                .unwrap()
                .len(),
            5
        );
    }

    #[test]
    fn encoder_names_round_trip() {
        for k in EncoderKind::ALL {
            assert_eq!(k.as_str().parse::<EncoderKind>().unwrap(), k);
        }
        assert!("transformer".parse::<EncoderKind>().is_err());
    }
}
