//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "PAIRSIM\0"
//! version    u32      currently 1
//! meta_len   u32      then meta_len bytes of UTF-8 `key=value\n` lines
//! n_params   u32
//! n_params × { name_len u32, name bytes, rows u32, cols u32, rows*cols f64 }
//! has_state  u8       1 if optimizer state follows
//! [rho f64, epsilon f64, Eg2 values, Edx2 values]   same order and shapes
//! end        4 bytes  "END\0"
//! ```
//!
//! Parameters appear in the model's canonical registration order: encoder,
//! comparison block, head.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::comparison::ComparisonDims;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::numcore::{Matrix, ParamStore};
use crate::objectives::ScoreSpec;

use super::AdaDeltaState;

const MAGIC: &[u8; 8] = b"PAIRSIM\0";
const END: &[u8; 4] = b"END\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: ParamStore,
    pub state: Option<AdaDeltaState>,
}

/// Metadata keys describing every dimension of the model.
pub fn config_meta(cfg: &ModelConfig) -> BTreeMap<String, String> {
    let d = &cfg.dims;
    let emb: Vec<String> = cfg.emb_dims.iter().map(|v| v.to_string()).collect();
    [
        ("task", cfg.task.to_string()),
        ("encoder", cfg.encoder.to_string()),
        ("comparison", cfg.comparison.as_str().to_string()),
        ("emb_dims", emb.join(",")),
        ("filters", cfg.filters.to_string()),
        ("lstm_dim", cfg.lstm_dim.to_string()),
        ("max_len", d.max_len.to_string()),
        ("d_neu", d.d_neu.to_string()),
        ("word_out", d.word_out.to_string()),
        ("sent_out", d.sent_out.to_string()),
        ("ws_out", d.ws_out.to_string()),
        ("ws2_out", d.ws2_out.to_string()),
        ("hidden", cfg.hidden.to_string()),
        ("dropout", cfg.dropout.to_string()),
        ("score_k", cfg.score.k.to_string()),
        ("raw_min", cfg.score.raw_min.to_string()),
        ("raw_max", cfg.score.raw_max.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Checkpoint {
    pub fn new(model: &Model, state: Option<AdaDeltaState>, extra: &[(&str, String)]) -> Self {
        let mut meta = config_meta(&model.config);
        for (k, v) in extra {
            meta.insert(k.to_string(), v.clone());
        }
        Checkpoint {
            meta,
            params: model.params.clone(),
            state,
        }
    }

    fn field(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("metadata key `{key}` missing")))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.field(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("metadata `{key}` has invalid value `{raw}`")))
    }

    /// Model configuration recorded in the metadata.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let emb_dims = self
            .field("emb_dims")?
            .split(',')
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Checkpoint("metadata `emb_dims` is malformed".into()))?;
        Ok(ModelConfig {
            task: self.field("task")?.parse()?,
            encoder: self.field("encoder")?.parse()?,
            comparison: self.field("comparison")?.parse()?,
            emb_dims,
            filters: self.parsed("filters")?,
            lstm_dim: self.parsed("lstm_dim")?,
            dims: ComparisonDims {
                max_len: self.parsed("max_len")?,
                d_neu: self.parsed("d_neu")?,
                word_out: self.parsed("word_out")?,
                sent_out: self.parsed("sent_out")?,
                ws_out: self.parsed("ws_out")?,
                ws2_out: self.parsed("ws2_out")?,
            },
            hidden: self.parsed("hidden")?,
            dropout: self.parsed("dropout")?,
            score: ScoreSpec::new(
                self.parsed("score_k")?,
                self.parsed("raw_min")?,
                self.parsed("raw_max")?,
            )?,
        })
    }

    /// Fails with the first metadata entry that disagrees with `cfg`.
    /// Dropout is a training-time setting and is not compared.
    pub fn check_config(&self, cfg: &ModelConfig) -> Result<()> {
        for (key, want) in config_meta(cfg) {
            if key == "dropout" {
                continue;
            }
            let have = self.field(&key)?;
            if have != want {
                return Err(Error::DimMismatch {
                    key,
                    checkpoint: have.to_string(),
                    config: want,
                });
            }
        }
        Ok(())
    }

    /// Rebuilds the model from the recorded configuration.
    pub fn into_model(self) -> Result<Model> {
        let cfg = self.model_config()?;
        Model::with_params(cfg, self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let meta: String = self
            .meta
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        put_u32(&mut out, meta.len());
        out.extend_from_slice(meta.as_bytes());
        put_u32(&mut out, self.params.len());
        for (_, p) in self.params.iter() {
            put_u32(&mut out, p.name.len());
            out.extend_from_slice(p.name.as_bytes());
            put_u32(&mut out, p.value.rows());
            put_u32(&mut out, p.value.cols());
            put_f64s(&mut out, p.value.as_slice());
        }
        match &self.state {
            None => out.push(0),
            Some(st) => {
                out.push(1);
                put_f64s(&mut out, &[st.rho, st.epsilon]);
                for m in st.eg2.iter().chain(st.edx2.iter()) {
                    put_f64s(&mut out, m.as_slice());
                }
            }
        }
        out.extend_from_slice(END);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} unsupported (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len, "metadata")?)
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let mut meta = BTreeMap::new();
        for line in meta_text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("malformed metadata line `{line}`")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let n = r.u32("parameter count")?;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "parameter name")?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            let data = r.f64s(rows * cols, &name)?;
            if params.id(&name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
            }
            params.add(name, Matrix::from_vec(rows, cols, data)?);
        }
        let state = match r.take(1, "state flag")?[0] {
            0 => None,
            1 => {
                let head = r.f64s(2, "optimizer constants")?;
                let mut eg2 = params.zeros_like();
                let mut edx2 = params.zeros_like();
                for m in eg2.iter_mut().chain(edx2.iter_mut()) {
                    let vals = r.f64s(m.len(), "optimizer state")?;
                    m.as_mut_slice().copy_from_slice(&vals);
                }
                Some(AdaDeltaState {
                    rho: head[0],
                    epsilon: head[1],
                    eg2,
                    edx2,
                })
            }
            f => return Err(Error::Checkpoint(format!("invalid state flag {f}"))),
        };
        if r.take(4, "end marker")? != END {
            return Err(Error::Checkpoint("missing end marker".into()));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after end marker",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            meta,
            params,
            state,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!(
                "truncated file: {what} needs {n} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint(format!("{what}: size overflow")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
