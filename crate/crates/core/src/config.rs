//! Run configuration: `key = value` files plus command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::comparison::{ComparisonDims, ComparisonMode};
use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::objectives::{ScoreSpec, Task};
use crate::training::TrainConfig;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "PAIRSIM_CONFIG";

/// Every recognised key with its default, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("embeddings", ""),
    ("oov_scale", "0.1"),
    ("seed", "1"),
    ("task", "sts"),
    ("encoder", "maxlstm"),
    ("comparison", "multi"),
    ("filters", "1600"),
    ("lstm_dim", "1600"),
    ("max_len", "32"),
    ("d_neu", "128"),
    ("word_out", "50"),
    ("sent_out", "5"),
    ("ws_out", "5"),
    ("ws2_out", "100"),
    ("hidden", "250"),
    ("dropout", "0.5"),
    ("score_k", "6"),
    ("raw_min", "0"),
    ("raw_max", "5"),
    ("weight_decay", "0"),
    ("batch_size", "30"),
    ("epochs", "50"),
    ("patience", "10"),
    ("rho", "0.95"),
    ("epsilon", "1e-6"),
    ("clip_norm", "0"),
    ("shuffle", "true"),
    ("target_metric", ""),
    ("lenient", "false"),
    ("gradcheck_dims", "5,3"),
    (
        "bench_models",
        "S-word_avg,S-proj_avg,S-lstm,S-maxcnn,S-maxlstm,M-maxcnn,M-maxlstm",
    ),
    ("bench_epochs", "100"),
];

pub fn is_key(name: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == name)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v)| (*k, v.to_string())).collect(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{raw}`")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',').map(|v| parse_num(key, v)).collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let Some((k, _)) = KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        };
        self.values.insert(k, value.trim().to_string());
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    i + 1
                )));
            };
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}:{}: {msg}", path.display(), i + 1)),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("`{key}` is not a config key"))
    }

    /// Effective configuration, one `key = value` line per key.
    pub fn echo(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.values[k]))
            .collect()
    }

    /// Hex SHA-256 of [`RunConfig::echo`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.echo().as_bytes()))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        parse_num(key, self.get(key))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            v => Err(Error::Config(format!(
                "`{key}`: expected a boolean, got `{v}`"
            ))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.num("seed")
    }

    pub fn task(&self) -> Result<Task> {
        self.get("task").parse()
    }

    pub fn lenient(&self) -> Result<bool> {
        self.flag("lenient")
    }

    pub fn oov_scale(&self) -> Result<f64> {
        let s: f64 = self.num("oov_scale")?;
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Config(format!(
                "`oov_scale` must be finite and >= 0, got {s}"
            )));
        }
        Ok(s)
    }

    pub fn embedding_paths(&self) -> Result<Vec<PathBuf>> {
        let raw = self.get("embeddings");
        let paths: Vec<PathBuf> = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .collect();
        if paths.is_empty() {
            return Err(Error::Config("`embeddings` is not set".into()));
        }
        for p in &paths {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "`embeddings`: no such file {}",
                    p.display()
                )));
            }
        }
        Ok(paths)
    }

    pub fn gradcheck_dims(&self) -> Result<Vec<usize>> {
        parse_list("gradcheck_dims", self.get("gradcheck_dims"))
    }

    pub fn bench_epochs(&self) -> Result<usize> {
        self.num("bench_epochs")
    }

    /// Parsed `bench_models`: `M-` or `S-` prefix plus an encoder name.
    pub fn bench_models(&self) -> Result<Vec<(ComparisonMode, EncoderKind)>> {
        self.get("bench_models")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|entry| {
                let (mode, enc) = entry
                    .split_once('-')
                    .ok_or_else(|| Error::Config(format!("`bench_models`: bad entry `{entry}`")))?;
                Ok((mode.parse()?, enc.parse()?))
            })
            .collect()
    }

    pub fn model_config(&self, emb_dims: Vec<usize>) -> Result<ModelConfig> {
        let task = self.task()?;
        let cfg = ModelConfig {
            task,
            encoder: self.get("encoder").parse()?,
            comparison: self.get("comparison").parse()?,
            emb_dims,
            filters: self.num("filters")?,
            lstm_dim: self.num("lstm_dim")?,
            dims: ComparisonDims {
                max_len: self.num("max_len")?,
                d_neu: self.num("d_neu")?,
                word_out: self.num("word_out")?,
                sent_out: self.num("sent_out")?,
                ws_out: self.num("ws_out")?,
                ws2_out: self.num("ws2_out")?,
            },
            hidden: self.num("hidden")?,
            dropout: self.num("dropout")?,
            score: ScoreSpec::new(
                self.num("score_k")?,
                self.num("raw_min")?,
                self.num("raw_max")?,
            )?,
        };
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::Config(format!(
                "`dropout` {} not in [0, 1)",
                cfg.dropout
            )));
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let clip: f64 = self.num("clip_norm")?;
        let target = match self.get("target_metric") {
            "" => None,
            v => Some(parse_num("target_metric", v)?),
        };
        let cfg = TrainConfig {
            batch_size: self.num("batch_size")?,
            epochs: self.num("epochs")?,
            rho: self.num("rho")?,
            epsilon: self.num("epsilon")?,
            seed: self.seed()?,
            patience: self.num("patience")?,
            shuffle: self.flag("shuffle")?,
            weight_decay: self.num("weight_decay")?,
            clip_norm: (clip > 0.0).then_some(clip),
            target_metric: target,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses every key; the embedding dimensions are not known here so the
    /// model shape is checked with the toy dimensions.
    pub fn validate(&self) -> Result<()> {
        self.oov_scale()?;
        self.lenient()?;
        self.model_config(self.gradcheck_dims()?)?;
        self.train_config()?;
        self.bench_models()?;
        self.bench_epochs()?;
        Ok(())
    }
}

/// Splits `--key value` / `--key=value` pairs naming config keys out of
/// `args`; everything else is returned untouched. Dashes in key names are
/// accepted in place of underscores.
pub fn extract_overrides(args: &[String]) -> Result<(Vec<(String, String)>, Vec<String>)> {
    let mut overrides = Vec::new();
    let mut rest = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            rest.push(a.clone());
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n.replace('-', "_"), Some(v.to_string())),
            None => (body.replace('-', "_"), None),
        };
        if !is_key(&name) {
            rest.push(a.clone());
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .cloned()
                .ok_or_else(|| Error::Config(format!("`--{name}` needs a value")))?,
        };
        overrides.push((name, value));
    }
    Ok((overrides, rest))
}
