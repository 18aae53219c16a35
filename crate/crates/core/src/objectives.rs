//! Losses and decoders.
//!
//! Similarity scores are regressed through a distribution over the integer
//! levels `1..=K`: a gold score `y` becomes the two-point distribution with
//! `r · p = y`, the model is trained with `KL(p || softmax(logits))`, and
//! predictions are decoded as the expected level `r · softmax(logits)`.
//! Scores in a dataset's native range are mapped affinely onto `[1, K]`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::ops::{log_softmax, softmax};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Sts,
    Entailment,
    Paraphrase,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sts => "sts",
            Task::Entailment => "entailment",
            Task::Paraphrase => "paraphrase",
        }
    }

    /// Canonical label names, in class-index order.
    pub fn label_names(self) -> &'static [&'static str] {
        match self {
            Task::Sts => &[],
            Task::Entailment => &["entailment", "contradiction", "neutral"],
            Task::Paraphrase => &["0", "1"],
        }
    }

    pub fn is_regression(self) -> bool {
        self == Task::Sts
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sts" => Ok(Task::Sts),
            "entailment" => Ok(Task::Entailment),
            "paraphrase" => Ok(Task::Paraphrase),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Integer score levels `1..=k` and the dataset's native score range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreSpec {
    pub k: usize,
    pub raw_min: f64,
    pub raw_max: f64,
}

impl ScoreSpec {
    pub fn new(k: usize, raw_min: f64, raw_max: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("score_k must be >= 2, got {k}")));
        }
        if !(raw_min.is_finite() && raw_max.is_finite() && raw_min < raw_max) {
            return Err(Error::Config(format!(
                "raw score range [{raw_min}, {raw_max}] is not a proper interval"
            )));
        }
        Ok(ScoreSpec {
            k,
            raw_min,
            raw_max,
        })
    }

    /// STSB: native `[0, 5]` onto levels `1..=6`.
    pub fn stsb() -> Self {
        ScoreSpec {
            k: 6,
            raw_min: 0.0,
            raw_max: 5.0,
        }
    }

    /// SICK relatedness: native `[1, 5]`, identity map.
    pub fn sick() -> Self {
        ScoreSpec {
            k: 5,
            raw_min: 1.0,
            raw_max: 5.0,
        }
    }

    /// Level vector `r = [1, 2, ..., k]`.
    pub fn levels(&self) -> Vec<f64> {
        (1..=self.k).map(|i| i as f64).collect()
    }

    fn slope(&self) -> f64 {
        (self.k as f64 - 1.0) / (self.raw_max - self.raw_min)
    }

    pub fn to_mapped(&self, raw: f64) -> f64 {
        1.0 + (raw - self.raw_min) * self.slope()
    }

    pub fn to_raw(&self, mapped: f64) -> f64 {
        self.raw_min + (mapped - 1.0) / self.slope()
    }
}

/// Two-point distribution over levels `1..=k` whose mean is `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetDistribution {
    pub p: Vec<f64>,
}

pub fn sparse_target(y: f64, k: usize) -> Result<TargetDistribution> {
    let top = k as f64;
    if k < 2 || !(1.0..=top).contains(&y) {
        return Err(Error::Domain {
            value: y,
            lo: 1.0,
            hi: top,
        });
    }
    let mut p = vec![0.0; k];
    let fl = y.floor();
    // 0-based index of level floor(y)
    let i = fl as usize - 1;
    if i + 1 < k {
        p[i] = fl - y + 1.0;
        p[i + 1] = y - fl;
    } else {
        p[i] = 1.0;
    }
    Ok(TargetDistribution { p })
}

/// `Σ p_i (ln p_i − ln softmax(logits)_i)`, with `0 ln 0 = 0`.
pub fn kl_loss(target: &TargetDistribution, logits: &[f64]) -> Result<f64> {
    if target.p.len() != logits.len() {
        return Err(Error::shape("kl_loss", target.p.len(), logits.len()));
    }
    let lq = log_softmax(logits);
    Ok(target
        .p
        .iter()
        .zip(&lq)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, lq)| p * (p.ln() - lq))
        .sum())
}

/// `−ln softmax(logits)[gold]`.
pub fn ce_loss(gold: usize, logits: &[f64]) -> Result<f64> {
    if gold >= logits.len() {
        return Err(Error::Data(format!(
            "gold class {gold} out of range for {} outputs",
            logits.len()
        )));
    }
    Ok(-log_softmax(logits)[gold])
}

/// Expected level `r · softmax(logits)` in `[1, k]`.
pub fn decode_mapped(logits: &[f64]) -> f64 {
    softmax(logits)
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum()
}

/// Expected level mapped back to the native score range.
pub fn decode_score(logits: &[f64], spec: &ScoreSpec) -> Result<f64> {
    if logits.len() != spec.k {
        return Err(Error::shape("decode_score", spec.k, logits.len()));
    }
    Ok(spec.to_raw(decode_mapped(logits)))
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}
