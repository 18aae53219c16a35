//! Sentence-pair datasets, tokenization and evaluation metrics.
//!
//! Pair files are UTF-8 TSV with one example per line:
//! `sentence1 TAB sentence2 TAB gold`. Gold is a decimal score for the
//! similarity task, `entailment|contradiction|neutral` (any case) for
//! entailment, and `0|1` for paraphrase.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::embeddings::FusedLexicon;
use crate::error::{Error, Result};
use crate::model::{Example, Gold, PairInput};
use crate::objectives::Task;

#[derive(Clone, Debug, PartialEq)]
pub struct SentencePairExample {
    pub tokens1: Vec<String>,
    pub tokens2: Vec<String>,
    pub gold_score: Option<f64>,
    pub gold_label: Option<usize>,
}

impl SentencePairExample {
    pub fn gold(&self) -> Gold {
        match (self.gold_score, self.gold_label) {
            (Some(s), _) => Gold::Score(s),
            (None, Some(l)) => Gold::Label(l),
            (None, None) => unreachable!("examples always carry a gold value"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub task: Task,
    pub examples: Vec<SentencePairExample>,
    pub label_names: Vec<String>,
    pub vocab: BTreeSet<String>,
}

impl PairDataset {
    pub fn new(task: Task, examples: Vec<SentencePairExample>) -> Self {
        let vocab = examples
            .iter()
            .flat_map(|e| e.tokens1.iter().chain(&e.tokens2).cloned())
            .collect();
        PairDataset {
            task,
            examples,
            label_names: task.label_names().iter().map(|s| s.to_string()).collect(),
            vocab,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Looks up fused word vectors for every example.
    pub fn prepare(&self, lex: &FusedLexicon) -> Vec<Example> {
        self.examples
            .iter()
            .map(|e| Example {
                input: PairInput::lookup(lex, &e.tokens1, &e.tokens2),
                gold: e.gold(),
            })
            .collect()
    }

    /// Serializes back to the TSV format (tokens joined by single spaces).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            let gold = match (e.gold_score, e.gold_label) {
                (Some(s), _) => format!("{s}"),
                (None, Some(l)) => self.label_names[l].clone(),
                (None, None) => unreachable!(),
            };
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.tokens1.join(" "),
                e.tokens2.join(" "),
                gold
            ));
        }
        out
    }
}

fn is_ascii_punct(c: char) -> bool {
    c.is_ascii_punctuation()
}

/// Lowercases, splits on whitespace and peels leading/trailing ASCII
/// punctuation into separate one-character tokens. Internal punctuation
/// (`don't`, `3.5`) stays attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let start = chars.iter().position(|&c| !is_ascii_punct(c));
        let Some(start) = start else {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        };
        let end = chars
            .iter()
            .rposition(|&c| !is_ascii_punct(c))
            .expect("start exists")
            + 1;
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

fn parse_label(task: Task, raw: &str) -> Option<usize> {
    let key = raw.trim().to_lowercase();
    task.label_names().iter().position(|n| *n == key)
}

pub fn parse_pairs(text: &str, task: Task, path: &Path, lenient: bool) -> Result<PairDataset> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, task) {
            Ok(e) => examples.push(e),
            Err(msg) => {
                let err = Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg,
                };
                if !lenient {
                    return Err(err);
                }
                log::warn!("skipping malformed line: {err}");
            }
        }
    }
    if examples.is_empty() {
        return Err(Error::Data(format!("{}: no examples", path.display())));
    }
    Ok(PairDataset::new(task, examples))
}

fn parse_line(line: &str, task: Task) -> std::result::Result<SentencePairExample, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!(
            "expected 3 tab-separated fields, found {}",
            fields.len()
        ));
    }
    let tokens1 = tokenize(fields[0]);
    let tokens2 = tokenize(fields[1]);
    if tokens1.is_empty() || tokens2.is_empty() {
        return Err("empty sentence after tokenization".into());
    }
    let (gold_score, gold_label) = match task {
        Task::Sts => {
            let s: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| format!("invalid score `{}`", fields[2].trim()))?;
            if !s.is_finite() {
                return Err(format!("non-finite score `{}`", fields[2].trim()));
            }
            (Some(s), None)
        }
        _ => {
            let l = parse_label(task, fields[2])
                .ok_or_else(|| format!("unknown label `{}` for {task}", fields[2].trim()))?;
            (None, Some(l))
        }
    };
    Ok(SentencePairExample {
        tokens1,
        tokens2,
        gold_score,
        gold_label,
    })
}

pub fn load_pairs(path: &Path, task: Task, lenient: bool) -> Result<PairDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, task, path, lenient)
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("pearson", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::Data("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Data(
            "correlation undefined for constant input".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// F1 of class 1; only for binary tasks.
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Accuracy, plus precision/recall/F1 of the positive class (index 1) when
/// `binary` is set.
pub fn classification_metrics(
    gold: &[usize],
    pred: &[usize],
    binary: bool,
) -> Result<ClassificationMetrics> {
    if gold.len() != pred.len() {
        return Err(Error::shape(
            "classification_metrics",
            gold.len(),
            pred.len(),
        ));
    }
    if gold.is_empty() {
        return Err(Error::Data("no predictions to score".into()));
    }
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    let accuracy = correct as f64 / gold.len() as f64;
    if !binary {
        return Ok(ClassificationMetrics {
            accuracy,
            f1: None,
            precision: None,
            recall: None,
        });
    }
    let tp = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| **g == 1 && **p == 1)
        .count() as f64;
    let fp = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| **g != 1 && **p == 1)
        .count() as f64;
    let fn_ = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| **g == 1 && **p != 1)
        .count() as f64;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        accuracy,
        f1: Some(f1),
        precision: Some(precision),
        recall: Some(recall),
    })
}
