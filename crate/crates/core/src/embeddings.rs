//! Pre-trained word-vector tables and their fused (concatenated) view.
//!
//! Text format: an optional header line `count dim`, then one
//! `word v1 v2 ... v_dim` line per word. Words are lowercased on load; the
//! first occurrence of a duplicate wins.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numcore::rng::{keyed, Stream};

pub const DEFAULT_OOV_SCALE: f64 = 0.1;

pub fn normalize(word: &str) -> String {
    word.to_lowercase()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    name: String,
    dim: usize,
    source_path: Option<PathBuf>,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        EmbeddingTable {
            name: name.into(),
            dim,
            source_path: None,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Inserts a vector unless the (normalized) word is already present.
    /// Returns whether it was inserted.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::shape(
                "EmbeddingTable::insert",
                self.dim,
                vector.len(),
            ));
        }
        let key = normalize(word);
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        self.index.insert(key.clone(), self.words.len());
        self.words.push(key);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&normalize(word))
    }

    /// Vector for an already-normalized word.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// SHA-256 over name, dimension, words and raw vector bytes.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        self.hash_into(&mut h);
        h.finalize().into()
    }

    fn hash_into(&self, h: &mut Sha256) {
        h.update(self.name.as_bytes());
        h.update((self.dim as u64).to_le_bytes());
        for w in &self.words {
            h.update((w.len() as u64).to_le_bytes());
            h.update(w.as_bytes());
        }
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
    }
}

/// Loads one table from the word-vector text format.
pub fn load_table(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let mut table = parse_table(&name, &text, path, expected_dim)?;
    table.source_path = Some(path.to_path_buf());
    Ok(table)
}

pub fn parse_table(
    name: &str,
    text: &str,
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut dim = expected_dim;
    let mut table: Option<EmbeddingTable> = None;
    let mut values = Vec::new();
    let mut duplicates = 0usize;

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();

        if i == 0 && rest.len() == 1 {
            if let (Ok(_count), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                match dim {
                    Some(e) if e != d => {
                        return Err(err(lineno, format!("header dim {d}, expected {e}")))
                    }
                    _ => dim = Some(d),
                }
                continue;
            }
        }

        values.clear();
        for f in &rest {
            let v: f64 = f
                .parse()
                .map_err(|_| err(lineno, format!("non-numeric field `{f}`")))?;
            values.push(v);
        }
        let d = *dim.get_or_insert(values.len());
        if values.len() != d {
            return Err(err(
                lineno,
                format!("vector has {} values, expected {d}", values.len()),
            ));
        }
        if d == 0 {
            return Err(err(lineno, "empty vector".into()));
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(name, d));
        if !t.insert(word, &values)? {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!(
            "{}: {duplicates} duplicate words ignored (first occurrence kept)",
            path.display()
        );
    }
    match (table, dim) {
        (Some(t), _) => Ok(t),
        (None, Some(d)) if d > 0 => Ok(EmbeddingTable::new(name, d)),
        _ => Err(err(0, "no vectors and no header".into())),
    }
}

/// K tables viewed as one lookup returning `e1 ⊕ e2 ⊕ ... ⊕ eK`.
#[derive(Debug)]
pub struct FusedLexicon {
    tables: Vec<EmbeddingTable>,
    total_dim: usize,
    oov_scale: f64,
    seed: u64,
    oov_cache: RwLock<HashMap<String, Vec<f64>>>,
}

impl FusedLexicon {
    pub fn new(tables: Vec<EmbeddingTable>, oov_scale: f64, seed: u64) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::Config(
                "at least one embedding table is required".into(),
            ));
        }
        if !(oov_scale.is_finite() && oov_scale >= 0.0) {
            return Err(Error::Config(format!(
                "oov_scale {oov_scale} must be finite and >= 0"
            )));
        }
        let total_dim = tables.iter().map(EmbeddingTable::dim).sum();
        Ok(FusedLexicon {
            tables,
            total_dim,
            oov_scale,
            seed,
            oov_cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn load(paths: &[PathBuf], oov_scale: f64, seed: u64) -> Result<Self> {
        let tables = paths
            .iter()
            .map(|p| load_table(p, None))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tables, oov_scale, seed)
    }

    pub fn tables(&self) -> &[EmbeddingTable] {
        &self.tables
    }

    pub fn dims(&self) -> Vec<usize> {
        self.tables.iter().map(EmbeddingTable::dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Concatenated vector for `word`. Slices for tables that lack the word
    /// are uniform in `[-oov_scale, oov_scale]`, drawn from a stream keyed
    /// by (seed, table index, word), and cached.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        let key = normalize(word);
        let slices: Vec<Option<&[f64]>> = self.tables.iter().map(|t| t.get(&key)).collect();
        if slices.iter().all(Option::is_some) {
            return slices.into_iter().flatten().flatten().copied().collect();
        }
        if let Some(v) = self.oov_cache.read().expect("oov cache poisoned").get(&key) {
            return v.clone();
        }
        let mut out = Vec::with_capacity(self.total_dim);
        for (k, (table, slice)) in self.tables.iter().zip(slices).enumerate() {
            match slice {
                Some(s) => out.extend_from_slice(s),
                None => out.extend(self.oov_slice(k, &key, table.dim())),
            }
        }
        self.oov_cache
            .write()
            .expect("oov cache poisoned")
            .entry(key)
            .or_insert_with(|| out.clone());
        out
    }

    fn oov_slice(&self, table: usize, word: &str, dim: usize) -> Vec<f64> {
        let mut key = (table as u64).to_le_bytes().to_vec();
        key.extend_from_slice(word.as_bytes());
        let mut rng = keyed(self.seed, Stream::Oov, &key);
        let s = self.oov_scale;
        (0..dim).map(|_| s * rng.gen_range(-1.0..=1.0)).collect()
    }

    /// Hash over every table's content, in table order.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for t in &self.tables {
            t.hash_into(&mut h);
        }
        h.finalize().into()
    }

    pub fn coverage<'a, I>(&self, vocab: I) -> Result<CoverageReport>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let vocab: BTreeSet<String> = vocab.into_iter().map(normalize).collect();
        if vocab.is_empty() {
            return Err(Error::Data(
                "coverage requires a nonempty vocabulary".into(),
            ));
        }
        let n = vocab.len() as f64;
        let per_table = self
            .tables
            .iter()
            .map(|t| {
                let hit = vocab.iter().filter(|w| t.get(w).is_some()).count();
                (t.name().to_string(), hit as f64 / n)
            })
            .collect();
        let union_hits = vocab
            .iter()
            .filter(|w| self.tables.iter().any(|t| t.get(w).is_some()))
            .count();
        Ok(CoverageReport {
            per_table,
            union: union_hits as f64 / n,
            vocab_size: vocab.len(),
        })
    }
}

/// Fraction of a vocabulary present in each table and in their union.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub per_table: Vec<(String, f64)>,
    pub union: f64,
    pub vocab_size: usize,
}

impl CoverageReport {
    /// TSV rows: `table<TAB>percent`, one per table, then `union`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("embedding\tavailable_pct\n");
        for (name, f) in &self.per_table {
            out.push_str(&format!("{name}\t{:.2}\n", f * 100.0));
        }
        out.push_str(&format!("union\t{:.2}\n", self.union * 100.0));
        out
    }
}
