use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_DIMENSION: usize = 300;
pub const DEFAULT_BUCKETS: usize = 8192;
const MIN_NGRAM: usize = 3;
const MAX_NGRAM: usize = 6;

/// What to do with tokens missing from the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum OovPolicy {
    /// Leave the token out of the mean.
    #[default]
    Skip,
    /// Count the token as a zero vector.
    Zero,
    /// Average hashed character 3..6-gram bucket vectors. Buckets are built from the
    /// in-vocabulary words that contain each n-gram.
    SubwordHash { buckets: usize },
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone)]
struct SubwordTable<T> {
    buckets: usize,
    vectors: Vec<T>,
    filled: Vec<bool>,
}

/// Static word vectors in row-major storage.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<T> {
    dimension: usize,
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    vectors: Vec<T>,
    oov_policy: OovPolicy,
    subword: Option<SubwordTable<T>>,
    checksum: String,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Builds a table from in-memory vectors. Later duplicates of a token are ignored.
    pub fn from_entries(dimension: usize, entries: Vec<(String, Vec<T>)>, oov_policy: OovPolicy) -> Result<Self> {
        let mut hasher = Sha256::new();
        hasher.update(format!("{} {}\n", entries.len(), dimension));
        let mut table = EmbeddingTable {
            dimension,
            index: HashMap::with_capacity(entries.len()),
            tokens: Vec::with_capacity(entries.len()),
            vectors: Vec::with_capacity(entries.len() * dimension),
            oov_policy,
            subword: None,
            checksum: String::new(),
        };
        for (token, v) in entries {
            if v.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(token));
            }
            hasher.update(format_line(&token, &v));
            table.push(token, v);
        }
        table.checksum = hex::encode(hasher.finalize());
        table.build_subwords();
        Ok(table)
    }

    fn push(&mut self, token: String, v: Vec<T>) {
        if self.index.contains_key(&token) {
            return;
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.vectors.extend(v);
    }

    fn build_subwords(&mut self) {
        let OovPolicy::SubwordHash { buckets } = self.oov_policy else {
            self.subword = None;
            return;
        };
        let buckets = buckets.max(1);
        let d = self.dimension;
        let mut sums = vec![T::zero(); buckets * d];
        let mut counts = vec![0usize; buckets];
        for (row, token) in self.tokens.iter().enumerate() {
            let v = &self.vectors[row * d..(row + 1) * d];
            for b in ngram_buckets(token, buckets) {
                counts[b] += 1;
                for (s, x) in sums[b * d..(b + 1) * d].iter_mut().zip(v) {
                    *s += *x;
                }
            }
        }
        for (b, &n) in counts.iter().enumerate() {
            if n > 0 {
                let n = T::of(n as f64);
                sums[b * d..(b + 1) * d].iter_mut().for_each(|s| *s /= n);
            }
        }
        self.subword = Some(SubwordTable {
            buckets,
            vectors: sums,
            filled: counts.iter().map(|&n| n > 0).collect(),
        });
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    pub fn with_oov_policy(mut self, policy: OovPolicy) -> Self {
        self.oov_policy = policy;
        self.build_subwords();
        self
    }

    /// SHA-256 of the word-vector text serialization.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn lookup(&self, token: &str) -> Option<&[T]> {
        self.index
            .get(token)
            .map(|&row| &self.vectors[row * self.dimension..(row + 1) * self.dimension])
    }

    fn subword_vector(&self, token: &str) -> Option<Vec<T>> {
        let sub = self.subword.as_ref()?;
        let d = self.dimension;
        let mut acc = vec![T::zero(); d];
        let mut n = 0usize;
        for b in ngram_buckets(token, sub.buckets) {
            if sub.filled[b] {
                n += 1;
                for (a, x) in acc.iter_mut().zip(&sub.vectors[b * d..(b + 1) * d]) {
                    *a += *x;
                }
            }
        }
        if n == 0 {
            return None;
        }
        let n = T::of(n as f64);
        acc.iter_mut().for_each(|a| *a /= n);
        Some(acc)
    }

    /// Mean of the token vectors under the OOV policy; the zero vector when nothing is found.
    pub fn embed_text(&self, text: &str) -> Vec<T> {
        self.embed_tokens(&tokenize(text))
    }

    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<T> {
        let mut acc = vec![T::zero(); self.dimension];
        let mut count = 0usize;
        let add = |acc: &mut Vec<T>, v: &[T]| {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += *x;
            }
        };
        for tok in tokens {
            let tok = tok.as_ref();
            if let Some(v) = self.lookup(tok) {
                add(&mut acc, v);
                count += 1;
                continue;
            }
            match self.oov_policy {
                OovPolicy::Skip => {}
                OovPolicy::Zero => count += 1,
                OovPolicy::SubwordHash { .. } => {
                    if let Some(v) = self.subword_vector(tok) {
                        add(&mut acc, &v);
                        count += 1;
                    }
                }
            }
        }
        if count > 0 {
            let n = T::of(count as f64);
            acc.iter_mut().for_each(|a| *a /= n);
        }
        acc
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |s: String| w.write_all(s.as_bytes()).map_err(|e| Error::io(path, e));
        write(format!("{} {}\n", self.len(), self.dimension))?;
        for (row, token) in self.tokens.iter().enumerate() {
            write(format_line(token, &self.vectors[row * self.dimension..(row + 1) * self.dimension]))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn format_line<T: Scalar>(token: &str, v: &[T]) -> String {
    let mut line = String::with_capacity(token.len() + v.len() * 10);
    line.push_str(token);
    for x in v {
        line.push(' ');
        line.push_str(&x.as_f64().to_string());
    }
    line.push('\n');
    line
}

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

fn ngram_buckets(token: &str, buckets: usize) -> Vec<usize> {
    let chars: Vec<char> = std::iter::once('<').chain(token.chars()).chain(std::iter::once('>')).collect();
    let mut out = Vec::new();
    for n in MIN_NGRAM..=MAX_NGRAM {
        for w in chars.windows(n) {
            let s: String = w.iter().collect();
            out.push(fnv1a(s.as_bytes()) as usize % buckets);
        }
    }
    out
}

/// Reads the text word-vector format: a `V D` header, then `V` lines of `token f1 .. fD`.
pub fn load_embeddings<T: Scalar>(path: &Path, expected_dim: usize, oov_policy: OovPolicy) -> Result<EmbeddingTable<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut line = String::new();

    reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    hasher.update(line.as_bytes());
    let mut header = line.split_whitespace();
    let parse_usize = |s: Option<&str>| s.and_then(|s| s.parse::<usize>().ok());
    let (Some(rows), Some(dim), None) = (parse_usize(header.next()), parse_usize(header.next()), header.next()) else {
        return Err(Error::MalformedEmbeddings(format!("bad header {:?}", line.trim_end())));
    };
    if dim != expected_dim {
        return Err(Error::DimensionMismatch {
            expected: expected_dim,
            found: dim,
        });
    }

    let mut table = EmbeddingTable {
        dimension: dim,
        index: HashMap::with_capacity(rows),
        tokens: Vec::with_capacity(rows),
        vectors: Vec::with_capacity(rows * dim),
        oov_policy,
        subword: None,
        checksum: String::new(),
    };
    for row in 0..rows {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::MalformedEmbeddings(format!("expected {rows} vectors, found {row}")));
        }
        hasher.update(line.as_bytes());
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| Error::MalformedEmbeddings(format!("line {}: empty", row + 2)))?
            .to_string();
        let mut v = Vec::with_capacity(dim);
        for p in parts {
            let x: f64 = p
                .parse()
                .map_err(|_| Error::MalformedEmbeddings(format!("line {}: bad number {p:?}", row + 2)))?;
            if !x.is_finite() {
                return Err(Error::NonFinite(token));
            }
            v.push(T::of(x));
        }
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        table.push(token, v);
    }
    table.checksum = hex::encode(hasher.finalize());
    table.build_subwords();
    Ok(table)
}
