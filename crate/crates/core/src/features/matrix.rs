//! Row-major feature matrices and their on-disk forms.
//!
//! CSV: header `id,label,<group>_<k>...`, one article per row.
//!
//! Binary (little-endian):
//! `b"PDFM"`, `u32` format version, `u8` mode tag, `u32` text width, `u64` rows,
//! `u32` columns, length-prefixed registry version and embedding checksum
//! (`u32` byte length + UTF-8), then per row a length-prefixed id, a `u8` label and
//! `columns` `f64` values.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::{fuse_scaled, tokenize, EmbeddingTable, FeatureLayout, FeatureMode, FeatureVector};
use crate::annotate::TechniqueRegistry;
use crate::corpus::{Corpus, Label};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"PDFM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FuseOptions {
    /// Scale persuasion counts to occurrences per 1000 tokens.
    pub per_1000_tokens: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub layout: FeatureLayout,
    pub ids: Vec<String>,
    pub labels: Vec<Label>,
    pub data: Array2<T>,
    pub registry_version: String,
    pub embedding_checksum: String,
}

pub fn featurize_corpus<T: Scalar>(
    corpus: &Corpus,
    table: &EmbeddingTable<T>,
    mode: FeatureMode,
    options: FuseOptions,
    registry: &TechniqueRegistry,
) -> Result<FeatureMatrix<T>> {
    let layout = FeatureLayout::new(mode, table.dimension());
    let mut data = Array2::zeros((corpus.articles.len(), layout.len()));
    for (row, article) in corpus.articles.iter().enumerate() {
        let tokens = tokenize(&article.text);
        let text = table.embed_tokens(&tokens);
        let scale = if options.per_1000_tokens && !tokens.is_empty() {
            T::of(1000.0 / tokens.len() as f64)
        } else {
            T::one()
        };
        let fv = fuse_scaled(&text, article.annotation.as_ref(), mode, scale).map_err(|e| match e {
            Error::MissingAnnotation => Error::Unannotated(article.id.clone()),
            other => other,
        })?;
        data.row_mut(row).assign(&ArrayView1::from(&fv.values));
    }
    Ok(FeatureMatrix {
        layout,
        ids: corpus.articles.iter().map(|a| a.id.clone()).collect(),
        labels: corpus.articles.iter().map(|a| a.label).collect(),
        data,
        registry_version: registry.version.clone(),
        embedding_checksum: table.checksum().to_string(),
    })
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn mode(&self) -> FeatureMode {
        self.layout.mode
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> FeatureVector<T> {
        FeatureVector {
            values: self.data.row(i).to_vec(),
            layout: self.layout,
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        FeatureMatrix {
            layout: self.layout,
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            data: self.data.select(Axis(0), indices),
            registry_version: self.registry_version.clone(),
            embedding_checksum: self.embedding_checksum.clone(),
        }
    }

    /// SHA-256 over layout, provenance, ids, labels and values (as `f64` bits).
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update([self.layout.mode.tag()]);
        h.update((self.layout.text_dim as u64).to_le_bytes());
        for s in [&self.registry_version, &self.embedding_checksum] {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        }
        for (i, row) in self.data.rows().into_iter().enumerate() {
            h.update((self.ids[i].len() as u64).to_le_bytes());
            h.update(self.ids[i].as_bytes());
            h.update([self.labels[i].as_u8()]);
            for x in row {
                h.update(x.as_f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn labels_u8(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.as_u8()).collect()
    }

    /// Column-wise mean of all rows.
    pub fn column_mean(&self) -> Vec<T> {
        match self.data.mean_axis(Axis(0)) {
            Some(m) => m.to_vec(),
            None => vec![T::zero(); self.layout.len()],
        }
    }

    fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.layout.len());
        for (group, range) in self.layout.groups() {
            names.extend((0..range.len()).map(|k| format!("{group}_{k}")));
        }
        names
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "id,label,{}", self.column_names().join(",")).map_err(io)?;
        for (i, row) in self.data.rows().into_iter().enumerate() {
            write!(w, "{},{}", csv_field(&self.ids[i]), self.labels[i].as_u8()).map_err(io)?;
            for x in row {
                write!(w, ",{}", x.as_f64()).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&[self.layout.mode.tag()]).map_err(io)?;
        w.write_all(&(self.layout.text_dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.layout.len() as u32).to_le_bytes()).map_err(io)?;
        write_str(&mut w, &self.registry_version).map_err(io)?;
        write_str(&mut w, &self.embedding_checksum).map_err(io)?;
        for (i, row) in self.data.rows().into_iter().enumerate() {
            write_str(&mut w, &self.ids[i]).map_err(io)?;
            w.write_all(&[self.labels[i].as_u8()]).map_err(io)?;
            for x in row {
                w.write_all(&x.as_f64().to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = bytes.as_slice();
        let bad = |m: &str| Error::FeatureFormat(m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::FeatureFormat(format!("unsupported format version {version}")));
        }
        let mode = FeatureMode::from_tag(read_u8(&mut r)?).ok_or_else(|| bad("unknown mode tag"))?;
        let text_dim = read_u32(&mut r)? as usize;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let layout = FeatureLayout::new(mode, text_dim);
        if layout.len() != cols {
            return Err(Error::ModeMismatch(format!(
                "{cols} columns stored but mode {mode} with text width {text_dim} needs {}",
                layout.len()
            )));
        }
        let registry_version = read_str(&mut r)?;
        let embedding_checksum = read_str(&mut r)?;
        let mut ids = Vec::with_capacity(rows);
        let mut labels = Vec::with_capacity(rows);
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            ids.push(read_str(&mut r)?);
            labels.push(Label::try_from(read_u8(&mut r)?).map_err(Error::FeatureFormat)?);
            for _ in 0..cols {
                values.push(T::of(f64::from_le_bytes(read_array(&mut r)?)));
            }
        }
        let data = Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::FeatureFormat(e.to_string()))?;
        Ok(FeatureMatrix {
            layout,
            ids,
            labels,
            data,
            registry_version,
            embedding_checksum,
        })
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_array<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::FeatureFormat("truncated file".into()))?;
    Ok(buf)
}

fn read_u8(r: &mut &[u8]) -> Result<u8> {
    Ok(read_array::<1>(r)?[0])
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_str(r: &mut &[u8]) -> Result<String> {
    let n = read_u32(r)? as usize;
    if r.len() < n {
        return Err(Error::FeatureFormat("truncated file".into()));
    }
    let (s, rest) = r.split_at(n);
    *r = rest;
    String::from_utf8(s.to_vec()).map_err(|e| Error::FeatureFormat(e.to_string()))
}
