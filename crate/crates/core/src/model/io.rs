//! Model weight files.
//!
//! Layout (little-endian): `b"PDMM"`, `u32` format version, `u8` mode tag, `u32` text width,
//! `u32` input width, length-prefixed registry version and embedding checksum
//! (`u32` byte length + UTF-8), then every parameter as `f64` in the order
//! `w1` (row-major), `b1`, `w2`, `b2`.

use std::io::{BufWriter, Write};
use std::path::Path;

use super::MlpModel;
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureMatrix, FeatureMode};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"PDMM";
const FORMAT_VERSION: u32 = 1;

/// What a model was trained on; stored next to the weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelProvenance {
    pub layout: FeatureLayout,
    pub registry_version: String,
    pub embedding_checksum: String,
}

impl ModelProvenance {
    pub fn of<T>(features: &FeatureMatrix<T>) -> Self {
        ModelProvenance {
            layout: features.layout,
            registry_version: features.registry_version.clone(),
            embedding_checksum: features.embedding_checksum.clone(),
        }
    }

    /// Errors when the feature layout differs; only warns on registry or embedding drift.
    pub fn check_compatible<T>(&self, features: &FeatureMatrix<T>) -> Result<()> {
        if self.layout != features.layout {
            return Err(Error::ModeMismatch(format!(
                "model expects {} features of width {}, got {} of width {}",
                self.layout.mode,
                self.layout.len(),
                features.layout.mode,
                features.layout.len()
            )));
        }
        if self.embedding_checksum != features.embedding_checksum {
            log::warn!(
                "embedding checksum differs: model {} vs features {}",
                self.embedding_checksum,
                features.embedding_checksum
            );
        }
        if self.registry_version != features.registry_version {
            log::warn!(
                "registry version differs: model {} vs features {}",
                self.registry_version,
                features.registry_version
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel<T> {
    pub model: MlpModel<T>,
    pub provenance: ModelProvenance,
}

pub fn save_model<T: Scalar>(path: &Path, model: &MlpModel<T>, provenance: &ModelProvenance) -> Result<()> {
    if model.input_dim() != provenance.layout.len() {
        return Err(Error::ModeMismatch(format!(
            "model width {} does not match {} layout width {}",
            model.input_dim(),
            provenance.layout.mode,
            provenance.layout.len()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&[provenance.layout.mode.tag()]).map_err(io)?;
    w.write_all(&(provenance.layout.text_dim as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(model.input_dim() as u32).to_le_bytes()).map_err(io)?;
    for s in [&provenance.registry_version, &provenance.embedding_checksum] {
        w.write_all(&(s.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(s.as_bytes()).map_err(io)?;
    }
    for p in model.params() {
        w.write_all(&p.as_f64().to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.0.len() < N {
            return Err(Error::ModelFormat("truncated file".into()));
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        if self.0.len() < n {
            return Err(Error::ModelFormat("truncated file".into()));
        }
        let (s, rest) = self.0.split_at(n);
        self.0 = rest;
        String::from_utf8(s.to_vec()).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<SavedModel<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader(&bytes);
    if &r.take::<4>()? != MAGIC {
        return Err(Error::ModelFormat("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let [tag] = r.take::<1>()?;
    let mode = FeatureMode::from_tag(tag).ok_or_else(|| Error::ModelFormat(format!("unknown mode tag {tag}")))?;
    let text_dim = r.u32()? as usize;
    let input_dim = r.u32()? as usize;
    let layout = FeatureLayout::new(mode, text_dim);
    if layout.len() != input_dim {
        return Err(Error::ModeMismatch(format!(
            "stored input width {input_dim} but mode {mode} with text width {text_dim} needs {}",
            layout.len()
        )));
    }
    let registry_version = r.string()?;
    let embedding_checksum = r.string()?;
    let mut model = MlpModel::<T>::zeros(input_dim);
    let mut params = Vec::with_capacity(model.param_count());
    for _ in 0..model.param_count() {
        params.push(T::of(f64::from_le_bytes(r.take()?)));
    }
    if !r.0.is_empty() {
        return Err(Error::ModelFormat(format!("{} trailing bytes", r.0.len())));
    }
    model.set_params(&params)?;
    Ok(SavedModel {
        model,
        provenance: ModelProvenance {
            layout,
            registry_version,
            embedding_checksum,
        },
    })
}
