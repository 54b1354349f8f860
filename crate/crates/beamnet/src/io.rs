//! Model files: magic bytes, a length-prefixed JSON header and the raw
//! little-endian f32 parameter blob.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Model, ModelSpec, ParamEntry, Result};

pub const MAGIC: &[u8; 8] = b"BEAMNET\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub n_params: usize,
    pub parameters: Vec<ParamEntry>,
}

pub fn save_model(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    let header = ModelHeader {
        format_version: MODEL_FORMAT_VERSION,
        spec: model.spec().clone(),
        n_params: model.n_params(),
        parameters: model.layout().entries.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut blob = Vec::with_capacity(model.n_params() * 4);
    for p in model.params() {
        blob.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&blob)?;
    w.flush()?;
    Ok(())
}

/// Reads only the header of a model file.
pub fn read_header(path: impl AsRef<Path>) -> Result<ModelHeader> {
    let bytes = std::fs::read(path.as_ref())?;
    parse(path.as_ref(), &bytes).map(|(h, _)| h)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let (header, blob) = parse(path, &bytes)?;
    let params = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
        .collect();
    Model::from_params(header.spec, params).map_err(|e| corrupt(path, e.to_string()))
}

/// Loads a model and checks that it was built for `expected`.
pub fn load_model_for(path: impl AsRef<Path>, expected: &ModelSpec) -> Result<Model<f32>> {
    let model = load_model(path)?;
    if model.spec() != expected {
        return Err(Error::VersionMismatch(format!(
            "file holds {:?}, expected {:?}",
            model.spec(),
            expected
        )));
    }
    Ok(model)
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptModel {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse<'a>(path: &Path, bytes: &'a [u8]) -> Result<(ModelHeader, &'a [u8])> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt(path, "not a model file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch(format!(
            "file format version {version}, this build reads {MODEL_FORMAT_VERSION}"
        )));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let rest = &bytes[20..];
    if hlen > rest.len() {
        return Err(corrupt(path, "truncated header"));
    }
    let header: ModelHeader =
        serde_json::from_slice(&rest[..hlen]).map_err(|e| corrupt(path, format!("bad header: {e}")))?;
    header.spec.validate()?;
    let layout = crate::ParamLayout::new(&header.spec);
    if layout.entries != header.parameters || layout.n_params() != header.n_params {
        return Err(Error::VersionMismatch(
            "parameter manifest does not match the layout of its spec".into(),
        ));
    }
    let blob = &rest[hlen..];
    if blob.len() != header.n_params * 4 {
        return Err(corrupt(
            path,
            format!(
                "parameter blob has {} bytes, expected {}",
                blob.len(),
                header.n_params * 4
            ),
        ));
    }
    Ok((header, blob))
}
