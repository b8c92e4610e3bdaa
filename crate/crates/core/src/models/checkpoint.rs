//! Single-file checkpoint: magic, header length, JSON header, raw f32 data.

use std::path::Path;

use irisforge_nn::Tensor;
use serde::{Deserialize, Serialize};

use super::{build_models, ModelBundle, NetConfig, NetKind};
use crate::error::{io_err, Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IRISFRG\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: NetConfig,
    classifier_frozen: bool,
    params: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the data section, in f32 elements.
    offset: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl ModelBundle {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut params = Vec::new();
        let mut data: Vec<u8> = Vec::new();
        let mut offset = 0;
        for kind in NetKind::ALL {
            for (name, t) in self.params(kind).iter() {
                params.push(Entry { name: name.to_string(), shape: t.shape().to_vec(), offset });
                offset += t.len();
                data.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
            }
        }
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            classifier_frozen: self.classifier_frozen,
            params,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + data.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<ModelBundle> {
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if len > body.len() {
            return Err(corrupt("header length exceeds file"));
        }
        let header: Header =
            serde_json::from_slice(&body[..len]).map_err(|e| corrupt(format!("unreadable header: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported format version {}", header.format_version)));
        }
        let data = &body[len..];
        if !data.len().is_multiple_of(4) {
            return Err(corrupt("data section is not a whole number of f32 values"));
        }
        let floats: Vec<f32> =
            data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();

        let mut bundle = build_models(&header.config, 0)?;
        bundle.classifier_frozen = header.classifier_frozen;
        let mut seen = 0;
        for kind in NetKind::ALL {
            let ps = bundle.params_mut(kind);
            let names = ps.names().to_vec();
            for (i, name) in names.iter().enumerate() {
                let e = header
                    .params
                    .iter()
                    .find(|e| &e.name == name)
                    .ok_or_else(|| corrupt(format!("missing parameter `{name}`")))?;
                let expected = ps.tensors()[i].shape().to_vec();
                if e.shape != expected {
                    return Err(corrupt(format!("parameter `{name}` has shape {:?}, expected {expected:?}", e.shape)));
                }
                let n: usize = expected.iter().product();
                let slice = floats
                    .get(e.offset..e.offset + n)
                    .ok_or_else(|| corrupt(format!("parameter `{name}` runs past the data section")))?;
                ps.tensors_mut()[i] = Tensor::new(&expected, slice.to_vec());
                seen += 1;
            }
        }
        if seen != header.params.len() {
            return Err(corrupt(format!("{} unexpected parameters in header", header.params.len() - seen)));
        }
        Ok(bundle)
    }

    /// Every parameter name in checkpoint order.
    pub fn parameter_names(&self) -> Vec<String> {
        NetKind::ALL.iter().flat_map(|&k| self.params(k).names().to_vec()).collect()
    }
}

pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bundle.to_checkpoint_bytes()).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    ModelBundle::from_checkpoint_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(reason) => Error::Load { path: path.to_path_buf(), reason },
        other => other,
    })
}

/// Header names listed in a checkpoint file, without loading the data.
pub fn checkpoint_parameter_names(bytes: &[u8]) -> Result<Vec<String>> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(bytes.get(16..16 + len).ok_or_else(|| corrupt("truncated header"))?)
        .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    Ok(header.params.into_iter().map(|e| e.name).collect())
}
