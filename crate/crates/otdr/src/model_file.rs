//! Model files.
//!
//! Layout: magic `OTDRLSTM`, `u32` format version, `u32` header length, the
//! JSON header, `u64` parameter count, the parameters as little-endian
//! `f64`, then the SHA-256 of everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use otdr_core::dataset::{AuxSource, FeatureSet};
use otdr_core::nn::{ArchSpec, LossWeights, ModelParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsio;

pub const MAGIC: &[u8; 8] = b"OTDRLSTM";
pub const MODEL_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// What a model needs besides its weights to be used on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub reflectance_range: (f64, f64),
    pub sampling_interval_m: f64,
    pub pulse_width_samples: usize,
    pub aux_source: AuxSource,
    /// Seeds, input hashes and training summary.
    pub provenance: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: ModelParams,
    pub meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: ArchSpec,
    feature_set: FeatureSet,
    loss_weights: LossWeights,
    window_len: usize,
    meta: ModelMeta,
}

pub fn encode_model(model: &SavedModel) -> Vec<u8> {
    let p = &model.params;
    let header = serde_json::to_vec(&Header {
        arch: p.arch.clone(),
        feature_set: p.feature_set.clone(),
        loss_weights: p.loss_weights,
        window_len: p.window_len,
        meta: model.meta.clone(),
    })
    .expect("model header serializes");
    let mut out = Vec::with_capacity(24 + header.len() + 8 * p.values.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(p.values.len() as u64).to_le_bytes());
    for v in &p.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Magic and version are checked first so that a foreign or newer file gets
/// a precise error; anything shorter than announced fails the checksum.
pub fn decode_model(bytes: &[u8], path: &Path) -> Result<SavedModel> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            found,
            expected: MODEL_VERSION,
        });
    }
    let checksum = || Error::ChecksumMismatch { path: path.into() };
    if bytes.len() < 16 + 8 + DIGEST_LEN {
        return Err(checksum());
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(checksum());
    }
    let hlen = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
    let rest = body.get(16..).ok_or_else(checksum)?;
    if rest.len() < hlen + 8 {
        return Err(checksum());
    }
    let header: Header = serde_json::from_slice(&rest[..hlen])
        .map_err(|e| Error::Data(format!("{}: invalid model header: {e}", path.display())))?;
    let n = u64::from_le_bytes(rest[hlen..hlen + 8].try_into().unwrap()) as usize;
    let block = &rest[hlen + 8..];
    if block.len() != 8 * n {
        return Err(Error::Data(format!(
            "{}: header announces {n} parameters, the file holds {} bytes of them",
            path.display(),
            block.len()
        )));
    }
    let values = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ModelParams::from_values(
        header.arch,
        header.feature_set,
        header.loss_weights,
        header.window_len,
        values,
    )?;
    Ok(SavedModel {
        params,
        meta: header.meta,
    })
}

pub fn write_model(path: &Path, model: &SavedModel) -> Result<()> {
    fsio::write_atomic(path, &encode_model(model))
}

pub fn read_model(path: &Path) -> Result<SavedModel> {
    decode_model(&fsio::read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> SavedModel {
        let arch = ArchSpec {
            n_c: 3,
            tower_width: 2,
            n_aux: 1,
            ..Default::default()
        };
        let params = ModelParams::init(arch, FeatureSet::snr(), LossWeights::default(), 35, 9).unwrap();
        SavedModel {
            params,
            meta: ModelMeta {
                reflectance_range: (-65.0, -10.0),
                sampling_interval_m: 0.8,
                pulse_width_samples: 6,
                aux_source: AuxSource::Truth,
                provenance: BTreeMap::from([("seed".into(), 9.into())]),
            },
        }
    }

    fn p() -> &'static Path {
        Path::new("m.otdrm")
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        assert_eq!(decode_model(&encode_model(&m), p()).unwrap(), m);
    }

    #[test]
    fn every_truncation_is_refused() {
        let bytes = encode_model(&sample());
        for cut in [0, 5, 12, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_model(&bytes[..cut], p()).is_err(), "cut {cut}");
        }
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 1], p()),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn flipped_bit_fails_the_checksum() {
        let mut bytes = encode_model(&sample());
        let k = bytes.len() - 50;
        bytes[k] ^= 1;
        assert!(matches!(decode_model(&bytes, p()), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn other_version_and_magic_are_named() {
        let mut bytes = encode_model(&sample());
        bytes[8] = 2;
        assert!(matches!(
            decode_model(&bytes, p()),
            Err(Error::UnsupportedVersion { found: 2, expected: 1, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes, p()), Err(Error::BadMagic { .. })));
    }
}
