//! `ganckpt/1` files: a tag line, a length-prefixed JSON header with the
//! tensor table, raw little-endian tensor bytes and a SHA-256 trailer over
//! everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::GanConfig;
use super::nn::ParamLayout;
use super::real::Real;
use super::train::GanState;
use super::{ExpressionDomain, GanError};
use crate::optim::AdamState;

pub const CHECKPOINT_FORMAT: &str = "ganckpt/1";
const TAG_PREFIX: &str = "ganckpt/";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the data section.
    pub offset: usize,
    pub nbytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: GanConfig,
    pub domains: Vec<String>,
    pub step: u64,
    pub g_adam_t: u64,
    pub d_adam_t: u64,
    pub tensors: Vec<TensorEntry>,
}

/// Parameter tensors followed by their first and second moments.
fn tensor_views<'a, F>(layout: &'a ParamLayout, params: &'a [F], adam: &'a AdamState<F>) -> Vec<(String, &'a [usize], &'a [F])> {
    let mut out = Vec::new();
    for (prefix, buf) in [("", params), ("adam.m.", &adam.m[..]), ("adam.v.", &adam.v[..])] {
        for spec in &layout.specs {
            out.push((format!("{prefix}{}", spec.name), &spec.shape[..], &buf[spec.range()]));
        }
    }
    out
}

impl<F: Real> GanState<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut data = Vec::new();
        let views = tensor_views(&self.generator.layout, &self.g_params, &self.g_adam)
            .into_iter()
            .chain(tensor_views(&self.discriminator.layout, &self.d_params, &self.d_adam));
        for (name, shape, values) in views {
            let offset = data.len();
            for &v in values {
                v.write_le(&mut data);
            }
            tensors.push(TensorEntry { name, shape: shape.to_vec(), dtype: F::DTYPE.to_string(), offset, nbytes: data.len() - offset });
        }
        let header = CheckpointHeader {
            config: self.config.clone(),
            domains: ExpressionDomain::ALL.iter().map(|d| d.name().to_string()).collect(),
            step: self.step,
            g_adam_t: self.g_adam.t,
            d_adam_t: self.d_adam.t,
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(json.len() + data.len() + 64);
        out.extend_from_slice(CHECKPOINT_FORMAT.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GanError> {
        // The tag is checked first so that a newer file reports its version
        // rather than a checksum failure.
        let tag_end = bytes.iter().take(64).position(|&b| b == b'\n');
        let tag = tag_end.map(|i| String::from_utf8_lossy(&bytes[..i]).into_owned());
        match &tag {
            Some(t) if t == CHECKPOINT_FORMAT => {}
            Some(t) if t.starts_with(TAG_PREFIX) => return Err(GanError::VersionMismatch(t.clone())),
            _ if bytes.len() < CHECKPOINT_FORMAT.len() + 1 => return Err(GanError::ChecksumMismatch),
            _ => return Err(GanError::CorruptCheckpoint("missing format tag".into())),
        }
        if bytes.len() < DIGEST_LEN {
            return Err(GanError::ChecksumMismatch);
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(GanError::ChecksumMismatch);
        }
        let corrupt = |m: &str| GanError::CorruptCheckpoint(m.to_string());
        let mut pos = tag_end.expect("tag checked") + 1;
        let len_bytes = body.get(pos..pos + 8).ok_or_else(|| corrupt("short header"))?;
        let hlen = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
        pos += 8;
        let header: CheckpointHeader = serde_json::from_slice(body.get(pos..pos + hlen).ok_or_else(|| corrupt("short header"))?)?;
        let data = &body[pos + hlen..];
        let expect_domains: Vec<&str> = ExpressionDomain::ALL.iter().map(|d| d.name()).collect();
        if header.domains != expect_domains {
            return Err(corrupt("domain order differs"));
        }
        let mut state = GanState::<F>::new(header.config.clone())?;
        state.step = header.step;
        state.g_adam.t = header.g_adam_t;
        state.d_adam.t = header.d_adam_t;
        let expected: Vec<(String, Vec<usize>)> = tensor_views(&state.generator.layout, &state.g_params, &state.g_adam)
            .into_iter()
            .chain(tensor_views(&state.discriminator.layout, &state.d_params, &state.d_adam))
            .map(|(n, s, _)| (n, s.to_vec()))
            .collect();
        if expected.len() != header.tensors.len() {
            return Err(corrupt("tensor table does not match the configured networks"));
        }
        let mut values: Vec<Vec<F>> = Vec::with_capacity(expected.len());
        for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
            if &entry.name != name || &entry.shape != shape || entry.dtype != F::DTYPE {
                return Err(GanError::CorruptCheckpoint(format!("unexpected tensor {} {:?} {}", entry.name, entry.shape, entry.dtype)));
            }
            let count: usize = shape.iter().product();
            if entry.nbytes != count * F::BYTES {
                return Err(corrupt("tensor byte length"));
            }
            let raw = data.get(entry.offset..entry.offset + entry.nbytes).ok_or_else(|| corrupt("tensor outside data section"))?;
            values.push(raw.chunks(F::BYTES).map(F::read_le).collect());
        }
        let mut it = values.into_iter();
        let g_layout = state.generator.layout.clone();
        let d_layout = state.discriminator.layout.clone();
        for (layout, params, adam) in [(&g_layout, &mut state.g_params, &mut state.g_adam), (&d_layout, &mut state.d_params, &mut state.d_adam)] {
            for buf in [params, &mut adam.m, &mut adam.v] {
                for spec in &layout.specs {
                    buf[spec.range()].copy_from_slice(&it.next().expect("counted"));
                }
            }
        }
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GanError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GanError> {
        GanState::from_bytes(&std::fs::read(path)?)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> GanState<f32> {
        let cfg = GanConfig { image_size: 8, g_width: 2, g_res_blocks: 1, g_edge_kernel: 3, d_width: 2, d_layers: 2, ..GanConfig::default() };
        let mut s = GanState::<f32>::new(cfg).unwrap();
        s.step = 3;
        s.g_adam.t = 3;
        s.g_adam.m.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 * 1e-3);
        s
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let s = state();
        let bytes = s.to_bytes();
        let back = GanState::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = state().to_bytes();
        let truncated = &bytes[..bytes.len() - 10];
        assert!(matches!(GanState::<f32>::from_bytes(truncated), Err(GanError::ChecksumMismatch)));
        let mut flipped = bytes.clone();
        flipped[200] ^= 1;
        assert!(matches!(GanState::<f32>::from_bytes(&flipped), Err(GanError::ChecksumMismatch)));
        let mut newer = bytes.clone();
        newer[8] = b'2';
        assert!(matches!(GanState::<f32>::from_bytes(&newer), Err(GanError::VersionMismatch(t)) if t == "ganckpt/2"));
        assert!(matches!(GanState::<f32>::from_bytes(&bytes[..4]), Err(GanError::ChecksumMismatch)));
    }
}
