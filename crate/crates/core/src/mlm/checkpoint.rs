//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "NUMANCHK"
//! version    u32      1
//! header     u64 length + UTF-8 JSON (config, vocab, masking, training log)
//! tensors    u32 count, then per tensor:
//!            u32 name length, name, u32 ndim, u64 dims[ndim],
//!            f64 data[prod(dims)]
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::encoder::{Encoder, EncoderConfig};
use super::masking::MaskingMode;
use super::train::TrainingLog;
use super::vocab::Vocab;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NUMANCHK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCheckpoint {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub masking: MaskingMode,
    pub encoder: Encoder,
    pub log: TrainingLog,
    id: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    vocab: Vocab,
    masking: MaskingMode,
    log: TrainingLog,
}

impl EncoderCheckpoint {
    pub fn new(
        config: EncoderConfig,
        vocab: Vocab,
        masking: MaskingMode,
        encoder: Encoder,
        log: TrainingLog,
    ) -> Self {
        let mut ckpt = Self {
            config,
            vocab,
            masking,
            encoder,
            log,
            id: String::new(),
        };
        let mut bytes = Vec::new();
        ckpt.write(&mut bytes).expect("writing to memory");
        ckpt.id = hex::encode(&Sha256::digest(&bytes)[..8]);
        ckpt
    }

    /// Short content hash of the serialized checkpoint.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("writing checkpoint", e);
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            masking: self.masking,
            log: self.log.clone(),
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        out.write_all(MAGIC).map_err(io)?;
        out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        out.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
        out.write_all(&header).map_err(io)?;
        let tensors = self.encoder.params.named_tensors();
        out.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io)?;
        let mut buf = Vec::new();
        for (name, shape, data) in tensors {
            buf.clear();
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in &shape {
                buf.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf).map_err(io)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut input, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let header_len = read_u64(&mut input)? as usize;
        let mut header = vec![0u8; header_len];
        read_exact(&mut input, &mut header)?;
        let header: Header =
            serde_json::from_slice(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut vocab = header.vocab;
        vocab.reindex();
        let mut encoder = Encoder::new(&header.config, vocab.len())?;
        let expected: Vec<(String, Vec<usize>)> = encoder
            .params
            .named_tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        let count = read_u32(&mut input)? as usize;
        if count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                expected.len()
            )));
        }
        for ((name, shape), slot) in expected.into_iter().zip(encoder.params.tensors_mut()) {
            let name_len = read_u32(&mut input)? as usize;
            let mut got = vec![0u8; name_len];
            read_exact(&mut input, &mut got)?;
            if got != name.as_bytes() {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {name}, found {}",
                    String::from_utf8_lossy(&got)
                )));
            }
            let ndim = read_u32(&mut input)? as usize;
            let dims = (0..ndim)
                .map(|_| read_u64(&mut input).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if dims != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {dims:?}, expected {shape:?}"
                )));
            }
            let mut raw = vec![0u8; slot.len() * 8];
            read_exact(&mut input, &mut raw)?;
            for (v, b) in slot.iter_mut().zip(raw.chunks_exact(8)) {
                *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
            }
        }
        Ok(Self::new(header.config, vocab, header.masking, encoder, header.log))
    }
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated: {e}")))
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
