//! Binary model file format.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic   "MANN"                     4 bytes
//! version u32                        currently 1
//! V, E, I, L, T                      u32 each
//! shared_embeddings                  u8 (0 or 1)
//! payload row-major f64 matrices in order:
//!     w_emb_a (E x V)
//!     w_emb_c (E x V, omitted when shared)
//!     w_emb_q (E x V)
//!     w_r     (E x E)
//!     w_o     (I x E)
//! ```
//!
//! The loader validates the magic, the version, and that the file length is
//! exactly the header plus the expected payload.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::model::{Dimensions, ModelError, ModelWeights};

pub const MODEL_MAGIC: [u8; 4] = *b"MANN";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected \"MANN\"")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model file truncated or oversized: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("model payload invalid: {0}")]
    Invalid(#[from] ModelError),
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a model to its byte representation.
pub fn encode_model(model: &ModelWeights) -> Result<Vec<u8>, ModelIoError> {
    model.validate()?;
    let dims = &model.dims;
    let mut buf = Vec::new();
    buf.extend_from_slice(&MODEL_MAGIC);
    put_u32(&mut buf, MODEL_FORMAT_VERSION);
    put_u32(&mut buf, dims.vocab_size as u32);
    put_u32(&mut buf, dims.embed_dim as u32);
    put_u32(&mut buf, dims.output_dim as u32);
    put_u32(&mut buf, dims.memory_slots as u32);
    put_u32(&mut buf, dims.hops as u32);
    buf.push(u8::from(model.shared_embeddings));
    put_matrix(&mut buf, &model.w_emb_a);
    if !model.shared_embeddings {
        put_matrix(&mut buf, &model.w_emb_c);
    }
    put_matrix(&mut buf, &model.w_emb_q);
    put_matrix(&mut buf, &model.w_r);
    put_matrix(&mut buf, &model.w_o);
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelIoError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelIoError::LengthMismatch {
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelIoError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8, ModelIoError> {
        Ok(self.take(1)?[0])
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix, ModelIoError> {
        let n = rows * cols;
        let raw = self.take(n * 8)?;
        let mut data = Vec::with_capacity(n);
        for chunk in raw.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().expect("chunk of 8")));
        }
        Ok(Matrix::from_vec(rows, cols, data).expect("sized buffer"))
    }
}

/// Parses a model from bytes, validating header and total length.
pub fn decode_model(bytes: &[u8]) -> Result<ModelWeights, ModelIoError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MODEL_MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = cur.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion(version));
    }
    let v = cur.u32()? as usize;
    let e = cur.u32()? as usize;
    let i = cur.u32()? as usize;
    let l = cur.u32()? as usize;
    let t = cur.u32()? as usize;
    let shared = cur.u8()? != 0;
    let dims = Dimensions::new(v, e, i, l, t)?;

    let table_count = if shared { 2 } else { 3 };
    let expected = cur.pos + 8 * (table_count * e * v + e * e + i * e);
    if bytes.len() != expected {
        return Err(ModelIoError::LengthMismatch {
            expected,
            found: bytes.len(),
        });
    }

    let w_emb_a = cur.matrix(e, v)?;
    let w_emb_c = if shared {
        w_emb_a.clone()
    } else {
        cur.matrix(e, v)?
    };
    let w_emb_q = cur.matrix(e, v)?;
    let w_r = cur.matrix(e, e)?;
    let w_o = cur.matrix(i, e)?;

    let model = ModelWeights {
        dims,
        shared_embeddings: shared,
        w_emb_a,
        w_emb_c,
        w_emb_q,
        w_r,
        w_o,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &ModelWeights) -> Result<(), ModelIoError> {
    let bytes = encode_model(model)?;
    let mut f = File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelWeights, ModelIoError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_model(&bytes)
}
