//! Binary dataset cache.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "MNDS", version u32
//! token count u32, then length-prefixed UTF-8 tokens
//! answer count u32, then length-prefixed UTF-8 answer tokens
//! sample count u32, then per sample:
//!     story length u32
//!     per sentence: word count u32, u32 word indices
//!     question: word count u32, u32 word indices
//!     answer u32
//!     supporting flag u8; when 1: count u32, u32 ids
//! ```

use std::fs;
use std::path::Path;

use crate::model::Sentence;

use super::{DataError, QASample, Vocabulary};

pub const CACHE_MAGIC: [u8; 4] = *b"MNDS";
pub const CACHE_FORMAT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_indices(buf: &mut Vec<u8>, words: &[usize]) {
    put_u32(buf, words.len() as u32);
    for &w in words {
        put_u32(buf, w as u32);
    }
}

pub fn encode_dataset(samples: &[QASample], vocab: &Vocabulary) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&CACHE_MAGIC);
    put_u32(&mut buf, CACHE_FORMAT_VERSION);
    put_u32(&mut buf, vocab.tokens().len() as u32);
    for t in vocab.tokens() {
        put_str(&mut buf, t);
    }
    put_u32(&mut buf, vocab.answer_tokens().len() as u32);
    for t in vocab.answer_tokens() {
        put_str(&mut buf, t);
    }
    put_u32(&mut buf, samples.len() as u32);
    for s in samples {
        put_u32(&mut buf, s.story.len() as u32);
        for sent in &s.story {
            put_indices(&mut buf, sent.words());
        }
        put_indices(&mut buf, s.question.words());
        put_u32(&mut buf, s.answer as u32);
        match &s.supporting_fact_ids {
            None => buf.push(0),
            Some(ids) => {
                buf.push(1);
                put_u32(&mut buf, ids.len() as u32);
                for &i in ids {
                    put_u32(&mut buf, i as u32);
                }
            }
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::Corrupt(format!(
                "needed {} bytes at offset {}, file has {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, DataError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, DataError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| DataError::Corrupt("token is not valid UTF-8".into()))
    }

    fn indices(&mut self, bound: usize, what: &str) -> Result<Vec<usize>, DataError> {
        let len = self.u32()? as usize;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let idx = self.u32()? as usize;
            if idx >= bound {
                return Err(DataError::Corrupt(format!(
                    "{what} index {idx} out of range ({bound})"
                )));
            }
            out.push(idx);
        }
        Ok(out)
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(Vec<QASample>, Vocabulary), DataError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != CACHE_MAGIC {
        return Err(DataError::BadMagic);
    }
    let version = cur.u32()?;
    if version != CACHE_FORMAT_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let mut vocab = Vocabulary::new();
    let token_count = cur.u32()? as usize;
    for _ in 0..token_count {
        let t = cur.string()?;
        vocab.intern(&t);
    }
    let answer_count = cur.u32()? as usize;
    for _ in 0..answer_count {
        let t = cur.string()?;
        vocab.intern_answer(&t);
    }
    let sample_count = cur.u32()? as usize;
    let mut samples = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let story_len = cur.u32()? as usize;
        let mut story = Vec::with_capacity(story_len);
        for _ in 0..story_len {
            story.push(Sentence::new(cur.indices(token_count, "word")?)?);
        }
        let question = Sentence::new(cur.indices(token_count, "word")?)?;
        let answer = cur.u32()? as usize;
        if answer >= answer_count {
            return Err(DataError::Corrupt(format!(
                "answer label {answer} out of range ({answer_count})"
            )));
        }
        let supporting = match cur.u8()? {
            0 => None,
            1 => {
                let len = cur.u32()? as usize;
                let mut ids = Vec::with_capacity(len);
                for _ in 0..len {
                    ids.push(cur.u32()? as usize);
                }
                Some(ids)
            }
            other => {
                return Err(DataError::Corrupt(format!(
                    "bad supporting-facts flag {other}"
                )))
            }
        };
        samples.push(QASample {
            story,
            question,
            answer,
            supporting_fact_ids: supporting,
        });
    }
    if cur.pos != bytes.len() {
        return Err(DataError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    Ok((samples, vocab))
}

pub fn save_dataset(path: &Path, samples: &[QASample], vocab: &Vocabulary) -> Result<(), DataError> {
    fs::write(path, encode_dataset(samples, vocab))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(Vec<QASample>, Vocabulary), DataError> {
    decode_dataset(&fs::read(path)?)
}
