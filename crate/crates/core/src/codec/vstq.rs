//! Binary sequence file.
//!
//! Little-endian layout: magic `VSTQ`, version `u16`, 8-byte vocabulary
//! layout digest, sequence count `u32`, then for each sequence its length
//! `u32` followed by that many `u32` token ids.

use std::path::Path;

use super::sequence::TokenSequence;
use super::vocab::layout_digest;
use super::CodecError;

pub const MAGIC: &[u8; 4] = b"VSTQ";
pub const VERSION: u16 = 1;

pub fn encode_sequences(sequences: &[TokenSequence]) -> Vec<u8> {
    let total: usize = sequences.iter().map(|s| 4 + 4 * s.len()).sum();
    let mut out = Vec::with_capacity(18 + total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&layout_digest());
    out.extend_from_slice(&(sequences.len() as u32).to_le_bytes());
    for s in sequences {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        for &t in s.tokens() {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(
            CodecError::Truncated { offset: self.offset, needed: n, available: self.bytes.len() - self.offset },
        )?;
        let slice = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_sequences(bytes: &[u8]) -> Result<Vec<TokenSequence>, CodecError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let mut r = Reader { bytes, offset: 4 };
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    if r.take(8)? != layout_digest() {
        return Err(CodecError::LayoutMismatch);
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let start = r.offset;
        let raw = r.take(len.checked_mul(4).ok_or(CodecError::Truncated {
            offset: start,
            needed: usize::MAX,
            available: bytes.len() - start,
        })?)?;
        let tokens = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        out.push(TokenSequence::new(tokens).map_err(|e| CodecError::Corrupt { offset: start, source: Box::new(e) })?);
    }
    if r.offset != bytes.len() {
        return Err(CodecError::TrailingBytes { offset: r.offset });
    }
    Ok(out)
}

pub fn write_sequences(path: &Path, sequences: &[TokenSequence]) -> Result<(), CodecError> {
    std::fs::write(path, encode_sequences(sequences)).map_err(|e| CodecError::Io(format!("{}: {e}", path.display())))
}

pub fn read_sequences(path: &Path) -> Result<Vec<TokenSequence>, CodecError> {
    let bytes = std::fs::read(path).map_err(|e| CodecError::Io(format!("{}: {e}", path.display())))?;
    decode_sequences(&bytes)
}
