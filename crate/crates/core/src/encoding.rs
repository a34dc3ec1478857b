//! Little-endian, length-prefixed byte encoding shared by every wire and
//! hashing format in the crate.
//!
//! Integers are fixed-width little-endian. Variable-length byte strings and
//! lists carry a 32-bit little-endian length prefix.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after value")]
    Trailing(usize),
    #[error("invalid tag {tag:#04x} for {what}")]
    BadTag { what: &'static str, tag: u8 },
    #[error("invalid field: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    /// Raw bytes with no length prefix; the reader must know the width.
    pub fn fixed(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(len32(bytes.len()));
        self.fixed(bytes)
    }

    pub fn len_prefix(&mut self, n: usize) -> &mut Self {
        self.u32(len32(n))
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

fn len32(n: usize) -> u32 {
    u32::try_from(n).expect("encoded field longer than u32::MAX")
}

#[derive(Debug)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.data.len())
            .ok_or(DecodeError::Truncated(self.pos))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    /// Reads a list length, rejecting counts that cannot possibly fit in the
    /// remaining input given `min_item` bytes per element.
    pub fn list_len(&mut self, min_item: usize) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item.max(1)) > self.remaining() {
            return Err(DecodeError::Truncated(self.pos));
        }
        Ok(n)
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian_with_u32_prefixes() {
        let mut enc = Encoder::new();
        enc.u8(7).u32(0x0102_0304).u64(1).bytes(b"ab");
        assert_eq!(
            enc.finish(),
            vec![7, 4, 3, 2, 1, 1, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, b'a', b'b']
        );
    }

    #[test]
    fn truncated_and_trailing_inputs_are_rejected() {
        let mut dec = Decoder::new(&[5, 0, 0, 0, 1]);
        assert_eq!(dec.bytes(), Err(DecodeError::Truncated(4)));

        let dec = Decoder::new(&[1]);
        assert_eq!(dec.finish(), Err(DecodeError::Trailing(1)));
    }

    #[test]
    fn absurd_list_lengths_fail_fast() {
        let mut dec = Decoder::new(&[0xff, 0xff, 0xff, 0xff]);
        assert!(dec.list_len(1).is_err());
    }
}
