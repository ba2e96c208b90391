//! Little-endian byte encoding shared by protocol messages and on-disk artifacts.

use crate::error::{Error, Result};
use crate::field::{Fe, Field};

#[derive(Default, Debug)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            buf: Vec::with_capacity(n),
        }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
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

    pub fn u128(&mut self, v: u128) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    /// Low `width` bytes of `v`, little-endian.
    pub fn uint(&mut self, v: u128, width: usize) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes()[..width]);
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    /// Length-prefixed byte string.
    pub fn blob(&mut self, b: &[u8]) -> &mut Self {
        self.u32(b.len() as u32);
        self.bytes(b)
    }

    pub fn fe(&mut self, field: &Field, v: Fe) -> &mut Self {
        self.uint(v.value() as u128, field.config().byte_len())
    }

    /// Count-prefixed field vector.
    pub fn fes(&mut self, field: &Field, vs: &[Fe]) -> &mut Self {
        self.u32(vs.len() as u32);
        let w = field.config().byte_len();
        self.buf.reserve(vs.len() * w);
        for v in vs {
            self.uint(v.value() as u128, w);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Framing(format!("truncated: need {n} bytes at {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    pub fn uint(&mut self, width: usize) -> Result<u128> {
        let mut b = [0u8; 16];
        b[..width].copy_from_slice(self.take(width)?);
        Ok(u128::from_le_bytes(b))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    /// Reads one field element, rejecting non-canonical encodings.
    pub fn fe(&mut self, field: &Field) -> Result<Fe> {
        let v = self.uint(field.config().byte_len())? as u64;
        if v >= field.p() {
            return Err(Error::Framing(format!("field element {v} out of range")));
        }
        Ok(field.elem(v))
    }

    pub fn fes(&mut self, field: &Field) -> Result<Vec<Fe>> {
        let n = self.u32()? as usize;
        if n.saturating_mul(field.config().byte_len()) > self.remaining() {
            return Err(Error::Framing(format!("vector of {n} elements overruns payload")));
        }
        (0..n).map(|_| self.fe(field)).collect()
    }

    /// Like [`Reader::fes`] but insists on an exact length.
    pub fn fes_exact(&mut self, field: &Field, n: usize) -> Result<Vec<Fe>> {
        let v = self.fes(field)?;
        if v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: v.len(),
            });
        }
        Ok(v)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Framing(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}
