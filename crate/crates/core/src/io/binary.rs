//! Little-endian framing shared by the binary formats: 4-byte magic, `u32`
//! version, payload, and a trailing CRC32 over everything before it.

use crate::error::DecodeError;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Self { buf }
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and positions the reader after them.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self, DecodeError> {
        let mut r = Self { bytes, pos: 0 };
        let found = r.take(4)?;
        if found != magic {
            let mut f = [0u8; 4];
            f.copy_from_slice(found);
            return Err(DecodeError::BadMagic {
                expected: *magic,
                found: f,
            });
        }
        let v = r.u32()?;
        if v != version {
            return Err(DecodeError::BadVersion(v));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let available = self.bytes.len().saturating_sub(self.pos);
        if available < n {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f32(&mut self) -> Result<f32, DecodeError> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Makes sure `count` values of `width` bytes are present before a caller
    /// allocates for them.
    pub fn require(&self, count: usize, width: usize) -> Result<(), DecodeError> {
        let needed = count.saturating_mul(width);
        let available = self.bytes.len().saturating_sub(self.pos);
        if available < needed {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed,
                available,
            });
        }
        Ok(())
    }

    pub fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>, DecodeError> {
        self.require(count, 4)?;
        (0..count).map(|_| self.f32()).collect()
    }

    /// Reads the CRC trailer and verifies it covers exactly the preceding bytes.
    pub fn finish(mut self) -> Result<(), DecodeError> {
        let body_end = self.pos;
        let stored = self.u32()?;
        if self.pos != self.bytes.len() {
            return Err(DecodeError::TrailingBytes(self.bytes.len() - self.pos));
        }
        let computed = crc32fast::hash(&self.bytes[..body_end]);
        if stored != computed {
            return Err(DecodeError::Checksum { stored, computed });
        }
        Ok(())
    }
}
