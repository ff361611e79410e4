//! Little-endian length-prefixed encoding used by the index file formats.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("bad magic bytes (expected {expected:?})")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("unexpected end of data")]
    Truncated,
    #[error("trailing bytes after payload")]
    Trailing,
    #[error("invalid utf-8 string")]
    Utf8,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Default)]
pub(crate) struct Encoder {
    pub buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &str, version: u32) -> Self {
        let mut e = Encoder::default();
        e.buf.extend_from_slice(magic.as_bytes());
        e.u32(version);
        e
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("length fits in u32"));
    }

    pub fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

pub(crate) struct Decoder<'a> {
    data: &'a [u8],
}

impl<'a> Decoder<'a> {
    /// Checks the magic prefix and returns the decoder with the version.
    pub fn new(data: &'a [u8], magic: &'static str) -> Result<(Self, u32), CodecError> {
        let Some(rest) = data.strip_prefix(magic.as_bytes()) else {
            return Err(CodecError::BadMagic { expected: magic });
        };
        let mut d = Decoder { data: rest };
        let version = d.u32()?;
        Ok((d, version))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.data.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, tail) = self.data.split_at(n);
        self.data = tail;
        Ok(head)
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn len(&mut self) -> Result<usize, CodecError> {
        Ok(self.u32()? as usize)
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        let n = self.len()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::Utf8)
    }

    pub fn finish(self) -> Result<(), CodecError> {
        if self.data.is_empty() {
            Ok(())
        } else {
            Err(CodecError::Trailing)
        }
    }
}
