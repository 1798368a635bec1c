//! Config digests embedded in every emitted artifact.
//!
//! Binary files carry an optional trailer (`CDIG` followed by the 32-byte
//! SHA-256 of the canonical config text) after their payload. Text outputs
//! carry a leading `# config_digest: <hex>` comment line.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TRAILER_TAG: &[u8; 4] = b"CDIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigDigest(pub [u8; 32]);

impl ConfigDigest {
    pub fn of_text(text: &str) -> Self {
        ConfigDigest(Sha256::digest(text.as_bytes()).into())
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn comment_line(&self) -> String {
        format!("# config_digest: {}\n", self.hex())
    }
}

pub(crate) fn write_trailer(buf: &mut Vec<u8>, digest: Option<ConfigDigest>) {
    if let Some(d) = digest {
        buf.extend_from_slice(TRAILER_TAG);
        buf.extend_from_slice(&d.0);
    }
}

pub(crate) fn read_trailer(rest: &[u8]) -> Result<Option<ConfigDigest>> {
    match rest.len() {
        0 => Ok(None),
        36 if &rest[..4] == TRAILER_TAG => {
            let mut d = [0u8; 32];
            d.copy_from_slice(&rest[4..]);
            Ok(Some(ConfigDigest(d)))
        }
        n => Err(Error::Format(format!("{n} unexpected trailing bytes"))),
    }
}

/// Little-endian cursor over a byte buffer.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflows usize".into()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }
}
