//! Little-endian binary framing shared by the snapshot, basis and field
//! archives: an 8-byte magic, a body, and a trailing CRC-32 over everything
//! before it.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8]) -> Self {
        Self {
            buf: magic.to_vec(),
        }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn reals<T: Real>(&mut self, xs: &[T]) {
        for &x in xs {
            self.f64(x.as_f64());
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks length, magic family, version and CRC before handing out a reader.
    pub fn open(bytes: &'a [u8], magic: &[u8; 8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::CorruptArchive(format!("only {} bytes", bytes.len())));
        }
        if bytes[..6] != magic[..6] {
            return Err(Error::CorruptArchive("bad magic".into()));
        }
        if bytes[..8] != magic[..] {
            return Err(Error::UnsupportedVersion(
                String::from_utf8_lossy(&bytes[..8]).into_owned(),
            ));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::CorruptArchive("CRC mismatch".into()));
        }
        Ok(Self { body, pos: 8 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.body.len() {
            return Err(Error::CorruptArchive("unexpected end of data".into()));
        }
        let s = &self.body[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::CorruptArchive("non UTF-8 identifier".into()))
    }

    pub fn reals<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        if n.checked_mul(8)
            .is_none_or(|b| self.pos + b > self.body.len())
        {
            return Err(Error::CorruptArchive("unexpected end of data".into()));
        }
        (0..n).map(|_| self.f64().map(T::lit)).collect()
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.body.len() {
            return Err(Error::CorruptArchive(format!(
                "{} trailing bytes",
                self.body.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// CRC-32 of a file, used for manifests and determinism checks. A file that
/// ends in the CRC-32 of its own body (every archive written here) reports
/// that body CRC: the CRC of a body followed by its own CRC is the same
/// constant for any body, so hashing the whole file would tell nothing apart.
pub fn file_crc(path: &Path) -> Result<u32> {
    let bytes = fs::read(path)?;
    if bytes.len() >= 4 {
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let crc = crc32fast::hash(body);
        if crc == stored {
            return Ok(crc);
        }
    }
    Ok(crc32fast::hash(&bytes))
}

const FIELD_MAGIC: &[u8; 8] = b"DDFFLD01";

/// Raw dump of a global field for external plotting: magic `DDFFLD01`, label,
/// component count (u32), node count (u64), values as f64, CRC-32.
pub fn save_field_dump<T: Real>(
    path: &Path,
    label: &str,
    n_components: usize,
    values: &[T],
) -> Result<()> {
    let n_nodes = values.len().checked_div(n_components).unwrap_or(0);
    let mut w = Writer::new(FIELD_MAGIC);
    w.str(label);
    w.u32(n_components as u32);
    w.u64(n_nodes as u64);
    w.reals(values);
    write_file(path, &w.finish())
}

/// Returns `(label, n_components, values)`.
pub fn load_field_dump<T: Real>(path: &Path) -> Result<(String, usize, Vec<T>)> {
    let bytes = fs::read(path)?;
    let mut r = Reader::open(&bytes, FIELD_MAGIC)?;
    let label = r.str()?;
    let nc = r.u32()? as usize;
    let nn = r.u64()? as usize;
    let values = r.reals(nc * nn)?;
    r.finish()?;
    Ok((label, nc, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_dump_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        let vals = vec![1.5f64, -2.25, 3.0, 0.1];
        save_field_dump(&p, "u", 2, &vals).unwrap();
        let (label, nc, back) = load_field_dump::<f64>(&p).unwrap();
        assert_eq!((label.as_str(), nc), ("u", 2));
        assert_eq!(back, vals);

        let mut bytes = fs::read(&p).unwrap();
        bytes[20] ^= 0x40;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            load_field_dump::<f64>(&p),
            Err(Error::CorruptArchive(_))
        ));
    }

    #[test]
    fn file_crc_tells_archives_apart() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b, c) = (
            dir.path().join("a"),
            dir.path().join("b"),
            dir.path().join("c"),
        );
        save_field_dump(&a, "u", 1, &[1.0f64, 2.0]).unwrap();
        save_field_dump(&b, "u", 1, &[1.0f64, 2.5]).unwrap();
        assert_ne!(file_crc(&a).unwrap(), file_crc(&b).unwrap());
        let body = fs::read(&a).unwrap();
        assert_eq!(
            file_crc(&a).unwrap(),
            crc32fast::hash(&body[..body.len() - 4])
        );
        fs::write(&c, b"label,value\n").unwrap();
        assert_eq!(file_crc(&c).unwrap(), crc32fast::hash(b"label,value\n"));
    }
}
