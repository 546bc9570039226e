//! Little-endian read/write helpers shared by the binary file formats.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn write_u16<W: Write>(w: &mut W, v: u16) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f32<W: Write>(w: &mut W, v: f32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_exact_ctx<R: Read>(r: &mut R, buf: &mut [u8], path: &Path, ctx: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::CorruptLength {
                path: path.to_path_buf(),
                detail: format!("unexpected end of file while reading {ctx}"),
            }
        } else {
            Error::Io {
                offset: 0,
                source: e,
            }
        }
    })
}

pub(crate) fn read_u16<R: Read>(r: &mut R, path: &Path, ctx: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact_ctx(r, &mut b, path, ctx)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R, path: &Path, ctx: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_ctx(r, &mut b, path, ctx)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, path: &Path, ctx: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_ctx(r, &mut b, path, ctx)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32<R: Read>(r: &mut R, path: &Path, ctx: &str) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact_ctx(r, &mut b, path, ctx)?;
    Ok(f32::from_le_bytes(b))
}

pub(crate) fn read_bytes<R: Read>(r: &mut R, len: usize, path: &Path, ctx: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    read_exact_ctx(r, &mut buf, path, ctx)?;
    Ok(buf)
}

/// Read a 4-byte magic and check it.
pub(crate) fn expect_magic<R: Read>(r: &mut R, expected: &[u8; 4], path: &Path) -> Result<()> {
    let mut m = [0u8; 4];
    read_exact_ctx(r, &mut m, path, "magic")?;
    if &m != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: *expected,
        });
    }
    Ok(())
}

/// Read a version field and check it against the single supported version.
pub(crate) fn expect_version<R: Read>(r: &mut R, supported: u16, path: &Path) -> Result<()> {
    let found = read_u16(r, path, "version")?;
    if found != supported {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            supported,
            found,
        });
    }
    Ok(())
}

/// Error if the reader still holds bytes (format files are exact-length).
pub(crate) fn expect_eof<R: Read>(r: &mut R, path: &Path) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::CorruptLength {
            path: path.to_path_buf(),
            detail: "trailing bytes after end of payload".into(),
        }),
        Err(e) => Err(Error::Io {
            offset: 0,
            source: e,
        }),
    }
}

/// Write `bytes` to `path` atomically (temp file + rename) so partially
/// written outputs are never observed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp.partial");
    std::fs::write(&tmp, bytes).map_err(|e| Error::Io {
        offset: 0,
        source: e,
    })?;
    std::fs::rename(&tmp, path).map_err(|e| Error::Io {
        offset: 0,
        source: e,
    })
}

/// Stream a payload to `path` atomically without buffering it whole.
/// The temp file lives next to `path` so the rename never crosses devices.
pub(crate) fn write_atomic_with<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let tmp = path.with_extension("tmp.partial");
    let io_err = |e: std::io::Error| Error::Io {
        offset: 0,
        source: e,
    };
    let file = std::fs::File::create(&tmp).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    write(&mut w)?;
    use std::io::Write as _;
    w.flush().map_err(io_err)?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(io_err)
}
