//! Binary container for named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "DDIATTN1"
//! version    u32
//! count      u32
//! manifest   count entries of: name_len u32, name bytes (UTF-8),
//!            rank u32, extents rank x u64
//! data       count blocks of f64 values, row-major, in manifest order
//! ```
//!
//! Writing then reading then writing again is byte-identical.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"DDIATTN1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("container io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad container magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt container: {0}")]
    Corrupt(String),
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> io::Result<()> {
    write_u32(w, bytes.len() as u32)?;
    w.write_all(bytes)
}

pub fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_string<R: Read>(r: &mut R, limit: u32) -> Result<String, ContainerError> {
    let len = read_u32(r)?;
    if len > limit {
        return Err(ContainerError::Corrupt(format!(
            "string length {} exceeds limit {}",
            len, limit
        )));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| ContainerError::Corrupt(format!("invalid utf-8: {}", e)))
}

/// Serialize named tensors: a manifest of names and shapes followed by the
/// raw values.
pub fn write_tensors<W: Write>(w: &mut W, entries: &[(&str, &Tensor)]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, entries.len() as u32)?;
    for (name, tensor) in entries {
        write_bytes(w, name.as_bytes())?;
        write_u32(w, tensor.shape().len() as u32)?;
        for &extent in tensor.shape() {
            write_u64(w, extent as u64)?;
        }
    }
    for (_, tensor) in entries {
        for &v in tensor.data() {
            write_f64(w, v)?;
        }
    }
    Ok(())
}

/// Read back what [`write_tensors`] produced, in manifest order.
pub fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor)>, ContainerError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let count = read_u32(r)?;
    let mut manifest = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name = read_string(r, 1 << 16)?;
        let rank = read_u32(r)?;
        if rank > 8 {
            return Err(ContainerError::Corrupt(format!("rank {} too large", rank)));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(read_u64(r)? as usize);
        }
        manifest.push((name, shape));
    }
    let mut out = Vec::with_capacity(manifest.len());
    for (name, shape) in manifest {
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(read_f64(r)?);
        }
        out.push((name, Tensor::new(shape, data)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_exact() {
        let a = Tensor::matrix(2, 3, vec![1.0, -2.5, 3.0, 0.0, 5.5, -6.25]);
        let b = Tensor::vector(vec![0.125, f64::MIN_POSITIVE, 1e300]);
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, &[("alpha", &a), ("beta", &b)]).unwrap();

        let back = read_tensors(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "alpha");
        assert_eq!(back[0].1, a);
        assert_eq!(back[1].1, b);

        let mut again = Vec::new();
        write_tensors(&mut again, &[("alpha", &back[0].1), ("beta", &back[1].1)]).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn rejects_bad_magic() {
        let bytes = b"NOTMAGIC\x01\x00\x00\x00\x00\x00\x00\x00";
        assert!(matches!(
            read_tensors(&mut bytes.as_slice()),
            Err(ContainerError::BadMagic)
        ));
    }

    #[test]
    fn rejects_truncated_data() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, &[("a", &a)]).unwrap();
        bytes.truncate(bytes.len() - 4);
        assert!(read_tensors(&mut bytes.as_slice()).is_err());
    }
}
