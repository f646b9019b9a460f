//! Small helpers shared by the binary file formats (datasets, checkpoints,
//! state streams): magic headers, length prefixes and little-endian
//! primitives.

use crate::error::{Error, Result};
use std::io::{Read, Write};

pub fn write_magic(w: &mut impl Write, magic: &[u8; 4], version: u16) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&version.to_le_bytes())?;
    Ok(())
}

pub fn read_magic(r: &mut impl Read, magic: &[u8; 4], what: &'static str) -> Result<u16> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::format(what, format!("bad magic {m:?}")));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v)?;
    Ok(u16::from_le_bytes(v))
}

pub fn write_u16(w: &mut impl Write, v: u16) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    write_u16(w, s.len() as u16)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_string(r: &mut impl Read, what: &'static str) -> Result<String> {
    let len = read_u16(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::format(what, e.to_string()))
}

pub fn write_f64_slice(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        write_f64(w, *v)?;
    }
    Ok(())
}

pub fn read_f64_vec(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

/// Pack booleans into bytes, LSB-first.
pub fn write_bits(w: &mut impl Write, bits: &[bool]) -> Result<()> {
    let mut byte = 0u8;
    for (i, &b) in bits.iter().enumerate() {
        if b {
            byte |= 1 << (i % 8);
        }
        if i % 8 == 7 {
            w.write_all(&[byte])?;
            byte = 0;
        }
    }
    if bits.len() % 8 != 0 {
        w.write_all(&[byte])?;
    }
    Ok(())
}

pub fn read_bits(r: &mut impl Read, len: usize) -> Result<Vec<bool>> {
    let n_bytes = len.div_ceil(8);
    let mut bytes = vec![0u8; n_bytes];
    r.read_exact(&mut bytes)?;
    Ok((0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_round_trip() {
        let bits: Vec<bool> = (0..19).map(|i| i % 3 == 0).collect();
        let mut buf = Vec::new();
        write_bits(&mut buf, &bits).unwrap();
        assert_eq!(buf.len(), 3);
        let back = read_bits(&mut buf.as_slice(), 19).unwrap();
        assert_eq!(bits, back);
    }

    #[test]
    fn magic_mismatch_is_error() {
        let mut buf = Vec::new();
        write_magic(&mut buf, b"ABCD", 3).unwrap();
        assert!(read_magic(&mut buf.as_slice(), b"ABCE", "test").is_err());
        assert_eq!(read_magic(&mut buf.as_slice(), b"ABCD", "test").unwrap(), 3);
    }
}
