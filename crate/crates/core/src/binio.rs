//! Little-endian primitives shared by the trajectory and checkpoint formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) fn put_u8(w: &mut impl Write, v: u8) -> Result<()> {
    Ok(w.write_all(&[v])?)
}

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

pub(crate) fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

pub(crate) fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

pub(crate) fn put_len(w: &mut impl Write, n: usize, what: &'static str) -> Result<()> {
    let v = u32::try_from(n).map_err(|_| Error::Format { what, detail: format!("{n} does not fit in u32") })?;
    put_u32(w, v)
}

pub(crate) fn put_str(w: &mut impl Write, s: &str, what: &'static str) -> Result<()> {
    put_len(w, s.len(), what)?;
    Ok(w.write_all(s.as_bytes())?)
}

pub(crate) fn put_f32s(w: &mut impl Write, data: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(w.write_all(&buf)?)
}

fn eof(what: &'static str) -> impl Fn(std::io::Error) -> Error {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format { what, detail: "truncated file".into() }
        } else {
            Error::Io(e)
        }
    }
}

pub(crate) fn get_bytes<const N: usize>(r: &mut impl Read, what: &'static str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(eof(what))?;
    Ok(b)
}

pub(crate) fn get_u8(r: &mut impl Read, what: &'static str) -> Result<u8> {
    Ok(get_bytes::<1>(r, what)?[0])
}

pub(crate) fn get_u32(r: &mut impl Read, what: &'static str) -> Result<u32> {
    Ok(u32::from_le_bytes(get_bytes(r, what)?))
}

pub(crate) fn get_u64(r: &mut impl Read, what: &'static str) -> Result<u64> {
    Ok(u64::from_le_bytes(get_bytes(r, what)?))
}

pub(crate) fn get_f64(r: &mut impl Read, what: &'static str) -> Result<f64> {
    Ok(f64::from_le_bytes(get_bytes(r, what)?))
}

pub(crate) fn get_str(r: &mut impl Read, what: &'static str, max: usize) -> Result<String> {
    let n = get_u32(r, what)? as usize;
    if n > max {
        return Err(Error::Format { what, detail: format!("string length {n} exceeds {max}") });
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(eof(what))?;
    String::from_utf8(b).map_err(|_| Error::Format { what, detail: "invalid UTF-8".into() })
}

pub(crate) fn get_f32s(r: &mut impl Read, n: usize, what: &'static str) -> Result<Vec<f32>> {
    let mut b = vec![0u8; n * 4];
    r.read_exact(&mut b).map_err(eof(what))?;
    Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}
