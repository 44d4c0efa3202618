//! Little-endian primitives shared by the cache and checkpoint containers.

use std::io::{self, Read, Write};

pub fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn put_i64(w: &mut impl Write, v: i64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn put_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub fn put_f64s(w: &mut impl Write, vals: &[f64]) -> io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn get_u32(r: &mut impl Read) -> io::Result<u32> {
    take(r).map(u32::from_le_bytes)
}

pub fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    take(r).map(u64::from_le_bytes)
}

pub fn get_i64(r: &mut impl Read) -> io::Result<i64> {
    take(r).map(i64::from_le_bytes)
}

pub fn get_str(r: &mut impl Read) -> io::Result<String> {
    let n = get_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn get_f64s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut b = vec![0u8; n * 8];
    r.read_exact(&mut b)?;
    Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn expect_magic(r: &mut impl Read, magic: &[u8; 8]) -> io::Result<()> {
    let got: [u8; 8] = take(r)?;
    if &got != magic {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "unrecognized file header"));
    }
    Ok(())
}
