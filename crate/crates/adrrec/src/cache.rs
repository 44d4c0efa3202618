//! Preprocessed corpus cache: magic, version, vocabularies, per-user events.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use adrrec_core::corpus::{Event, UserSequences};

use crate::binio::*;
use crate::error::{AppError, AppResult};

pub const MAGIC: &[u8; 8] = b"ADRCORP\0";
pub const VERSION: u32 = 1;

pub fn write_corpus(w: &mut impl Write, c: &UserSequences) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u64(w, c.user_ids.len() as u64)?;
    put_u64(w, c.item_ids.len() as u64)?;
    for s in c.user_ids.iter().chain(&c.item_ids) {
        put_str(w, s)?;
    }
    for seq in &c.sequences {
        put_u64(w, seq.len() as u64)?;
        for e in seq {
            put_u32(w, e.item)?;
            put_i64(w, e.timestamp)?;
        }
    }
    Ok(())
}

pub fn read_corpus(r: &mut impl Read) -> std::io::Result<UserSequences> {
    expect_magic(r, MAGIC)?;
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("corpus cache version {version}, expected {VERSION}")));
    }
    let n_users = get_u64(r)? as usize;
    let n_items = get_u64(r)? as usize;
    let user_ids = (0..n_users).map(|_| get_str(r)).collect::<Result<Vec<_>, _>>()?;
    let item_ids = (0..n_items).map(|_| get_str(r)).collect::<Result<Vec<_>, _>>()?;
    let mut sequences = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let len = get_u64(r)? as usize;
        let mut seq = Vec::with_capacity(len);
        for _ in 0..len {
            let item = get_u32(r)?;
            if item == 0 || item as usize > n_items {
                return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("item index {item} outside 1..={n_items}")));
            }
            seq.push(Event { item, timestamp: get_i64(r)? });
        }
        sequences.push(seq);
    }
    Ok(UserSequences { user_ids, item_ids, sequences })
}

pub fn save(path: &Path, c: &UserSequences) -> AppResult<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| AppError::io(path, e))?);
    write_corpus(&mut w, c).and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> AppResult<UserSequences> {
    let mut r = BufReader::new(File::open(path).map_err(|e| AppError::io(path, e))?);
    read_corpus(&mut r).map_err(|e| AppError::io(path, e))
}

/// True when the file starts with the cache magic.
pub fn is_cache(path: &Path) -> bool {
    let mut head = [0u8; 8];
    File::open(path).and_then(|mut f| f.read_exact(&mut head)).is_ok() && &head == MAGIC
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let c = adrrec_core::synthetic::cyclic_corpus(7, 5, 3, 9, 2);
        let mut buf = Vec::new();
        write_corpus(&mut buf, &c).unwrap();
        assert_eq!(read_corpus(&mut buf.as_slice()).unwrap(), c);
        buf[0] = b'X';
        assert!(read_corpus(&mut buf.as_slice()).is_err());
    }
}
