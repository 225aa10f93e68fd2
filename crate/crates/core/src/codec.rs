//! Little-endian binary helpers shared by dataset files and checkpoints.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;

use crate::error::{IqnError, Result};
use crate::rng::Rng;

pub fn write_magic<W: Write>(w: &mut W, magic: &[u8; 8]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

pub fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(IqnError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_u64::<LittleEndian>(v)?;
    Ok(())
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(r.read_u64::<LittleEndian>()?)
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_f64::<LittleEndian>(v)?;
    Ok(())
}

pub fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(r.read_f64::<LittleEndian>()?)
}

pub fn read_len<R: Read>(r: &mut R, limit: u64) -> Result<usize> {
    let n = read_u64(r)?;
    if n > limit {
        return Err(IqnError::Format(format!("length {n} exceeds limit {limit}")));
    }
    Ok(n as usize)
}

/// Length-prefixed vector of `f64`.
pub fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    write_u64(w, xs.len() as u64)?;
    for &x in xs {
        write_f64(w, x)?;
    }
    Ok(())
}

pub fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = read_len(r, 1 << 32)?;
    (0..n).map(|_| read_f64(r)).collect()
}

/// Reads a length-prefixed vector into an existing slice, checking the length.
pub fn read_f64s_into<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let n = read_len(r, 1 << 32)?;
    if n != out.len() {
        return Err(IqnError::Format(format!("expected {} values, found {n}", out.len())));
    }
    for x in out.iter_mut() {
        *x = read_f64(r)?;
    }
    Ok(())
}

pub fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    write_u64(w, bytes.len() as u64)?;
    w.write_all(bytes)?;
    Ok(())
}

pub fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let n = read_len(r, 1 << 32)?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// ChaCha state as (32-byte seed, stream id, 128-bit word position).
pub fn write_rng<W: Write>(w: &mut W, rng: &Rng) -> Result<()> {
    w.write_all(&rng.get_seed())?;
    write_u64(w, rng.get_stream())?;
    w.write_u128::<LittleEndian>(rng.get_word_pos())?;
    Ok(())
}

pub fn read_rng<R: Read>(r: &mut R) -> Result<Rng> {
    let mut seed = [0u8; 32];
    r.read_exact(&mut seed)?;
    let stream = read_u64(r)?;
    let pos = r.read_u128::<LittleEndian>()?;
    let mut rng = Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(pos);
    Ok(rng)
}
