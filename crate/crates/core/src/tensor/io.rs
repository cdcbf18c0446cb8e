//! Binary tensor and checkpoint files.
//!
//! Tensor: `"AVCT"`, version `u32 = 1`, `ndim: u32`, `ndim` dims as `u64`,
//! then the payload as `f32`, all little-endian, row-major.
//!
//! Checkpoint: `"AVCK"` followed by zero or more records of
//! `(name_len: u32, UTF-8 name, tensor)` until end of file.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::{Result, Tensor, TensorError};
use crate::scalar::Real;

pub const TENSOR_MAGIC: &[u8; 4] = b"AVCT";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AVCK";
pub const VERSION: u32 = 1;

pub fn write_tensor<T: Real, W: Write>(out: &mut W, t: &Tensor<T>) -> Result<()> {
    out.write_all(TENSOR_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(t.dims().len() as u32).to_le_bytes())?;
    for &d in t.dims() {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 4);
    for &x in t.data() {
        buf.extend_from_slice(&x.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensor<T: Real, R: Read>(r: &mut R) -> Result<Tensor<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(TensorError::Format(format!(
            "bad tensor magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(TensorError::Format(format!(
            "unsupported tensor version {}",
            version
        )));
    }
    let ndim = read_u32(r)? as usize;
    if ndim == 0 || ndim > 8 {
        return Err(TensorError::Format(format!("unsupported ndim {}", ndim)));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        dims.push(u64::from_le_bytes(b) as usize);
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n > 0 && n < (1 << 31))
        .ok_or_else(|| TensorError::Format(format!("implausible dims {:?}", dims)))?;
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Tensor::new(&dims, data)
}

pub fn save_tensor<T: Real>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor<T: Real>(path: &Path) -> Result<Tensor<T>> {
    read_tensor(&mut BufReader::new(File::open(path)?))
}

pub fn write_checkpoint<'a, T: Real + 'a, W: Write>(
    out: &mut W,
    entries: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    for (name, t) in entries {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        write_tensor(out, t)?;
    }
    Ok(())
}

pub fn read_checkpoint<T: Real, R: Read>(r: &mut R) -> Result<Vec<(String, Tensor<T>)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TensorError::Format(format!(
            "bad checkpoint magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut entries = Vec::new();
    loop {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let len = u32::from_le_bytes(len) as usize;
        if len > 4096 {
            return Err(TensorError::Format(format!(
                "name length {} too large",
                len
            )));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| TensorError::Format("checkpoint name is not UTF-8".into()))?;
        let t = read_tensor(r)?;
        entries.push((name, t));
    }
    Ok(entries)
}

pub fn checkpoint_bytes<'a, T: Real + 'a>(
    entries: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, entries).expect("writing to a Vec cannot fail");
    buf
}
