//! On-disk tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  b"SPKT"
//! version u8       1
//! dtype   u8       0 = u8 spikes, 1 = i8 weights, 2 = i32 values
//! meta    u8       spike bit-width for dtype 0, otherwise 0
//! ndim    u8
//! dims    ndim x u32
//! payload row-major elements
//! ```
//!
//! Spike tensors use axis order `(t, c, h, w)`, weights `(c_o, c_i, k_h, k_w)`.

use std::io::{Read, Write};
use std::path::Path;

use crate::ir::{SpikeTensor, WeightTensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPKT";
pub const VERSION: u8 = 1;

pub const DTYPE_SPIKE_U8: u8 = 0;
pub const DTYPE_WEIGHT_I8: u8 = 1;
pub const DTYPE_VALUE_I32: u8 = 2;

struct Header {
    dtype: u8,
    meta: u8,
    dims: Vec<u32>,
}

fn write_header(w: &mut impl Write, dtype: u8, meta: u8, dims: &[u32]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, dtype, meta, dims.len() as u8])?;
    for &d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Blob(format!("{}: {e}", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::Blob(format!("{}: bad magic {magic:?}", path.display())));
    }
    let mut fixed = [0u8; 4];
    r.read_exact(&mut fixed)?;
    let [version, dtype, meta, ndim] = fixed;
    if version != VERSION {
        return Err(Error::Blob(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        dims.push(u32::from_le_bytes(b));
    }
    Ok(Header { dtype, meta, dims })
}

fn element_count(dims: &[u32], path: &Path) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d as usize)
            .ok_or_else(|| Error::Blob(format!("{}: dimension overflow", path.display())))
    })
}

pub fn write_spike_tensor(path: &Path, t: &SpikeTensor) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_header(
        &mut f,
        DTYPE_SPIKE_U8,
        t.bits(),
        &[t.t as u32, t.c as u32, t.h as u32, t.w as u32],
    )?;
    f.write_all(t.data())?;
    Ok(())
}

pub fn read_spike_tensor(path: &Path) -> Result<SpikeTensor> {
    let mut f = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let h = read_header(&mut f, path)?;
    if h.dtype != DTYPE_SPIKE_U8 || h.dims.len() != 4 {
        return Err(Error::Blob(format!(
            "{}: not a 4-d spike tensor (dtype {}, {} dims)",
            path.display(),
            h.dtype,
            h.dims.len()
        )));
    }
    let count = element_count(&h.dims, path)?;
    let mut data = vec![0u8; count];
    f.read_exact(&mut data)
        .map_err(|e| Error::Blob(format!("{}: truncated payload: {e}", path.display())))?;
    SpikeTensor::from_data(
        h.dims[0] as usize,
        h.dims[1] as usize,
        h.dims[2] as usize,
        h.dims[3] as usize,
        h.meta,
        data,
    )
}

pub fn write_weight_tensor(path: &Path, t: &WeightTensor) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_header(
        &mut f,
        DTYPE_WEIGHT_I8,
        0,
        &[t.c_o as u32, t.c_i as u32, t.k_h as u32, t.k_w as u32],
    )?;
    let bytes: Vec<u8> = t.data().iter().map(|&w| w as u8).collect();
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_weight_tensor(path: &Path) -> Result<WeightTensor> {
    let mut f = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let h = read_header(&mut f, path)?;
    if h.dtype != DTYPE_WEIGHT_I8 || h.dims.len() != 4 {
        return Err(Error::Blob(format!(
            "{}: not a 4-d weight tensor",
            path.display()
        )));
    }
    let count = element_count(&h.dims, path)?;
    let mut data = vec![0u8; count];
    f.read_exact(&mut data)
        .map_err(|e| Error::Blob(format!("{}: truncated payload: {e}", path.display())))?;
    WeightTensor::from_data(
        h.dims[0] as usize,
        h.dims[1] as usize,
        h.dims[2] as usize,
        h.dims[3] as usize,
        data.into_iter().map(|b| b as i8).collect(),
    )
}

pub fn write_i32_vector(path: &Path, values: &[i32]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_header(&mut f, DTYPE_VALUE_I32, 0, &[values.len() as u32])?;
    for &v in values {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_i32_vector(path: &Path) -> Result<Vec<i32>> {
    let mut f = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let h = read_header(&mut f, path)?;
    if h.dtype != DTYPE_VALUE_I32 || h.dims.len() != 1 {
        return Err(Error::Blob(format!("{}: not an i32 vector", path.display())));
    }
    let count = element_count(&h.dims, path)?;
    let mut values = Vec::with_capacity(count);
    let mut b = [0u8; 4];
    for _ in 0..count {
        f.read_exact(&mut b)
            .map_err(|e| Error::Blob(format!("{}: truncated payload: {e}", path.display())))?;
        values.push(i32::from_le_bytes(b));
    }
    Ok(values)
}
