//! FRAS: `"FRAS"`, then width, height, channels as `u32` LE, then the planar
//! `f32` LE payload.

use std::path::Path;

use nigmat_core::Raster;

use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"FRAS";
pub const HEADER_LEN: usize = 16;

/// Non-finite values are rejected here too, so everything written can be read back.
pub fn encode(r: &Raster) -> Result<Vec<u8>> {
    if let Some(i) = r.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!("non-finite value at index {i}")));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * r.data().len());
    out.extend_from_slice(MAGIC);
    for d in [r.width(), r.height(), r.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in r.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let dim =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (w, h, c) = (dim(0), dim(1), dim(2));
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Format(format!("{w}x{h}x{c} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * n {
        return Err(Error::Format(format!(
            "payload is {} bytes, {w}x{h}x{c} needs {}",
            payload.len(),
            4 * n
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!("non-finite value at index {i}")));
    }
    Ok(Raster::from_vec(w, h, c, data)?)
}

pub fn save_fras(path: impl AsRef<Path>, r: &Raster) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(r)?).map_err(io_err(path))
}

pub fn load_fras(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(io_err(path))?)
}
