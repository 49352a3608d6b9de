//! 8-bit grayscale PNG for viewing; `v ↦ ⌊255 v + ½⌋`.

use std::path::Path;

use nigmat_core::Raster;

use crate::error::{io_err, Error, Result};

/// Round-half-up quantisation of a value in `[0, 1]`.
pub fn quantize(v: f32) -> Option<u8> {
    if (0.0..=1.0).contains(&v) {
        Some((v as f64 * 255.0 + 0.5).floor() as u8)
    } else {
        None
    }
}

/// Encodes a one-channel raster as grayscale or a three-channel raster as RGB.
pub fn encode_png8(r: &Raster) -> Result<Vec<u8>> {
    let color = match r.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Png(format!("{c} channels; expected 1 or 3"))),
    };
    let n = r.pixel_count();
    let c = r.channels();
    // planar -> interleaved
    let pixels = (0..n * c)
        .map(|k| {
            let index = (k % c) * n + k / c;
            let value = r.data()[index];
            quantize(value).ok_or(Error::Range { index, value })
        })
        .collect::<Result<Vec<u8>>>()?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, r.width() as u32, r.height() as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&pixels)
            .map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

/// Decodes an 8-bit grayscale PNG into `(width, height, bytes)`.
pub fn decode_png8(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png("not 8-bit grayscale".into()));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

pub fn save_png8(path: impl AsRef<Path>, r: &Raster) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_png8(r)?).map_err(io_err(path))
}

/// Min–max normalised PNG of any one-channel map (heatmaps).
pub fn encode_heatmap(r: &Raster) -> Result<Vec<u8>> {
    encode_png8(&r.normalized())
}
