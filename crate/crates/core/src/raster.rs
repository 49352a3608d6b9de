//! Planar float rasters shared by every stage of the pipeline.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A `width × height × channels` image of `f32` values.
///
/// Storage is row-major and planar: all of channel 0, then all of channel 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Wraps `data`, checking its length against the dimensions.
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: alloc::format!("{expected} values"),
                actual: alloc::format!("{} values", data.len()),
            });
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel raster built from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of pixels in one plane.
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f32] {
        let n = self.pixel_count();
        &mut self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, x: usize, y: usize) -> f32 {
        self.data[(channel * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, x: usize, y: usize, value: f32) {
        self.data[(channel * self.height + y) * self.width + x] = value;
    }

    pub fn same_size(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_size(&self, other: &Raster) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::dims(
                (self.width, self.height),
                (other.width, other.height),
            ))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the `w × h` window at `(x0, y0)` from every channel.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Raster> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::OutOfBounds(alloc::format!(
                "crop {w}x{h} at ({x0},{y0}) in {}x{}",
                self.width,
                self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * self.channels);
        for c in 0..self.channels {
            let plane = self.plane(c);
            for y in y0..y0 + h {
                let row = y * self.width;
                data.extend_from_slice(&plane[row + x0..row + x0 + w]);
            }
        }
        Ok(Raster {
            width: w,
            height: h,
            channels: self.channels,
            data,
        })
    }

    /// Stacks the planes of `self` followed by those of `other`.
    pub fn concat_channels(&self, other: &Raster) -> Result<Raster> {
        self.ensure_same_size(other)?;
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Raster {
            width: self.width,
            height: self.height,
            channels: self.channels + other.channels,
            data,
        })
    }

    /// Single-channel raster holding plane `channel`.
    pub fn channel(&self, channel: usize) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.plane(channel).to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Mean over all values, accumulated in `f64`.
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Min–max normalizes a copy into `[0, 1]`; constant rasters map to zero.
    /// Non-finite values are treated as the maximum.
    pub fn normalized(&self) -> Raster {
        let finite = self.data.iter().copied().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        let span = hi - lo;
        self.map(|v| {
            if !v.is_finite() {
                1.0
            } else if span > 0.0 {
                ((v - lo) / span).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_indexing() {
        let r = Raster::from_vec(2, 2, 2, (0..8).map(|v| v as f32).collect()).unwrap();
        assert_eq!(r.get(0, 1, 0), 1.0);
        assert_eq!(r.get(0, 0, 1), 2.0);
        assert_eq!(r.get(1, 0, 0), 4.0);
        assert_eq!(r.plane(1), &[4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn rejects_bad_length() {
        assert!(Raster::from_vec(2, 2, 1, alloc::vec![0.0; 3]).is_err());
    }

    #[test]
    fn crop_copies_every_channel() {
        let r = Raster::from_vec(3, 3, 2, (0..18).map(|v| v as f32).collect()).unwrap();
        let c = r.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[4.0, 5.0, 7.0, 8.0, 13.0, 14.0, 16.0, 17.0]);
        assert!(r.crop(2, 2, 2, 2).is_err());
    }

    #[test]
    fn normalized_constant_is_zero() {
        let r = Raster::filled(3, 2, 1, 4.0);
        assert!(r.normalized().data().iter().all(|&v| v == 0.0));
    }
}
