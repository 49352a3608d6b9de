//! Flat parameter storage with named tensor views.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All trainable values of a model in one vector, with named views.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    specs: Vec<TensorSpec>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            specs: Vec::new(),
            offsets: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a zero tensor and returns its offset.
    pub fn push(&mut self, name: &str, shape: &[usize]) -> usize {
        let spec = TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
        };
        let offset = self.values.len();
        self.values.resize(offset + spec.len(), 0.0);
        self.offsets.push(offset);
        self.specs.push(spec);
        offset
    }

    /// Rebuilds a set from stored specs and values.
    pub fn from_parts(specs: Vec<TensorSpec>, values: Vec<f64>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(specs.len());
        let mut total = 0;
        for s in &specs {
            offsets.push(total);
            total += s.len();
        }
        if total != values.len() {
            return Err(Error::DimensionMismatch {
                expected: alloc::format!("{total} parameters"),
                actual: alloc::format!("{} parameters", values.len()),
            });
        }
        Ok(ParamSet {
            specs,
            offsets,
            values,
        })
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let i = self.specs.iter().position(|s| s.name == name)?;
        Some(&self.values[self.offsets[i]..self.offsets[i] + self.specs[i].len()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let i = self.specs.iter().position(|s| s.name == name)?;
        let len = self.specs[i].len();
        Some(&mut self.values[self.offsets[i]..self.offsets[i] + len])
    }

    /// Fills `[offset, offset + len)` with `N(0, std²)` draws.
    pub fn fill_normal(&mut self, offset: usize, len: usize, std: f64, rng: &mut impl Rng) {
        for v in &mut self.values[offset..offset + len] {
            let z: f64 = StandardNormal.sample(rng);
            *v = std * z;
        }
    }

    /// FNV-1a over the bit patterns of every value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}
