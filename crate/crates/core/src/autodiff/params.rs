//! Flat parameter storage with named, shaped slices.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SliceInfo {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl SliceInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A flat `f64` vector carved into named, shaped, non-overlapping slices.
///
/// Slices are registered once (shapes immutable afterwards) and together
/// cover the whole vector. Gradients produced by the tape are aligned with
/// this layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    values: Vec<f64>,
    slices: BTreeMap<String, SliceInfo>,
    order: Vec<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            values: Vec::new(),
            slices: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    /// Append a zero-initialized slice.
    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<SliceInfo> {
        if self.slices.contains_key(name) {
            return Err(Error::InvalidConfig(format!("duplicate slice '{name}'")));
        }
        let info = SliceInfo {
            offset: self.values.len(),
            rows,
            cols,
        };
        self.values.extend(std::iter::repeat_n(0.0, rows * cols));
        self.slices.insert(name.to_string(), info);
        self.order.push(name.to_string());
        Ok(info)
    }

    /// Append a slice initialized uniformly in [-a, a] with
    /// a = sqrt(6 / (fan_in + fan_out)).
    pub fn add_glorot(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut SeedStream,
    ) -> Result<SliceInfo> {
        let info = self.add_zeros(name, rows, cols)?;
        let a = (6.0 / (rows + cols) as f64).sqrt();
        for v in &mut self.values[info.offset..info.offset + info.len()] {
            *v = rng.uniform_in(-a, a);
        }
        Ok(info)
    }

    /// Append a slice copying the given matrix.
    pub fn add_matrix(&mut self, name: &str, m: &Matrix) -> Result<SliceInfo> {
        let info = self.add_zeros(name, m.rows(), m.cols())?;
        self.values[info.offset..info.offset + info.len()].copy_from_slice(m.data());
        Ok(info)
    }

    pub fn info(&self, name: &str) -> Result<SliceInfo> {
        self.slices
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown slice '{name}'")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.slices.contains_key(name)
    }

    /// Slice values as a matrix copy.
    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        let info = self.info(name)?;
        Ok(Matrix::from_vec(
            info.rows,
            info.cols,
            self.values[info.offset..info.offset + info.len()].to_vec(),
        ))
    }

    pub fn set_matrix(&mut self, name: &str, m: &Matrix) -> Result<()> {
        let info = self.info(name)?;
        if (info.rows, info.cols) != m.dim() {
            return Err(Error::ShapeMismatch(format!(
                "slice '{name}' is {}x{}, got {:?}",
                info.rows,
                info.cols,
                m.dim()
            )));
        }
        self.values[info.offset..info.offset + info.len()].copy_from_slice(m.data());
        Ok(())
    }

    /// Slice names in registration order.
    pub fn names(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.values[i] = v;
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_disjoint_and_cover() {
        let mut rng = SeedStream::new(5);
        let mut store = ParamStore::new();
        store.add_glorot("w", 3, 4, &mut rng).unwrap();
        store.add_zeros("b", 1, 4).unwrap();
        let w = store.info("w").unwrap();
        let b = store.info("b").unwrap();
        assert_eq!(w.offset, 0);
        assert_eq!(b.offset, 12);
        assert_eq!(store.len(), 16);
        assert!(store.info("nope").is_err());
    }

    #[test]
    fn duplicate_slice_rejected() {
        let mut store = ParamStore::new();
        store.add_zeros("w", 1, 1).unwrap();
        assert!(store.add_zeros("w", 2, 2).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = SeedStream::new(11);
        let mut store = ParamStore::new();
        store.add_glorot("w", 10, 20, &mut rng).unwrap();
        let a = (6.0 / 30.0f64).sqrt();
        assert!(store.values().iter().all(|&v| v.abs() <= a));
        assert!(store.values().iter().any(|&v| v != 0.0));
    }
}
