//! Dense per-pixel maps with validity masks.
//!
//! Values are stored as `f32` in row-major order. A pixel is valid when its
//! mask bit is set; masked pixels hold NaN and are skipped by every statistic
//! and metric.

use std::fmt;
use std::marker::PhantomData;

use crate::error::{Error, Result};

/// Marker for maps holding disparities, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Disparity;

/// Marker for maps holding depths, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Depth;

/// Single-channel float map tagged with what it measures.
#[derive(Clone)]
pub struct ScalarMap<K> {
    width: usize,
    height: usize,
    values: Vec<f32>,
    mask: Vec<bool>,
    kind: PhantomData<K>,
}

pub type DisparityMap = ScalarMap<Disparity>;
pub type DepthMap = ScalarMap<Depth>;

/// Equal when dimensions, masks and valid values agree; masked payloads are
/// ignored.
impl<K> PartialEq for ScalarMap<K> {
    fn eq(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && self.mask == other.mask
            && self
                .iter_valid()
                .zip(other.iter_valid())
                .all(|(a, b)| a == b)
    }
}

impl<K> fmt::Debug for ScalarMap<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarMap")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("valid", &self.valid_count())
            .finish()
    }
}

impl<K> ScalarMap<K> {
    /// Every pixel masked.
    pub fn masked(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![f32::NAN; width * height],
            mask: vec![false; width * height],
            kind: PhantomData,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        let mut map = Self::masked(width, height);
        for i in 0..width * height {
            map.set_index(i, value);
        }
        map
    }

    /// Builds a map whose mask is derived from finiteness (NaN/Inf = invalid).
    pub fn from_values(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        check_len(width, height, values.len())?;
        let mask = values.iter().map(|v| v.is_finite()).collect();
        let mut map = Self {
            width,
            height,
            values,
            mask,
            kind: PhantomData,
        };
        map.scrub();
        Ok(map)
    }

    /// Builds a map from explicit values and mask; non-finite values are
    /// masked regardless of the mask bit.
    pub fn from_parts(
        width: usize,
        height: usize,
        values: Vec<f32>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        check_len(width, height, values.len())?;
        check_len(width, height, mask.len())?;
        let mut map = Self {
            width,
            height,
            values,
            mask,
            kind: PhantomData,
        };
        map.scrub();
        Ok(map)
    }

    fn scrub(&mut self) {
        for (v, m) in self.values.iter_mut().zip(self.mask.iter_mut()) {
            if !v.is_finite() {
                *m = false;
            }
            if !*m {
                *v = f32::NAN;
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        if x >= self.width || y >= self.height {
            return None;
        }
        self.get_index(self.index(x, y))
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<f32> {
        if self.mask[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.mask[self.index(x, y)]
    }

    /// Sets a pixel; non-finite values mask it.
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        let i = self.index(x, y);
        self.set_index(i, value);
    }

    pub fn set_index(&mut self, i: usize, value: f32) {
        if value.is_finite() {
            self.values[i] = value;
            self.mask[i] = true;
        } else {
            self.invalidate_index(i);
        }
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.invalidate_index(i);
    }

    pub fn invalidate_index(&mut self, i: usize) {
        self.values[i] = f32::NAN;
        self.mask[i] = false;
    }

    /// Raw values; masked pixels are NaN.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(row-major index, value)` for each valid pixel, in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f32)> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter_map(|(i, (&v, &m))| m.then_some((i, v)))
    }

    pub fn map_valid(&self, mut f: impl FnMut(f32) -> f32) -> Self {
        let mut out = Self::masked(self.width, self.height);
        for (i, v) in self.iter_valid() {
            out.set_index(i, f(v));
        }
        out
    }
}

/// Per-pixel unit surface normals.
#[derive(Clone)]
pub struct NormalMap {
    width: usize,
    height: usize,
    values: Vec<[f32; 3]>,
    mask: Vec<bool>,
}

impl PartialEq for NormalMap {
    fn eq(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && self.mask == other.mask
            && self
                .iter_valid()
                .zip(other.iter_valid())
                .all(|(a, b)| a == b)
    }
}

impl fmt::Debug for NormalMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalMap")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("valid", &self.valid_count())
            .finish()
    }
}

const NAN3: [f32; 3] = [f32::NAN; 3];

impl NormalMap {
    pub fn masked(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![NAN3; width * height],
            mask: vec![false; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, n: [f32; 3]) -> Self {
        let mut map = Self::masked(width, height);
        for i in 0..width * height {
            map.set_index(i, n);
        }
        map
    }

    /// Mask derived from finiteness of all three components. Vectors are
    /// stored as given; use [`crate::d2n::normalize_normals`] to enforce unit
    /// length.
    pub fn from_values(width: usize, height: usize, values: Vec<[f32; 3]>) -> Result<Self> {
        check_len(width, height, values.len())?;
        let mut map = Self::masked(width, height);
        for (i, n) in values.into_iter().enumerate() {
            map.set_index(i, n);
        }
        Ok(map)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn get(&self, x: usize, y: usize) -> Option<[f32; 3]> {
        if x >= self.width || y >= self.height {
            return None;
        }
        self.get_index(self.index(x, y))
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<[f32; 3]> {
        if self.mask[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.mask[self.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, n: [f32; 3]) {
        let i = self.index(x, y);
        self.set_index(i, n);
    }

    pub fn set_index(&mut self, i: usize, n: [f32; 3]) {
        if n.iter().all(|c| c.is_finite()) {
            self.values[i] = n;
            self.mask[i] = true;
        } else {
            self.invalidate_index(i);
        }
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.invalidate_index(i);
    }

    pub fn invalidate_index(&mut self, i: usize) {
        self.values[i] = NAN3;
        self.mask[i] = false;
    }

    pub fn values(&self) -> &[[f32; 3]] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, [f32; 3])> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter_map(|(i, (&v, &m))| m.then_some((i, v)))
    }
}

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::DimensionMismatch(format!("{width}x{height} overflows")))?;
    if expected != len {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} map needs {expected} values, got {len}"
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}
