//! Regular space-time grids and gappy observations on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Cell size in degrees.
    pub cell_deg: f64,
    /// Time step in days.
    pub dt_days: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self { cell_deg: 0.1, dt_days: 1.0 }
    }
}

/// `T x H x W` field stored time-major, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeq {
    t: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
    pub grid: Grid,
}

impl FieldSeq {
    pub fn new(t: usize, h: usize, w: usize, data: Vec<f64>, grid: Grid) -> Result<Self> {
        if t == 0 || h == 0 || w == 0 {
            return Err(Error::Invalid(format!("empty field extent {t}x{h}x{w}")));
        }
        if data.len() != t * h * w {
            return Err(Error::shape("field", format!("{} values for {t}x{h}x{w}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { t, h, w, data, grid })
    }

    pub fn zeros(t: usize, h: usize, w: usize, grid: Grid) -> Self {
        Self::new(t, h, w, vec![0.0; t * h * w], grid).expect("nonzero extents")
    }

    pub fn from_fn(t: usize, h: usize, w: usize, grid: Grid, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(t * h * w);
        for k in 0..t {
            for i in 0..h {
                for j in 0..w {
                    data.push(f(k, i, j));
                }
            }
        }
        Self { t, h, w, data, grid }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }

    pub fn len_t(&self) -> usize {
        self.t
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.h + i) * self.w + j
    }

    pub fn get(&self, t: usize, i: usize, j: usize) -> f64 {
        self.data[self.index(t, i, j)]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    /// Frames `start..start + len`.
    pub fn slice_t(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.t {
            return Err(Error::Invalid(format!("frames {start}..{} outside 0..{}", start + len, self.t)));
        }
        let n = self.plane_len();
        Ok(Self {
            t: len,
            h: self.h,
            w: self.w,
            data: self.data[start * n..(start + len) * n].to_vec(),
            grid: self.grid,
        })
    }

    /// Stacks frames in order.
    pub fn from_frames(frames: &[&[f64]], h: usize, w: usize, grid: Grid) -> Result<Self> {
        let data: Vec<f64> = frames.iter().flat_map(|f| f.iter().copied()).collect();
        Self::new(frames.len(), h, w, data, grid)
    }

    /// Spatial sub-window `[i0, i0 + ph) x [j0, j0 + pw)`, wrapping periodically.
    pub fn crop(&self, i0: usize, j0: usize, ph: usize, pw: usize) -> Self {
        Self::from_fn(self.t, ph, pw, self.grid, |t, i, j| self.get(t, (i0 + i) % self.h, (j0 + j) % self.w))
    }

    /// Circular shift of every frame by `(dy, dx)` cells.
    pub fn roll(&self, dy: usize, dx: usize) -> Self {
        let (h, w) = (self.h, self.w);
        Self::from_fn(self.t, h, w, self.grid, |t, i, j| self.get(t, (i + h - dy % h) % h, (j + w - dx % w) % w))
    }

    pub fn same_shape(&self, other: &FieldSeq) -> bool {
        self.dims() == other.dims()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn zip_map(&self, other: &FieldSeq, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::shape("field", format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { data, ..self.clone() })
    }

    pub fn rms(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64).sqrt()
    }
}

/// Observed values with their mask. Unobserved cells hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsSet {
    pub values: FieldSeq,
    pub mask: Vec<bool>,
}

impl ObsSet {
    pub fn new(mut values: FieldSeq, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != values.data().len() {
            return Err(Error::shape("obs", format!("mask of {} for {} values", mask.len(), values.data().len())));
        }
        for (v, &m) in values.data_mut().iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        Ok(Self { values, mask })
    }

    pub fn empty(t: usize, h: usize, w: usize, grid: Grid) -> Self {
        Self { values: FieldSeq::zeros(t, h, w, grid), mask: vec![false; t * h * w] }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.values.dims()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn frame_count(&self, t: usize) -> usize {
        let n = self.values.plane_len();
        self.mask[t * n..(t + 1) * n].iter().filter(|&&m| m).count()
    }

    pub fn observed(&self, t: usize, i: usize, j: usize) -> bool {
        self.mask[self.values.index(t, i, j)]
    }

    pub fn mask_frame(&self, t: usize) -> &[bool] {
        let n = self.values.plane_len();
        &self.mask[t * n..(t + 1) * n]
    }

    pub fn slice_t(&self, start: usize, len: usize) -> Result<Self> {
        let values = self.values.slice_t(start, len)?;
        let n = self.values.plane_len();
        Ok(Self { values, mask: self.mask[start * n..(start + len) * n].to_vec() })
    }

    pub fn crop(&self, i0: usize, j0: usize, ph: usize, pw: usize) -> Self {
        let (t, h, w) = self.dims();
        let values = self.values.crop(i0, j0, ph, pw);
        let mut mask = Vec::with_capacity(t * ph * pw);
        for k in 0..t {
            for i in 0..ph {
                for j in 0..pw {
                    mask.push(self.mask[(k * h + (i0 + i) % h) * w + (j0 + j) % w]);
                }
            }
        }
        Self { values, mask }
    }

    pub fn roll(&self, dy: usize, dx: usize) -> Self {
        let (t, h, w) = self.dims();
        let values = self.values.roll(dy, dx);
        let mut mask = vec![false; self.mask.len()];
        for k in 0..t {
            for i in 0..h {
                for j in 0..w {
                    mask[(k * h + (i + dy) % h) * w + (j + dx) % w] = self.mask[(k * h + i) * w + j];
                }
            }
        }
        Self { values, mask }
    }

    /// Observation points `(t, i, j, value)` in storage order.
    pub fn points(&self) -> Vec<ObsPoint> {
        let (_, h, w) = self.dims();
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(idx, _)| ObsPoint { t: idx / (h * w), i: (idx / w) % h, j: idx % w, value: self.values.data()[idx] })
            .collect()
    }
}

/// One scattered observation on the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsPoint {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}
