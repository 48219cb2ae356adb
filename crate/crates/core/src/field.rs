//! Cell-centred storage. Fields are flat `Vec<f64>` in x-fastest order:
//! `idx = i + nx * (j + ny * k)`, with `k = 0` the bottom layer.

use crate::error::{GmrError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        [i, j, k]
    }

    /// Number of cells along `axis` (0 = x, 1 = y, 2 = z).
    #[inline]
    pub fn n(&self, axis: usize) -> usize {
        match axis {
            0 => self.nx,
            1 => self.ny,
            _ => self.nz,
        }
    }

    /// Flat-index stride along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.nx,
            _ => self.nx * self.ny,
        }
    }

    pub fn horizontal_len(&self) -> usize {
        self.nx * self.ny
    }
}

/// A 3-D array of cell-centred samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    dims: Dims,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(dims: Dims) -> Self {
        Self::constant(dims, 0.0)
    }

    pub fn constant(dims: Dims, value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(GmrError::Argument(format!(
                "field data has {} entries, grid needs {}",
                data.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// Fill by evaluating `f(i, j, k)` at every cell.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for k in 0..dims.nz {
            for j in 0..dims.ny {
                for i in 0..dims.nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.dims.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.dims.idx(i, j, k);
        self.data[idx] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.dims, other.dims);
        Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// First non-finite cell, if any.
    pub fn first_non_finite(&self) -> Option<[usize; 3]> {
        self.data
            .iter()
            .position(|x| !x.is_finite())
            .map(|p| self.dims.ijk(p))
    }

    pub fn check_dims(&self, dims: Dims, what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(GmrError::Argument(format!(
                "{what}: field dims {:?} do not match grid {:?}",
                self.dims, dims
            )));
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    #[inline]
    fn index(&self, idx: usize) -> &f64 {
        &self.data[idx]
    }
}

impl std::ops::IndexMut<usize> for ScalarField {
    #[inline]
    fn index_mut(&mut self, idx: usize) -> &mut f64 {
        &mut self.data[idx]
    }
}

/// A 2-D horizontal field (surface pressure, wind stress, restoring target).
#[derive(Clone, Debug, PartialEq)]
pub struct Field2 {
    pub nx: usize,
    pub ny: usize,
    data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self::constant(nx, ny, 0.0)
    }

    pub fn constant(nx: usize, ny: usize, value: f64) -> Self {
        Self {
            nx,
            ny,
            data: vec![value; nx * ny],
        }
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                data.push(f(i, j));
            }
        }
        Self { nx, ny, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + self.nx * j]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Horizontal vector field (x and y components).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            x: ScalarField::zeros(dims),
            y: ScalarField::zeros(dims),
        }
    }

    pub fn dims(&self) -> Dims {
        self.x.dims()
    }

    pub fn max_speed(&self) -> f64 {
        self.x
            .as_slice()
            .iter()
            .zip(self.y.as_slice())
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        self.x.axpy(alpha, &other.x);
        self.y.axpy(alpha, &other.y);
    }
}
