//! Box domain `M x (-h, 0)` with a uniform cell-centred grid, ghost-cell
//! difference stencils, boundary-distance bands and midpoint quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{GmrError, Result};
use crate::field::{Dims, Field2, ScalarField};

/// Grid block of the configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    pub h: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            nz: 32,
            lx: 1.0,
            ly: 1.0,
            h: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub dims: Dims,
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub xc: Vec<f64>,
    pub yc: Vec<f64>,
    /// Cell-centre depths, bottom (`k = 0`) to top; all strictly inside `(-h, 0)`.
    pub zc: Vec<f64>,
}

impl Grid {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        let mut bad = Vec::new();
        for (name, n) in [("nx", spec.nx), ("ny", spec.ny), ("nz", spec.nz)] {
            if n == 0 {
                bad.push(format!("grid.{name} must be positive"));
            }
        }
        for (name, l) in [("lx", spec.lx), ("ly", spec.ly), ("h", spec.h)] {
            if !(l > 0.0 && l.is_finite()) {
                bad.push(format!("grid.{name} must be positive, got {l}"));
            }
        }
        if !bad.is_empty() {
            return Err(GmrError::Config(bad.join("; ")));
        }
        let dx = spec.lx / spec.nx as f64;
        let dy = spec.ly / spec.ny as f64;
        let dz = spec.h / spec.nz as f64;
        Ok(Self {
            dims: Dims::new(spec.nx, spec.ny, spec.nz),
            lx: spec.lx,
            ly: spec.ly,
            h: spec.h,
            dx,
            dy,
            dz,
            xc: (0..spec.nx).map(|i| (i as f64 + 0.5) * dx).collect(),
            yc: (0..spec.ny).map(|j| (j as f64 + 0.5) * dy).collect(),
            zc: (0..spec.nz)
                .map(|k| -spec.h + (k as f64 + 0.5) * dz)
                .collect(),
        })
    }

    /// Convenience for tests: uniform `n^3` grid on an `l x l x h` box.
    pub fn cube(n: usize, l: f64, h: f64) -> Result<Self> {
        Self::new(&GridSpec {
            nx: n,
            ny: n,
            nz: n,
            lx: l,
            ly: l,
            h,
        })
    }

    #[inline]
    pub fn spacing(&self, axis: usize) -> f64 {
        match axis {
            0 => self.dx,
            1 => self.dy,
            _ => self.dz,
        }
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.h
    }

    pub fn min_spacing(&self) -> f64 {
        self.dx.min(self.dy).min(self.dz)
    }

    pub fn max_spacing(&self) -> f64 {
        self.dx.max(self.dy).max(self.dz)
    }

    /// Distance from the centre of cell `(i, j, k)` to the nearest of the six faces.
    pub fn boundary_distance(&self, i: usize, j: usize, k: usize) -> f64 {
        let x = self.xc[i];
        let y = self.yc[j];
        let z = self.zc[k];
        x.min(self.lx - x)
            .min(y)
            .min(self.ly - y)
            .min(z + self.h)
            .min(-z)
    }

    pub fn field_from_coords(&self, f: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
        ScalarField::from_fn(self.dims, |i, j, k| f(self.xc[i], self.yc[j], self.zc[k]))
    }

    pub fn surface_from_coords(&self, f: impl Fn(f64, f64) -> f64) -> Field2 {
        Field2::from_fn(self.dims.nx, self.dims.ny, |i, j| f(self.xc[i], self.yc[j]))
    }
}

/// `make_grid` of the operation list.
pub fn make_grid(spec: &GridSpec) -> Result<Grid> {
    Grid::new(spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `dist >= 2 eta`
    Omega0,
    /// `eta < dist < 2 eta`
    Omega1,
    /// `dist <= eta`
    Omega2,
}

#[derive(Clone, Debug)]
pub struct RegionMask {
    pub eta: f64,
    pub labels: Vec<Region>,
    pub dist: Vec<f64>,
}

impl RegionMask {
    #[inline]
    pub fn region(&self, idx: usize) -> Region {
        self.labels[idx]
    }

    /// Membership in `Omega0 u Omega1` (`dist > eta`).
    #[inline]
    pub fn in_omega01(&self, idx: usize) -> bool {
        self.dist[idx] > self.eta
    }

    /// Membership in the mollification support (`dist > eta / 2`).
    #[inline]
    pub fn in_omega12(&self, idx: usize) -> bool {
        self.dist[idx] > 0.5 * self.eta
    }

    pub fn omega01_mask(&self) -> Vec<bool> {
        (0..self.dist.len()).map(|c| self.in_omega01(c)).collect()
    }

    pub fn omega12_mask(&self) -> Vec<bool> {
        (0..self.dist.len()).map(|c| self.in_omega12(c)).collect()
    }
}

pub fn classify_regions(grid: &Grid, eta: f64) -> Result<RegionMask> {
    let lmin = grid.lx.min(grid.ly).min(grid.h);
    if !(eta > 0.0 && 2.0 * eta < 0.5 * lmin) {
        return Err(GmrError::Config(format!(
            "eta = {eta} must satisfy 0 < 2 eta < min(Lx, Ly, h) / 2 = {}",
            0.5 * lmin
        )));
    }
    let d = grid.dims;
    let mut labels = Vec::with_capacity(d.len());
    let mut dist = Vec::with_capacity(d.len());
    for k in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                let r = grid.boundary_distance(i, j, k);
                labels.push(if r >= 2.0 * eta {
                    Region::Omega0
                } else if r > eta {
                    Region::Omega1
                } else {
                    Region::Omega2
                });
                dist.push(r);
            }
        }
    }
    Ok(RegionMask { eta, labels, dist })
}

/// Values attached to one face of the box. `Map` entries are indexed over the
/// two tangential axes, lower axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub enum FaceValue {
    Uniform(f64),
    Map(Vec<f64>),
}

impl FaceValue {
    #[inline]
    fn at(&self, p: usize) -> f64 {
        match self {
            FaceValue::Uniform(v) => *v,
            FaceValue::Map(m) => m[p],
        }
    }
}

impl From<&Field2> for FaceValue {
    fn from(f: &Field2) -> Self {
        FaceValue::Map(f.as_slice().to_vec())
    }
}

/// Closure at a single face. Normal derivatives are taken along the outward normal.
#[derive(Clone, Debug, PartialEq)]
pub enum FaceCondition {
    NeumannZero,
    /// `dC/dn = -k (C - target)`
    Robin { k: f64, target: FaceValue },
    /// `dC/dn = q`
    Flux(FaceValue),
    /// `C = 0` on the face (odd reflection).
    DirichletZero,
}

impl FaceCondition {
    /// Ghost value given the adjacent interior value `c0`, half-distance `d`
    /// from the cell centre to the ghost centre (`d` = spacing).
    #[inline]
    fn ghost(&self, c0: f64, d: f64, p: usize) -> f64 {
        match self {
            FaceCondition::NeumannZero => c0,
            FaceCondition::Robin { k, target } => {
                let kd = k * d;
                c0 - kd * (c0 - target.at(p)) / (1.0 + 0.5 * kd)
            }
            FaceCondition::Flux(q) => c0 + q.at(p) * d,
            FaceCondition::DirichletZero => -c0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySpec {
    /// `faces[axis][0]` low side, `faces[axis][1]` high side.
    pub faces: [[FaceCondition; 2]; 3],
}

impl BoundarySpec {
    pub fn neumann() -> Self {
        Self::uniform(FaceCondition::NeumannZero)
    }

    pub fn uniform(c: FaceCondition) -> Self {
        Self {
            faces: [
                [c.clone(), c.clone()],
                [c.clone(), c.clone()],
                [c.clone(), c],
            ],
        }
    }

    /// Zero flux everywhere except the surface face.
    pub fn with_surface(top: FaceCondition) -> Self {
        let mut b = Self::neumann();
        b.faces[2][1] = top;
        b
    }

    pub fn set(mut self, axis: usize, high: bool, c: FaceCondition) -> Self {
        self.faces[axis][high as usize] = c;
        self
    }
}

/// Iterate over all grid lines parallel to `axis`, yielding (start index,
/// tangential face index).
fn lines(d: Dims, axis: usize) -> impl Iterator<Item = (usize, usize)> {
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let na = d.n(a);
    let nb = d.n(b);
    (0..nb).flat_map(move |q| {
        (0..na).map(move |p| {
            let mut ijk = [0usize; 3];
            ijk[a] = p;
            ijk[b] = q;
            (d.idx(ijk[0], ijk[1], ijk[2]), p + na * q)
        })
    })
}

/// Centred first derivative along `axis` with ghost-cell closure from `bc`.
pub fn diff(field: &ScalarField, axis: usize, grid: &Grid, bc: &BoundarySpec) -> Result<ScalarField> {
    field.check_dims(grid.dims, "diff")?;
    if axis > 2 {
        return Err(GmrError::Argument(format!("axis {axis} out of range")));
    }
    let d = grid.dims;
    let n = d.n(axis);
    let s = d.stride(axis);
    let h = grid.spacing(axis);
    let inv2h = 0.5 / h;
    let src = field.as_slice();
    let mut out = ScalarField::zeros(d);
    let dst = out.as_mut_slice();
    let [lo, hi] = &bc.faces[axis];
    for (start, p) in lines(d, axis) {
        let at = |m: usize| src[start + m * s];
        // Low ghost lies in the -axis direction: C_g = C_0 - (dC/dn_out) h with n_out = -axis.
        let glo = lo.ghost(at(0), h, p);
        let ghi = hi.ghost(at(n - 1), h, p);
        for m in 0..n {
            let left = if m == 0 { glo } else { at(m - 1) };
            let right = if m + 1 == n { ghi } else { at(m + 1) };
            dst[start + m * s] = (right - left) * inv2h;
        }
    }
    Ok(out)
}

/// Compact second derivative along `axis` with ghost-cell closure from `bc`.
pub fn second_diff(
    field: &ScalarField,
    axis: usize,
    grid: &Grid,
    bc: &BoundarySpec,
) -> Result<ScalarField> {
    field.check_dims(grid.dims, "second_diff")?;
    let d = grid.dims;
    let n = d.n(axis);
    let s = d.stride(axis);
    let h = grid.spacing(axis);
    let invh2 = 1.0 / (h * h);
    let src = field.as_slice();
    let mut out = ScalarField::zeros(d);
    let dst = out.as_mut_slice();
    let [lo, hi] = &bc.faces[axis];
    for (start, p) in lines(d, axis) {
        let at = |m: usize| src[start + m * s];
        let glo = lo.ghost(at(0), h, p);
        let ghi = hi.ghost(at(n - 1), h, p);
        for m in 0..n {
            let left = if m == 0 { glo } else { at(m - 1) };
            let right = if m + 1 == n { ghi } else { at(m + 1) };
            dst[start + m * s] = (right - 2.0 * at(m) + left) * invh2;
        }
    }
    Ok(out)
}

/// Negative adjoint (under the midpoint inner product) of the zero-Neumann
/// centred gradient along `axis`. Sums to zero over the grid for any input.
pub fn neumann_divergence(flux: &ScalarField, axis: usize, grid: &Grid) -> ScalarField {
    let d = grid.dims;
    let n = d.n(axis);
    let s = d.stride(axis);
    let inv2h = 0.5 / grid.spacing(axis);
    let src = flux.as_slice();
    let mut out = ScalarField::zeros(d);
    let dst = out.as_mut_slice();
    for (start, _) in lines(d, axis) {
        let at = |m: usize| src[start + m * s];
        if n == 1 {
            continue;
        }
        for m in 0..n {
            let v = if m == 0 {
                at(0) + at(1)
            } else if m + 1 == n {
                -(at(n - 2) + at(n - 1))
            } else {
                at(m + 1) - at(m - 1)
            };
            dst[start + m * s] = v * inv2h;
        }
    }
    out
}

/// Midpoint-rule integral over the box.
pub fn integrate(field: &ScalarField, grid: &Grid) -> Result<f64> {
    field.check_dims(grid.dims, "integrate")?;
    Ok(field.as_slice().iter().sum::<f64>() * grid.cell_volume())
}

/// Midpoint inner product `(a, b)` over the box.
pub fn inner(a: &ScalarField, b: &ScalarField, grid: &Grid) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * grid.cell_volume()
}

pub fn l2_norm(a: &ScalarField, grid: &Grid) -> f64 {
    inner(a, a, grid).sqrt()
}

pub fn mean(field: &ScalarField, grid: &Grid) -> f64 {
    field.as_slice().iter().sum::<f64>() * grid.cell_volume() / grid.volume()
}
