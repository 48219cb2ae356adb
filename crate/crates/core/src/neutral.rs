//! Regularized neutral physics: mollified density, boundary cut-off,
//! stratification taper, isoneutral slope vector and small-slope clipping.

use serde::{Deserialize, Serialize};

use crate::error::{GmrError, Result};
use crate::field::{Dims, ScalarField};
use crate::grid::{diff, BoundarySpec, Grid, RegionMask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    /// Mollifier scale and boundary band width.
    pub eta: f64,
    /// Minimal stratification `|d rho~/dz|` for untapered slopes.
    pub s0: f64,
    /// Width of the taper transition below `s0`.
    pub eps0: f64,
    /// Small-slope clip threshold.
    pub r: f64,
}

impl RegularizationParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.eta > 0.0) {
            bad.push(format!("regularization.eta must be positive, got {}", self.eta));
        }
        if !(self.eps0 > 0.0 && self.s0 > self.eps0) {
            bad.push(format!(
                "regularization requires s0 > eps0 > 0, got s0 = {}, eps0 = {}",
                self.s0, self.eps0
            ));
        }
        // r = 0 is accepted: it switches the small-slope closure off entirely.
        if !(self.r >= 0.0 && self.r < 0.5) {
            bad.push(format!("regularization.r must lie in [0, 0.5), got {}", self.r));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GmrError::ConfigList(bad))
        }
    }
}

/// Quintic smoothstep on `[0, 1]`: `C^2`, monotone, 0 below and 1 above.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

/// Boundary cut-off profile: 0 on `[0, 1]`, 1 on `[2, inf)`.
#[inline]
pub fn xi(s: f64) -> f64 {
    smoothstep(s - 1.0)
}

/// Stratification taper: 1 for `x >= s0`, 0 for `x <= s0 - eps0`.
#[inline]
pub fn taper(x: f64, params: &RegularizationParams) -> f64 {
    smoothstep((x - (params.s0 - params.eps0)) / params.eps0)
}

/// Cut-off `xi(dist / eta)` evaluated at every cell centre.
pub fn cutoff(grid: &Grid, params: &RegularizationParams) -> ScalarField {
    ScalarField::from_fn(grid.dims, |i, j, k| {
        xi(grid.boundary_distance(i, j, k) / params.eta)
    })
}

/// Sampled bump `exp(-1 / (1 - |2x/eta|^2))` on `|x| < eta/2`, normalized to
/// unit discrete sum.
#[derive(Clone, Debug)]
pub struct MollifierKernel {
    /// `(di, dj, dk, weight)`; the centre tap is excluded (its weight is implied).
    pub taps: Vec<(isize, isize, isize, f64)>,
    pub centre_weight: f64,
}

impl MollifierKernel {
    pub fn new(grid: &Grid, eta: f64) -> Result<Self> {
        let radius = 0.5 * eta;
        if !(radius > grid.max_spacing()) {
            return Err(GmrError::Config(format!(
                "mollifier unresolved: kernel radius eta/2 = {radius} must exceed the largest cell spacing {}",
                grid.max_spacing()
            )));
        }
        let reach = |h: f64| (radius / h).floor() as isize;
        let (ri, rj, rk) = (reach(grid.dx), reach(grid.dy), reach(grid.dz));
        let mut raw = Vec::new();
        let mut centre = 0.0;
        for dk in -rk..=rk {
            for dj in -rj..=rj {
                for di in -ri..=ri {
                    let x = di as f64 * grid.dx;
                    let y = dj as f64 * grid.dy;
                    let z = dk as f64 * grid.dz;
                    let q = (x * x + y * y + z * z) / (radius * radius);
                    if q >= 1.0 {
                        continue;
                    }
                    let w = (-1.0 / (1.0 - q)).exp();
                    if di == 0 && dj == 0 && dk == 0 {
                        centre = w;
                    } else {
                        raw.push((di, dj, dk, w));
                    }
                }
            }
        }
        let total: f64 = centre + raw.iter().map(|t| t.3).sum::<f64>();
        Ok(Self {
            taps: raw
                .into_iter()
                .map(|(a, b, c, w)| (a, b, c, w / total))
                .collect(),
            centre_weight: centre / total,
        })
    }
}

/// Regularized density: discrete convolution with the bump kernel on
/// `dist > eta/2`, exactly zero elsewhere. Cells outside the box contribute 0.
pub fn mollify(
    rho: &ScalarField,
    grid: &Grid,
    params: &RegularizationParams,
    mask: &RegionMask,
) -> Result<ScalarField> {
    let kernel = MollifierKernel::new(grid, params.eta)?;
    mollify_with(rho, grid, &kernel, mask)
}

pub fn mollify_with(
    rho: &ScalarField,
    grid: &Grid,
    kernel: &MollifierKernel,
    mask: &RegionMask,
) -> Result<ScalarField> {
    rho.check_dims(grid.dims, "mollify")?;
    if let Some(cell) = rho.first_non_finite() {
        return Err(GmrError::Argument(format!("non-finite density at cell {cell:?}")));
    }
    let d = grid.dims;
    let src = rho.as_slice();
    let mut out = ScalarField::zeros(d);
    let (nx, ny, nz) = (d.nx as isize, d.ny as isize, d.nz as isize);
    for k in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                let c = d.idx(i, j, k);
                if !mask.in_omega12(c) {
                    continue;
                }
                // Centre value plus weighted deviations: constants reproduce exactly.
                let rc = src[c];
                let mut acc = 0.0;
                for &(di, dj, dk, w) in &kernel.taps {
                    let (a, b, e) = (i as isize + di, j as isize + dj, k as isize + dk);
                    let nb = if a < 0 || b < 0 || e < 0 || a >= nx || b >= ny || e >= nz {
                        0.0
                    } else {
                        src[d.idx(a as usize, b as usize, e as usize)]
                    };
                    acc += w * (nb - rc);
                }
                out[c] = rc + acc;
            }
        }
    }
    Ok(out)
}

/// Isoneutral slope vector with its untapered-cell mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeField {
    pub lx: ScalarField,
    pub ly: ScalarField,
    /// True where neither cut-off nor taper reduce the slope.
    pub active: Vec<bool>,
}

impl SlopeField {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            lx: ScalarField::zeros(dims),
            ly: ScalarField::zeros(dims),
            active: vec![false; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.lx.dims()
    }

    #[inline]
    pub fn at(&self, c: usize) -> (f64, f64) {
        (self.lx[c], self.ly[c])
    }

    pub fn max_magnitude(&self) -> f64 {
        (0..self.dims().len())
            .map(|c| self.lx[c].hypot(self.ly[c]))
            .fold(0.0, f64::max)
    }
}

/// `L = -(grad_h rho~ / d_z rho~) * cutoff * taper(|d_z rho~|)`, zero where the
/// stratification is at or below `s0 - eps0`.
pub fn slope(
    rho_tilde: &ScalarField,
    grid: &Grid,
    params: &RegularizationParams,
    mask: &RegionMask,
) -> Result<SlopeField> {
    rho_tilde.check_dims(grid.dims, "slope")?;
    if let Some(cell) = rho_tilde.first_non_finite() {
        return Err(GmrError::Argument(format!(
            "non-finite regularized density at cell {cell:?}"
        )));
    }
    let bc = BoundarySpec::neumann();
    let gx = diff(rho_tilde, 0, grid, &bc)?;
    let gy = diff(rho_tilde, 1, grid, &bc)?;
    let gz = diff(rho_tilde, 2, grid, &bc)?;
    let d = grid.dims;
    let mut out = SlopeField::zeros(d);
    let floor = params.s0 - params.eps0;
    for c in 0..d.len() {
        let sz = gz[c];
        if sz.abs() <= floor {
            continue;
        }
        let pref = xi(mask.dist[c] / params.eta) * taper(sz.abs(), params);
        if pref == 0.0 {
            continue;
        }
        out.lx[c] = -gx[c] / sz * pref;
        out.ly[c] = -gy[c] / sz * pref;
        out.active[c] = pref == 1.0;
    }
    Ok(out)
}

/// `L° = L` where `|L| < r`, else zero.
pub fn clip_small_slope(l: &SlopeField, params: &RegularizationParams) -> SlopeField {
    let mut out = l.clone();
    for c in 0..l.dims().len() {
        let (x, y) = l.at(c);
        if x.hypot(y) >= params.r {
            out.lx[c] = 0.0;
            out.ly[c] = 0.0;
            out.active[c] = false;
        }
    }
    out
}
