//! Redi (isoneutral) and GM (skew) mixing tensors and their flux-form
//! operators.
//!
//! Both operators share one discrete gradient: at every cell the eight
//! one-sided "triad" gradients `g_s`, `s in {+,-}^3`, are formed from the
//! differences to the six face neighbours (a missing neighbour contributes a
//! zero difference, i.e. zero normal flux). The discrete bilinear form is
//!
//! ```text
//! a_K(C, phi) = sum_cells V/8 sum_s  g_s(phi) . K_cell g_s(C)
//! ```
//!
//! and the operator is its Riesz representative under the midpoint inner
//! product. Symmetric `K` gives a symmetric operator whose quadratic form is
//! bracketed by the per-cell eigenvalues; antisymmetric `K` gives a form that
//! vanishes identically.

use serde::{Deserialize, Serialize};

use crate::eos::{density, expansion_contraction, static_pressure, EosTable, ThermoState};
use crate::error::{GmrError, Result};
use crate::field::{Dims, ScalarField, VectorField};
use crate::grid::{
    classify_regions, diff, BoundarySpec, FaceCondition, FaceValue, Grid, RegionMask,
};
use crate::neutral::{
    clip_small_slope, mollify_with, slope, MollifierKernel, RegularizationParams, SlopeField,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingParams {
    /// Isoneutral diffusivity.
    pub k_i: f64,
    /// Dianeutral diffusivity.
    pub k_d: f64,
    /// Eddy advection coefficient.
    pub kappa: f64,
}

impl MixingParams {
    #[inline]
    pub fn delta(&self) -> f64 {
        self.k_d / self.k_i
    }

    pub fn mu(&self) -> f64 {
        self.k_i.min(self.k_d)
    }

    pub fn big_m(&self) -> f64 {
        self.k_i.max(self.k_d)
    }

    /// Simulation-grade parameters: all positive and `K_D < K_I`.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.k_i > 0.0) {
            bad.push(format!("physics.K_I must be positive, got {}", self.k_i));
        }
        if !(self.k_d > 0.0) {
            bad.push(format!("physics.K_D must be positive, got {}", self.k_d));
        }
        if !(self.kappa > 0.0) {
            bad.push(format!("physics.kappa must be positive, got {}", self.kappa));
        }
        if self.k_i > 0.0 && !(self.delta() < 1.0) {
            bad.push(format!(
                "physics.K_D / physics.K_I must be below 1, got {}",
                self.delta()
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GmrError::ConfigList(bad))
        }
    }
}

/// Which isoneutral closure pathway is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    Full,
    SmallSlope,
}

/// A per-cell 3x3 tensor that can be contracted with a gradient.
pub trait EddyTensor {
    fn dims(&self) -> Dims;
    fn matrix(&self, c: usize) -> [[f64; 3]; 3];
    /// Sign `s` in `s * div(K grad C)`: `-1` for diffusion, `+1` for skew advection.
    fn divergence_sign(&self) -> f64;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    dims: Dims,
    pub k11: Vec<f64>,
    pub k12: Vec<f64>,
    pub k13: Vec<f64>,
    pub k22: Vec<f64>,
    pub k23: Vec<f64>,
    pub k33: Vec<f64>,
}

impl SymTensorField {
    pub fn zeros(dims: Dims) -> Self {
        let z = vec![0.0; dims.len()];
        Self {
            dims,
            k11: z.clone(),
            k12: z.clone(),
            k13: z.clone(),
            k22: z.clone(),
            k23: z.clone(),
            k33: z,
        }
    }

    #[inline]
    fn set(&mut self, c: usize, m: [f64; 6]) {
        self.k11[c] = m[0];
        self.k12[c] = m[1];
        self.k13[c] = m[2];
        self.k22[c] = m[3];
        self.k23[c] = m[4];
        self.k33[c] = m[5];
    }

    /// `xi . K xi` at one cell.
    pub fn quadratic(&self, c: usize, v: [f64; 3]) -> f64 {
        let m = self.matrix(c);
        (0..3)
            .map(|a| v[a] * (0..3).map(|b| m[a][b] * v[b]).sum::<f64>())
            .sum()
    }

    pub fn apply(&self, c: usize, v: [f64; 3]) -> [f64; 3] {
        let m = self.matrix(c);
        [0, 1, 2].map(|a| m[a][0] * v[0] + m[a][1] * v[1] + m[a][2] * v[2])
    }
}

impl EddyTensor for SymTensorField {
    fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    fn matrix(&self, c: usize) -> [[f64; 3]; 3] {
        [
            [self.k11[c], self.k12[c], self.k13[c]],
            [self.k12[c], self.k22[c], self.k23[c]],
            [self.k13[c], self.k23[c], self.k33[c]],
        ]
    }

    fn divergence_sign(&self) -> f64 {
        -1.0
    }
}

/// Antisymmetric tensor stored by its upper-right column `(k13, k23)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewTensorField {
    dims: Dims,
    pub k13: Vec<f64>,
    pub k23: Vec<f64>,
}

impl SkewTensorField {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            k13: vec![0.0; dims.len()],
            k23: vec![0.0; dims.len()],
        }
    }
}

impl EddyTensor for SkewTensorField {
    fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    fn matrix(&self, c: usize) -> [[f64; 3]; 3] {
        let (a, b) = (self.k13[c], self.k23[c]);
        [[0.0, 0.0, a], [0.0, 0.0, b], [-a, -b, 0.0]]
    }

    fn divergence_sign(&self) -> f64 {
        1.0
    }
}

/// Full isoneutral tensor entries for one slope.
#[inline]
pub fn kiso_full_entries(lx: f64, ly: f64, p: &MixingParams) -> [f64; 6] {
    let delta = p.delta();
    let l2 = lx * lx + ly * ly;
    let f = p.k_i / (1.0 + l2);
    [
        f * (1.0 + delta * lx * lx + ly * ly),
        f * (delta - 1.0) * lx * ly,
        f * (1.0 - delta) * lx,
        f * (1.0 + lx * lx + delta * ly * ly),
        f * (1.0 - delta) * ly,
        f * (delta + l2),
    ]
}

/// Small-slope isoneutral tensor entries for one (clipped) slope.
#[inline]
pub fn kiso_small_entries(lx: f64, ly: f64, p: &MixingParams) -> [f64; 6] {
    let ki = p.k_i;
    [
        ki,
        0.0,
        ki * lx,
        ki,
        ki * ly,
        ki * (p.delta() + lx * lx + ly * ly),
    ]
}

pub fn assemble_kiso_full(l: &SlopeField, p: &MixingParams) -> SymTensorField {
    let d = l.dims();
    let mut k = SymTensorField::zeros(d);
    for c in 0..d.len() {
        let (x, y) = l.at(c);
        k.set(c, kiso_full_entries(x, y, p));
    }
    k
}

pub fn assemble_kiso_small(l_clip: &SlopeField, p: &MixingParams) -> SymTensorField {
    let d = l_clip.dims();
    let mut k = SymTensorField::zeros(d);
    for c in 0..d.len() {
        let (x, y) = l_clip.at(c);
        k.set(c, kiso_small_entries(x, y, p));
    }
    k
}

pub fn assemble_kgm(l: &SlopeField, p: &MixingParams) -> SkewTensorField {
    let d = l.dims();
    SkewTensorField {
        dims: d,
        k13: l.lx.as_slice().iter().map(|x| -p.kappa * x).collect(),
        k23: l.ly.as_slice().iter().map(|y| -p.kappa * y).collect(),
    }
}

/// One-sided differences at a cell: `[axis][0]` towards `+axis`, `[axis][1]`
/// from `-axis`; zero where the neighbour lies outside the box.
#[inline]
fn one_sided(src: &[f64], d: Dims, inv_h: [f64; 3], i: usize, j: usize, k: usize) -> [[f64; 2]; 3] {
    let c = d.idx(i, j, k);
    let v = src[c];
    let pos = [i, j, k];
    let mut out = [[0.0; 2]; 3];
    for a in 0..3 {
        let s = d.stride(a);
        if pos[a] + 1 < d.n(a) {
            out[a][0] = (src[c + s] - v) * inv_h[a];
        }
        if pos[a] > 0 {
            out[a][1] = (v - src[c - s]) * inv_h[a];
        }
    }
    out
}

/// `(1/V) G^T W K G C`: the discrete `-div(K grad C)` with zero normal flux.
pub fn weak_divergence<T: EddyTensor + ?Sized>(k: &T, c: &ScalarField, grid: &Grid) -> ScalarField {
    let d = grid.dims;
    let inv_h = [1.0 / grid.dx, 1.0 / grid.dy, 1.0 / grid.dz];
    let src = c.as_slice();
    let mut acc = ScalarField::zeros(d);
    let out = acc.as_mut_slice();
    for kk in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                let cell = d.idx(i, j, kk);
                let g = one_sided(src, d, inv_h, i, j, kk);
                let m = k.matrix(cell);
                let sum = [g[0][0] + g[0][1], g[1][0] + g[1][1], g[2][0] + g[2][1]];
                let pos = [i, j, kk];
                for a in 0..3 {
                    // Sum of flux component `a` over the four triads sharing each sign of axis `a`.
                    let cross: f64 = (0..3)
                        .filter(|&b| b != a)
                        .map(|b| 2.0 * m[a][b] * sum[b])
                        .sum();
                    let fp = 4.0 * m[a][a] * g[a][0] + cross;
                    let fm = 4.0 * m[a][a] * g[a][1] + cross;
                    let w = 0.125 * inv_h[a];
                    let s = d.stride(a);
                    if pos[a] + 1 < d.n(a) {
                        out[cell + s] += w * fp;
                        out[cell] -= w * fp;
                    }
                    if pos[a] > 0 {
                        out[cell] += w * fm;
                        out[cell - s] -= w * fm;
                    }
                }
            }
        }
    }
    acc
}

/// Discrete bilinear form `a_K(C, phi)`.
pub fn bilinear_form<T: EddyTensor + ?Sized>(
    k: &T,
    c: &ScalarField,
    phi: &ScalarField,
    grid: &Grid,
) -> f64 {
    let d = grid.dims;
    let inv_h = [1.0 / grid.dx, 1.0 / grid.dy, 1.0 / grid.dz];
    let (sc, sp) = (c.as_slice(), phi.as_slice());
    let mut total = 0.0;
    for kk in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                let cell = d.idx(i, j, kk);
                let gc = one_sided(sc, d, inv_h, i, j, kk);
                let gp = one_sided(sp, d, inv_h, i, j, kk);
                let m = k.matrix(cell);
                let mut local = 0.0;
                for a in 0..3 {
                    local += 4.0 * m[a][a] * (gp[a][0] * gc[a][0] + gp[a][1] * gc[a][1]);
                    for b in 0..3 {
                        if a != b {
                            local += 2.0
                                * m[a][b]
                                * (gp[a][0] + gp[a][1])
                                * (gc[b][0] + gc[b][1]);
                        }
                    }
                }
                total += local;
            }
        }
    }
    total * grid.cell_volume() / 8.0
}

/// `sum_cells V/8 sum_s |g_s(C)|^2`, the gradient norm matching the bilinear form.
pub fn triad_gradient_norm_sq(c: &ScalarField, grid: &Grid) -> f64 {
    let d = grid.dims;
    let inv_h = [1.0 / grid.dx, 1.0 / grid.dy, 1.0 / grid.dz];
    let src = c.as_slice();
    let mut total = 0.0;
    for kk in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                let g = one_sided(src, d, inv_h, i, j, kk);
                total += g.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>();
            }
        }
    }
    // 4 triads share each one-sided difference, weight V/8.
    total * grid.cell_volume() * 0.5
}

/// Surface Robin data extracted from a tracer boundary spec.
fn robin_surface(bc: &BoundarySpec, grid: &Grid) -> Result<Option<(f64, Vec<f64>)>> {
    for axis in 0..3 {
        for high in [false, true] {
            let face = &bc.faces[axis][high as usize];
            let is_top = axis == 2 && high;
            match face {
                FaceCondition::NeumannZero => {}
                FaceCondition::Robin { k, target } if is_top => {
                    let n = grid.dims.horizontal_len();
                    let t = match target {
                        FaceValue::Uniform(v) => vec![*v; n],
                        FaceValue::Map(m) => {
                            if m.len() != n {
                                return Err(GmrError::Argument(format!(
                                    "Robin target has {} entries, surface has {n}",
                                    m.len()
                                )));
                            }
                            m.clone()
                        }
                    };
                    return Ok(Some((*k, t)));
                }
                other => {
                    return Err(GmrError::Argument(format!(
                        "eddy operators need zero normal flux (Robin allowed at the surface); got {other:?} on axis {axis}"
                    )))
                }
            }
        }
    }
    Ok(None)
}

/// `sign * div(K grad C)`: `-div(K_iso grad C)` for symmetric tensors (with the
/// surface Robin term `k (C - C*) / dz` when `bc` carries one) and
/// `+div(K_GM grad C)` for skew tensors.
pub fn apply_eddy_operator<T: EddyTensor + ?Sized>(
    k: &T,
    c: &ScalarField,
    grid: &Grid,
    bc: &BoundarySpec,
) -> Result<ScalarField> {
    c.check_dims(grid.dims, "apply_eddy_operator")?;
    if k.dims() != grid.dims {
        return Err(GmrError::Argument("tensor dims do not match grid".into()));
    }
    let robin = robin_surface(bc, grid)?;
    let mut out = weak_divergence(k, c, grid);
    // weak_divergence is -div(K grad C); flip for the skew (+div) convention.
    if k.divergence_sign() > 0.0 {
        out.scale(-1.0);
    } else if let Some((kr, target)) = robin {
        add_robin(&mut out, c, kr, &target, grid);
    }
    Ok(out)
}

fn add_robin(out: &mut ScalarField, c: &ScalarField, kr: f64, target: &[f64], grid: &Grid) {
    let d = grid.dims;
    let top = d.nz - 1;
    let w = kr / grid.dz;
    for j in 0..d.ny {
        for i in 0..d.nx {
            let cell = d.idx(i, j, top);
            out[cell] += w * (c[cell] - target[i + d.nx * j]);
        }
    }
}

/// `k int_{z=0} C (C - C*) dxdy`, the surface term of the variance budget.
pub fn robin_surface_term(c: &ScalarField, kr: f64, target: &[f64], grid: &Grid) -> f64 {
    let d = grid.dims;
    let top = d.nz - 1;
    let mut s = 0.0;
    for j in 0..d.ny {
        for i in 0..d.nx {
            let v = c.get(i, j, top);
            s += v * (v - target[i + d.nx * j]);
        }
    }
    kr * s * grid.dx * grid.dy
}

/// Eddy-induced transport velocity `v* = -d_z(kappa L)`, `w* = div_h(kappa L)`
/// on `Omega0 u Omega1`, zero elsewhere.
pub fn bolus_velocity(
    l: &SlopeField,
    p: &MixingParams,
    grid: &Grid,
    mask: &RegionMask,
) -> Result<(VectorField, ScalarField)> {
    let bc = BoundarySpec::neumann();
    let klx = l.lx.map(|x| p.kappa * x);
    let kly = l.ly.map(|y| p.kappa * y);
    let mut vx = diff(&klx, 2, grid, &bc)?;
    let mut vy = diff(&kly, 2, grid, &bc)?;
    vx.scale(-1.0);
    vy.scale(-1.0);
    let mut w = diff(&klx, 0, grid, &bc)?;
    w.axpy(1.0, &diff(&kly, 1, grid, &bc)?);
    for c in 0..grid.dims.len() {
        if !mask.in_omega01(c) {
            vx[c] = 0.0;
            vy[c] = 0.0;
            w[c] = 0.0;
        }
    }
    Ok((VectorField { x: vx, y: vy }, w))
}

/// Max over untapered cells of `|K (a grad theta - b grad S)|`, the isoneutral
/// buoyancy flux that must vanish when `K_D = 0`. Only affine (linear) tables
/// are accepted.
pub fn isoneutral_flux_balance_check(
    theta: &ScalarField,
    salt: &ScalarField,
    table: &EosTable,
    kiso: &SymTensorField,
    slope: &SlopeField,
    grid: &Grid,
) -> Result<f64> {
    if !table.is_linear() {
        return Err(GmrError::Unsupported(
            "flux balance check needs a linear equation of state".into(),
        ));
    }
    let p_st = static_pressure(grid, table);
    let (a, b) = expansion_contraction(
        &ThermoState {
            theta,
            salt,
            p_st: &p_st,
        },
        table,
    )?;
    let bc = BoundarySpec::neumann();
    let gt: Vec<ScalarField> = (0..3)
        .map(|ax| diff(theta, ax, grid, &bc))
        .collect::<Result<_>>()?;
    let gs: Vec<ScalarField> = (0..3)
        .map(|ax| diff(salt, ax, grid, &bc))
        .collect::<Result<_>>()?;
    let mut worst = 0.0_f64;
    for c in 0..grid.dims.len() {
        if !slope.active[c] {
            continue;
        }
        let buoy = [0, 1, 2].map(|ax| a[c] * gt[ax][c] - b[c] * gs[ax][c]);
        let f = kiso.apply(c, buoy);
        worst = worst.max((f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt());
    }
    Ok(worst)
}

/// Everything needed to turn `(theta, S)` into mixing tensors.
#[derive(Clone, Debug)]
pub struct ClosureSetup {
    pub grid: Grid,
    pub mask: RegionMask,
    pub kernel: MollifierKernel,
    pub reg: RegularizationParams,
    pub mix: MixingParams,
    pub closure: Closure,
    pub table: EosTable,
    pub p_st: ScalarField,
}

/// Tensors and intermediate fields diagnosed from one thermodynamic state.
#[derive(Clone, Debug)]
pub struct ClosureState {
    pub rho: ScalarField,
    pub rho_tilde: ScalarField,
    /// Slope actually fed to the tensors (clipped for the small-slope closure).
    pub slope: SlopeField,
    pub kiso: SymTensorField,
    pub kgm: SkewTensorField,
}

impl ClosureSetup {
    pub fn new(
        grid: Grid,
        reg: RegularizationParams,
        mix: MixingParams,
        closure: Closure,
        table: EosTable,
    ) -> Result<Self> {
        reg.validate()?;
        let mask = classify_regions(&grid, reg.eta)?;
        let kernel = MollifierKernel::new(&grid, reg.eta)?;
        let p_st = static_pressure(&grid, &table);
        Ok(Self {
            grid,
            mask,
            kernel,
            reg,
            mix,
            closure,
            table,
            p_st,
        })
    }

    pub fn diagnose(&self, theta: &ScalarField, salt: &ScalarField) -> Result<ClosureState> {
        let rho = density(
            &ThermoState {
                theta,
                salt,
                p_st: &self.p_st,
            },
            &self.table,
        )?;
        let rho_tilde = mollify_with(&rho, &self.grid, &self.kernel, &self.mask)?;
        let l = slope(&rho_tilde, &self.grid, &self.reg, &self.mask)?;
        let (slope, kiso) = match self.closure {
            Closure::Full => {
                let k = assemble_kiso_full(&l, &self.mix);
                (l, k)
            }
            Closure::SmallSlope => {
                let lc = clip_small_slope(&l, &self.reg);
                let k = assemble_kiso_small(&lc, &self.mix);
                (lc, k)
            }
        };
        let kgm = assemble_kgm(&slope, &self.mix);
        Ok(ClosureState {
            rho,
            rho_tilde,
            slope,
            kiso,
            kgm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, integrate};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mix() -> MixingParams {
        MixingParams {
            k_i: 2.0,
            k_d: 0.01,
            kappa: 1.5,
        }
    }

    fn slope_from(d: Dims, mut f: impl FnMut(usize) -> (f64, f64)) -> SlopeField {
        let mut l = SlopeField::zeros(d);
        for c in 0..d.len() {
            let (x, y) = f(c);
            l.lx[c] = x;
            l.ly[c] = y;
            l.active[c] = true;
        }
        l
    }

    #[test]
    fn zero_slope_is_diagonal() {
        let d = Dims::new(1, 1, 1);
        let p = mix();
        let k = assemble_kiso_full(&SlopeField::zeros(d), &p);
        assert_eq!(
            k.matrix(0),
            [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, p.k_i * p.delta()]]
        );
        let ks = assemble_kiso_small(&SlopeField::zeros(d), &p);
        assert_eq!(k.matrix(0), ks.matrix(0));
    }

    #[test]
    fn small_slope_arithmetic() {
        let p = MixingParams {
            k_i: 1.0,
            k_d: 0.0,
            kappa: 1.0,
        };
        let e = kiso_small_entries(0.01, 0.0, &p);
        assert_relative_eq!(e[2], 0.01);
        assert_relative_eq!(e[5], 1e-4, epsilon = 1e-18);
    }

    #[test]
    fn gm_entries() {
        let d = Dims::new(2, 1, 1);
        let l = slope_from(d, |c| if c == 0 { (0.1, 0.0) } else { (0.0, 0.0) });
        let k = assemble_kgm(
            &l,
            &MixingParams {
                k_i: 1.0,
                k_d: 0.1,
                kappa: 2.0,
            },
        );
        assert_relative_eq!(k.k13[0], -0.2);
        assert_eq!(k.k23[0], 0.0);
        assert_eq!(k.matrix(1), [[0.0; 3]; 3]);
    }

    #[test]
    fn dianeutral_direction_annihilated_when_kd_zero() {
        let p = MixingParams {
            k_i: 3.0,
            k_d: 0.0,
            kappa: 1.0,
        };
        // grad rho = (0.2, -0.1, -2): L = (0.1, -0.05)
        let g = [0.2, -0.1, -2.0];
        let l = slope_from(Dims::new(1, 1, 1), |_| (-g[0] / g[2], -g[1] / g[2]));
        let k = assemble_kiso_full(&l, &p);
        for v in k.apply(0, g) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_gives_zero() {
        let g = Grid::cube(6, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = slope_from(g.dims, |_| (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)));
        let k = assemble_kiso_full(&l, &mix());
        let c = ScalarField::constant(g.dims, 4.2);
        let out = apply_eddy_operator(&k, &c, &g, &BoundarySpec::neumann()).unwrap();
        assert!(out.max_abs() < 1e-12);
    }

    #[test]
    fn operator_is_riesz_representative_of_form() {
        let g = Grid::new(&crate::grid::GridSpec {
            nx: 5,
            ny: 4,
            nz: 6,
            lx: 1.0,
            ly: 0.7,
            h: 0.4,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = slope_from(g.dims, |_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let k = assemble_kiso_full(&l, &mix());
        let a = ScalarField::from_fn(g.dims, |_, _, _| rng.gen_range(-1.0..1.0));
        let b = ScalarField::from_fn(g.dims, |_, _, _| rng.gen_range(-1.0..1.0));
        let da = apply_eddy_operator(&k, &a, &g, &BoundarySpec::neumann()).unwrap();
        let db = apply_eddy_operator(&k, &b, &g, &BoundarySpec::neumann()).unwrap();
        let form = bilinear_form(&k, &a, &b, &g);
        assert_relative_eq!(inner(&da, &b, &g), form, max_relative = 1e-12);
        assert_relative_eq!(inner(&a, &db, &g), form, max_relative = 1e-12);
        // conservative: zero net tendency
        assert!(integrate(&da, &g).unwrap().abs() < 1e-12 * da.max_abs());
    }

    #[test]
    fn skew_form_vanishes() {
        let g = Grid::cube(7, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = slope_from(g.dims, |_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let k = assemble_kgm(&l, &mix());
        let c = ScalarField::from_fn(g.dims, |_, _, _| rng.gen_range(-1.0..1.0));
        let out = apply_eddy_operator(&k, &c, &g, &BoundarySpec::neumann()).unwrap();
        let q = inner(&out, &c, &g);
        let scale = triad_gradient_norm_sq(&c, &g) * mix().kappa;
        assert!(q.abs() <= 1e-13 * scale, "{q} vs {scale}");
    }

    #[test]
    fn robin_term_enters_diffusion_only() {
        let g = Grid::cube(4, 1.0, 1.0).unwrap();
        let k = assemble_kiso_full(&SlopeField::zeros(g.dims), &mix());
        let c = ScalarField::constant(g.dims, 2.0);
        let bc = BoundarySpec::with_surface(FaceCondition::Robin {
            k: 0.5,
            target: FaceValue::Uniform(1.0),
        });
        let out = apply_eddy_operator(&k, &c, &g, &bc).unwrap();
        assert_relative_eq!(out.get(1, 1, 3), 0.5 * 1.0 / g.dz, epsilon = 1e-12);
        assert!(out.get(1, 1, 2).abs() < 1e-14);
        let gm = assemble_kgm(&SlopeField::zeros(g.dims), &mix());
        assert_eq!(apply_eddy_operator(&gm, &c, &g, &bc).unwrap().max_abs(), 0.0);
        // Lateral Robin is not a valid eddy closure.
        let bad = BoundarySpec::neumann().set(
            0,
            false,
            FaceCondition::Robin {
                k: 1.0,
                target: FaceValue::Uniform(0.0),
            },
        );
        assert!(apply_eddy_operator(&k, &c, &g, &bad).is_err());
    }

    #[test]
    fn bolus_examples() {
        let g = Grid::cube(16, 1.0, 1.0).unwrap();
        let m = crate::grid::classify_regions(&g, 0.15).unwrap();
        let p = mix();
        let gamma = 0.3;
        let l = slope_from(g.dims, |c| {
            let [i, _, _] = g.dims.ijk(c);
            (gamma * g.xc[i], 0.0)
        });
        let (v, w) = bolus_velocity(&l, &p, &g, &m).unwrap();
        assert_eq!(v.max_speed(), 0.0);
        let c = g.dims.idx(8, 8, 8);
        assert_relative_eq!(w[c], p.kappa * gamma, epsilon = 1e-12);
        for c in 0..g.dims.len() {
            if !m.in_omega01(c) {
                assert_eq!(w[c], 0.0);
            }
        }
    }

    #[test]
    fn flux_balance_rejects_nonlinear_table() {
        let g = Grid::cube(4, 1.0, 1.0).unwrap();
        let t = ScalarField::constant(g.dims, 10.0);
        let s = ScalarField::constant(g.dims, 35.0);
        let l = SlopeField::zeros(g.dims);
        let k = assemble_kiso_full(&l, &mix());
        let r = isoneutral_flux_balance_check(&t, &s, &EosTable::builtin(), &k, &l, &g);
        assert!(matches!(r, Err(GmrError::Unsupported(_))));
    }
}
