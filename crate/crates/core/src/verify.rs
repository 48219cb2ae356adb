//! Property suites behind `gmr verify`: each check reports a measured value
//! against its limit.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SimConfig;
use crate::eddy::{
    apply_eddy_operator, assemble_kgm, assemble_kiso_full, assemble_kiso_small, kiso_full_entries,
    kiso_small_entries, triad_gradient_norm_sq, EddyTensor, MixingParams,
};
use crate::elliptic::{solve_isoneutral, SolveOptions};
use crate::eos::{density, static_pressure, EosTable, ThermoState};
use crate::error::{GmrError, Result};
use crate::field::ScalarField;
use crate::grid::{classify_regions, diff, inner, l2_norm, BoundarySpec, Grid};
use crate::neutral::{clip_small_slope, mollify, slope, RegularizationParams, SlopeField};
use crate::scenario::{integrate, Scenario};

pub const SUITES: [&str; 7] = ["ellipticity", "skewness", "bounds", "energy", "slopes", "eos", "elliptic"];

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(suite: &'static str, name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            measured,
            limit,
            passed: measured <= limit,
        }
    }

    fn at_least(suite: &'static str, name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            measured,
            limit,
            passed: measured >= limit,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<5} {:<12} {:<48} measured {:>12.4e}  limit {:>12.4e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.limit
        )
    }
}

fn mix() -> MixingParams {
    let p = SimConfig::default().physics;
    p.mixing()
}

fn random_slopes(d: crate::field::Dims, rng: &mut ChaCha8Rng, max: f64) -> SlopeField {
    let mut l = SlopeField::zeros(d);
    for c in 0..d.len() {
        l.lx[c] = rng.gen_range(-max..max);
        l.ly[c] = rng.gen_range(-max..max);
        l.active[c] = true;
    }
    l
}

fn eigen_range(m: [[f64; 3]; 3]) -> (f64, f64) {
    let a = Matrix3::from_fn(|i, j| m[i][j]);
    let e = a.symmetric_eigenvalues();
    (e.min(), e.max())
}

pub fn ellipticity(samples: usize, seed: u64) -> Vec<Check> {
    let p = mix();
    let (mu, big_m) = (p.mu(), p.big_m());
    let tol = 1e-10 * big_m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi, mut small_lo) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let r = SimConfig::default().regularization.r;
    for _ in 0..samples {
        // Slope magnitudes spread over several decades.
        let mag = 10f64.powf(rng.gen_range(-6.0..2.0));
        let ang = rng.gen_range(0.0..2.0 * PI);
        let (lx, ly) = (mag * ang.cos(), mag * ang.sin());
        let e = kiso_full_entries(lx, ly, &p);
        let (a, b) = eigen_range([[e[0], e[1], e[2]], [e[1], e[3], e[4]], [e[2], e[4], e[5]]]);
        lo = lo.min(a);
        hi = hi.max(b);
        let sm = r * rng.gen_range(0.0..1.0);
        let s = kiso_small_entries(sm * ang.cos(), sm * ang.sin(), &p);
        small_lo = small_lo.min(eigen_range([[s[0], s[1], s[2]], [s[1], s[3], s[4]], [s[2], s[4], s[5]]]).0);
    }
    vec![
        Check::at_least("ellipticity", format!("min eigenvalue over {samples} cells (mu = {mu})"), lo, mu - tol),
        Check::at_most("ellipticity", format!("max eigenvalue over {samples} cells (M = {big_m})"), hi, big_m + tol),
        Check::at_least("ellipticity", "small-slope min eigenvalue, |L| < r", small_lo, -tol),
    ]
}

pub fn skewness(fields: usize, n: usize, seed: u64) -> Result<Vec<Check>> {
    let grid = Grid::cube(n, 1.0, 1.0)?;
    let p = mix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let bc = BoundarySpec::neumann();
    for _ in 0..fields {
        let l = random_slopes(grid.dims, &mut rng, 1.0);
        let k = assemble_kgm(&l, &p);
        let c = ScalarField::from_fn(grid.dims, |_, _, _| rng.gen_range(-1.0..1.0));
        let out = apply_eddy_operator(&k, &c, &grid, &bc)?;
        let scale = triad_gradient_norm_sq(&c, &grid) * p.kappa;
        worst = worst.max(inner(&out, &c, &grid).abs() / scale);
    }
    Ok(vec![Check::at_most(
        "skewness",
        format!("max |(D_GM C, C)| / (kappa |grad C|^2), {fields} fields {n}^3"),
        worst,
        1e-12,
    )])
}

fn short_run(n: usize, steps: usize) -> Result<(Vec<crate::dynamics::BudgetRecord>, f64)> {
    let c = SimConfig::default().with_overrides(&[
        format!("grid.nx={n}"),
        format!("grid.ny={n}"),
        format!("grid.nz={n}"),
    ])?;
    let s = Scenario::build(&c)?;
    let records = integrate(&s, steps, |_, _, _| Ok(())).map_err(|a| a.error)?.0;
    let s_norm = l2_norm(&s.initial.salt, s.model.grid());
    Ok((records, s_norm))
}

pub fn bounds(steps: usize) -> Result<Vec<Check>> {
    let table = EosTable::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut outside = 0.0_f64;
    for _ in 0..1000 {
        let t = rng.gen_range(table.theta_range[0]..=table.theta_range[1]);
        let s = rng.gen_range(table.s_range[0]..=table.s_range[1]);
        let p = rng.gen_range(table.p_range[0]..=table.p_range[1]);
        let rho = table.density_point(t, s, p);
        let [lo, hi] = table.rho_range;
        outside = outside.max((lo - rho).max(rho - hi).max(0.0));
    }
    let (rec, s_norm) = short_run(16, steps)?;
    let r0 = rec[0];
    let tw = r0.theta_max - r0.theta_min;
    let sw = r0.s_max - r0.s_min;
    let theta_excess = rec
        .iter()
        .map(|r| (r0.theta_min - r.theta_min).max(r.theta_max - r0.theta_max))
        .fold(f64::NEG_INFINITY, f64::max)
        / tw;
    let salt_excess = rec
        .iter()
        .map(|r| (r0.s_min - r.s_min).max(r.s_max - r0.s_max))
        .fold(f64::NEG_INFINITY, f64::max)
        / sw;
    let drift = rec.iter().map(|r| (r.s_mean - r0.s_mean).abs()).fold(0.0, f64::max) / s_norm;
    Ok(vec![
        Check::at_most("bounds", "EOS density outside I_rho (1000 samples)", outside, 0.0),
        Check::at_most("bounds", format!("theta range excess / width, {steps} steps 16^3"), theta_excess, 1e-3),
        Check::at_most("bounds", format!("S range excess / width, {steps} steps 16^3"), salt_excess, 1e-3),
        Check::at_most("bounds", "S mean drift / |S0|", drift, 1e-12),
    ])
}

pub fn energy(steps: usize) -> Result<Vec<Check>> {
    let (rec, _) = short_run(16, steps)?;
    let res = rec.iter().map(|r| r.energy_residual).fold(0.0, f64::max);
    let growth = |f: fn(&crate::dynamics::BudgetRecord) -> f64| {
        rec.windows(2)
            .map(|w| (f(&w[1]) - f(&w[0])) / f(&w[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let gm = rec
        .iter()
        .map(|r| r.gm_variance.abs() / r.iso_dissipation.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("energy", format!("max per-step energy residual, {steps} steps"), res, 1e-8),
        Check::at_most("energy", "max relative growth of |theta|", growth(|r| r.theta_l2), 0.0),
        Check::at_most("energy", "max relative growth of |S|", growth(|r| r.s_l2), 0.0),
        Check::at_most("energy", "max |GM variance| / iso dissipation", gm, 1e-10),
    ])
}

pub fn slopes(seed: u64) -> Result<Vec<Check>> {
    let grid = Grid::cube(24, 1.0, 1.0)?;
    let reg = RegularizationParams {
        eta: 0.15,
        s0: 1.0,
        eps0: 0.5,
        r: 0.1,
    };
    let mask = classify_regions(&grid, reg.eta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ax, az) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..3.0));
    let rho = grid.field_from_coords(|x, y, z| 1025.0 - az * z + ax * (PI * x).cos() * (2.0 * y).sin() + 0.3 * (5.0 * z).sin());
    let rt = mollify(&rho, &grid, &reg, &mask)?;
    let l = slope(&rt, &grid, &reg, &mask)?;
    let gz = diff(&rt, 2, &grid, &BoundarySpec::neumann())?;
    let mut support = 0.0_f64;
    for c in 0..grid.dims.len() {
        if mask.dist[c] <= reg.eta || gz[c].abs() <= reg.s0 - reg.eps0 {
            support = support.max(l.lx[c].abs().max(l.ly[c].abs()));
        }
    }
    let once = clip_small_slope(&l, &reg);
    let twice = clip_small_slope(&once, &reg);
    let idem = if once == twice { 0.0 } else { 1.0 };
    let constant = mollify(&ScalarField::constant(grid.dims, 1025.0), &grid, &reg, &mask)?;
    let kernel_err = (0..grid.dims.len())
        .filter(|&c| mask.dist[c] > reg.eta)
        .map(|c| (constant[c] - 1025.0).abs())
        .fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("slopes", "max |L| on cut-off band and weak stratification", support, 0.0),
        Check::at_most("slopes", "clip idempotence violations", idem, 0.0),
        Check::at_most("slopes", "mollified constant error on dist > eta", kernel_err, 1e-10),
    ])
}

pub fn eos(seed: u64) -> Result<Vec<Check>> {
    let table = EosTable::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fd_err = 0.0_f64;
    let mut lip = 0.0_f64;
    let k = table.lipschitz_bound();
    let sample = |rng: &mut ChaCha8Rng| {
        (
            rng.gen_range(table.theta_range[0] + 0.01..table.theta_range[1] - 0.01),
            rng.gen_range(table.s_range[0] + 0.01..table.s_range[1] - 0.01),
            rng.gen_range(table.p_range[0]..table.p_range[1]),
        )
    };
    for _ in 0..1000 {
        let (t, s, p) = sample(&mut rng);
        let (a, b) = table.expansion_point(t, s, p);
        let h = 1e-5;
        let fa = -(table.density_point(t + h, s, p) - table.density_point(t - h, s, p)) / (2.0 * h);
        let fb = (table.density_point(t, s + h, p) - table.density_point(t, s - h, p)) / (2.0 * h);
        fd_err = fd_err.max(((fa - a) / a).abs()).max(((fb - b) / b).abs());
        let (t2, s2, _) = sample(&mut rng);
        let lhs = (table.density_point(t, s, p) - table.density_point(t2, s2, p)).abs();
        let rhs = k * ((t - t2).abs() + (s - s2).abs()) * (1.0 + 1e-9);
        lip = lip.max(lhs / rhs);
    }
    Ok(vec![
        Check::at_most("eos", "a, b vs central differences (rel.)", fd_err, 1e-6),
        Check::at_most("eos", "Lipschitz ratio |d rho| / K(|d theta| + |dS|)", lip, 1.0),
    ])
}

/// L² error of the manufactured zero-flux problem `cos cos cos` at `n^3`.
pub fn manufactured_error(n: usize) -> Result<f64> {
    let grid = Grid::cube(n, 1.0, 1.0)?;
    let p = MixingParams {
        k_i: 1.0,
        k_d: 0.1,
        kappa: 1.0,
    };
    let k = assemble_kiso_full(&SlopeField::zeros(grid.dims), &p);
    let exact = grid.field_from_coords(|x, y, z| (PI * x).cos() * (PI * y).cos() * (PI * z).cos());
    let lam = p.k_i * 2.0 * PI * PI + p.k_d * PI * PI;
    let f = exact.map(|v| lam * v);
    let opts = SolveOptions {
        rtol: 1e-12,
        maxit: 20_000,
        ..Default::default()
    };
    let (c, rep) = solve_isoneutral(&k, &f, &grid, &BoundarySpec::neumann(), &opts)?;
    if !rep.converged {
        return Err(GmrError::Numerical(format!("manufactured solve at {n}^3 did not converge")));
    }
    Ok(l2_norm(&c.zip_map(&exact, |a, b| a - b), &grid))
}

/// Relative residual of a general-tensor Robin solve at `n^3`.
pub fn general_tensor_residual(n: usize, seed: u64) -> Result<(f64, usize)> {
    let grid = Grid::cube(n, 1.0, 1.0)?;
    let p = MixingParams {
        k_i: 1.0,
        k_d: 0.1,
        kappa: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (rng.gen_range(0.2..0.6), rng.gen_range(0.2..0.6));
    let mut l = SlopeField::zeros(grid.dims);
    for c in 0..grid.dims.len() {
        let [i, j, k] = grid.dims.ijk(c);
        let (x, y, z) = (grid.xc[i], grid.yc[j], grid.zc[k]);
        l.lx[c] = a * (PI * x).sin() * (PI * z).cos();
        l.ly[c] = b * (2.0 * PI * y).cos();
    }
    let k = assemble_kiso_full(&l, &p);
    let bc = BoundarySpec::with_surface(crate::grid::FaceCondition::Robin {
        k: 1.0,
        target: crate::grid::FaceValue::Uniform(0.0),
    });
    let f = ScalarField::from_fn(grid.dims, |_, _, _| rng.gen_range(-1.0..1.0));
    let opts = SolveOptions {
        rtol: 1e-9,
        maxit: 5000,
        ..Default::default()
    };
    let (c, rep) = solve_isoneutral(&k, &f, &grid, &bc, &opts)?;
    let back = apply_eddy_operator(&k, &c, &grid, &bc)?;
    Ok((
        l2_norm(&back.zip_map(&f, |x, y| x - y), &grid) / l2_norm(&f, &grid),
        rep.iterations,
    ))
}

pub fn elliptic() -> Result<Vec<Check>> {
    let e16 = manufactured_error(16)?;
    let e32 = manufactured_error(32)?;
    let order = (e16 / e32).log2();
    let (res, its) = general_tensor_residual(32, 1)?;
    Ok(vec![
        Check::at_least("elliptic", "manufactured L2 order, 16 -> 32", order, 1.9),
        Check::at_most("elliptic", format!("general tensor residual at 32^3 ({its} its)"), res, 1e-8),
    ])
}

/// Small-slope tensors stay bracketed too, but only on clipped slopes.
pub fn small_slope_psd(n: usize, seed: u64) -> Result<f64> {
    let grid = Grid::cube(n, 1.0, 1.0)?;
    let reg = RegularizationParams {
        eta: 0.15,
        s0: 1.0,
        eps0: 0.5,
        r: 0.1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = clip_small_slope(&random_slopes(grid.dims, &mut rng, 0.2), &reg);
    let k = assemble_kiso_small(&l, &mix());
    Ok((0..grid.dims.len())
        .map(|c| eigen_range(k.matrix(c)).0)
        .fold(f64::INFINITY, f64::min))
}

/// Run one named suite (or `all`).
pub fn run_suite(name: &str) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let names: Vec<&str> = if name == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&name) {
        vec![name]
    } else {
        return Err(GmrError::Argument(format!(
            "unknown suite {name:?}; expected one of {} or all",
            SUITES.join(", ")
        )));
    };
    for s in names {
        match s {
            "ellipticity" => {
                out.extend(ellipticity(10_000, 1));
                out.push(Check::at_least(
                    "ellipticity",
                    "small-slope field min eigenvalue, 16^3",
                    small_slope_psd(16, 2)?,
                    -1e-10 * mix().big_m(),
                ));
            }
            "skewness" => out.extend(skewness(20, 32, 2)?),
            "bounds" => out.extend(bounds(40)?),
            "energy" => out.extend(energy(40)?),
            "slopes" => out.extend(slopes(4)?),
            "eos" => out.extend(eos(5)?),
            "elliptic" => out.extend(elliptic()?),
            _ => unreachable!(),
        }
    }
    Ok(out)
}

/// Density field at static pressure for a state, used by callers that only
/// have tracers at hand.
pub fn density_of(theta: &ScalarField, salt: &ScalarField, grid: &Grid, table: &EosTable) -> Result<ScalarField> {
    let p_st = static_pressure(grid, table);
    density(
        &ThermoState {
            theta,
            salt,
            p_st: &p_st,
        },
        table,
    )
}
