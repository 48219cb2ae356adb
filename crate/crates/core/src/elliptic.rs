//! Matrix-free Krylov solvers for the steady isoneutral problem and the
//! rigid-lid surface pressure.

use crate::eddy::{apply_eddy_operator, ClosureSetup, SymTensorField};
use crate::error::{GmrError, Result};
use crate::field::{Dims, Field2, ScalarField, VectorField};
use crate::grid::{
    diff, l2_norm, mean, neumann_divergence, BoundarySpec, FaceCondition, FaceValue, Grid,
    GridSpec,
};

/// Krylov method used by the drivers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Krylov {
    /// Conjugate gradients: minimizes the energy-norm error.
    Cg,
    /// Conjugate residuals: minimizes the residual norm, so the trace is monotone.
    #[default]
    Cr,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub maxit: usize,
    pub method: Krylov,
    /// Symmetric Jacobi scaling (CG only).
    pub jacobi: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 0.0,
            maxit: 5000,
            method: Krylov::Cr,
            jacobi: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub converged: bool,
    /// Residual norm after every iteration, starting with the initial one.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solve `A x = b` for symmetric positive (semi)definite `A` given as a
/// closure. `weight` turns Euclidean norms into the reported discrete L²
/// norms; `project` removes the constant mode for singular problems.
/// `diag` is the operator diagonal used for Jacobi scaling.
#[allow(clippy::too_many_arguments)]
pub fn krylov<F>(
    mut apply: F,
    b: &[f64],
    x: &mut [f64],
    opts: &SolveOptions,
    weight: f64,
    project: bool,
    diag: Option<&[f64]>,
    dims: Dims,
) -> Result<SolveReport>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = b.len();
    let norm = |v: &[f64]| (weight * dot(v, v)).sqrt();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if project {
        remove_mean(&mut r);
    }
    let r0 = norm(&r);
    let target = opts.rtol * r0 + opts.atol;
    let mut trace = vec![r0];
    let mut report = SolveReport {
        iterations: 0,
        initial_residual: r0,
        final_residual: r0,
        converged: r0 <= target,
        trace: Vec::new(),
    };
    if report.converged {
        report.trace = trace;
        return Ok(report);
    }
    let negative = |p: &[f64], ap: &[f64]| -> GmrError {
        let worst = (0..n)
            .min_by(|&i, &j| (p[i] * ap[i]).total_cmp(&(p[j] * ap[j])))
            .unwrap_or(0);
        GmrError::Numerical(format!(
            "indefinite operator: negative curvature, most negative at cell {:?}",
            dims.ijk(worst)
        ))
    };
    let scale: Option<Vec<f64>> = match (opts.jacobi, diag) {
        (true, Some(d)) => Some(
            d.iter()
                .map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 })
                .collect(),
        ),
        _ => None,
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        match &scale {
            Some(s) => r.iter().zip(s).map(|(a, b)| a * b).collect(),
            None => r.to_vec(),
        }
    };
    let mut ap = vec![0.0; n];
    match opts.method {
        Krylov::Cg => {
            let mut z = precond(&r);
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            for it in 1..=opts.maxit {
                apply(&p, &mut ap)?;
                let pap = dot(&p, &ap);
                if pap < 0.0 {
                    return Err(negative(&p, &ap));
                }
                if pap == 0.0 {
                    break;
                }
                let alpha = rz / pap;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                if project {
                    remove_mean(&mut r);
                }
                let rn = norm(&r);
                trace.push(rn);
                report.iterations = it;
                report.final_residual = rn;
                if rn <= target {
                    report.converged = true;
                    break;
                }
                z = precond(&r);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
            }
        }
        Krylov::Cr => {
            let mut p = r.clone();
            let mut ar = vec![0.0; n];
            apply(&r, &mut ar)?;
            let mut ap_cur = ar.clone();
            let mut rar = dot(&r, &ar);
            if rar < 0.0 {
                return Err(negative(&r, &ar));
            }
            for it in 1..=opts.maxit {
                let apap = dot(&ap_cur, &ap_cur);
                if apap == 0.0 || rar == 0.0 {
                    break;
                }
                let alpha = rar / apap;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap_cur[i];
                }
                if project {
                    remove_mean(&mut r);
                }
                let rn = norm(&r);
                trace.push(rn);
                report.iterations = it;
                report.final_residual = rn;
                if rn <= target {
                    report.converged = true;
                    break;
                }
                apply(&r, &mut ar)?;
                let rar_new = dot(&r, &ar);
                if rar_new < 0.0 {
                    return Err(negative(&r, &ar));
                }
                let beta = rar_new / rar;
                rar = rar_new;
                for i in 0..n {
                    p[i] = r[i] + beta * p[i];
                    ap_cur[i] = ar[i] + beta * ap_cur[i];
                }
            }
        }
    }
    if project {
        remove_mean(x);
    }
    report.trace = trace;
    Ok(report)
}

/// Split a tracer boundary spec into its homogeneous version (Robin target
/// set to zero) and report whether it carries a Robin face with `k > 0`.
fn homogeneous(bc: &BoundarySpec) -> (BoundarySpec, bool) {
    let mut out = bc.clone();
    let mut definite = false;
    for faces in out.faces.iter_mut() {
        for f in faces.iter_mut() {
            if let FaceCondition::Robin { k, target } = f {
                definite |= *k > 0.0;
                *target = FaceValue::Uniform(0.0);
            }
        }
    }
    (out, definite)
}

fn operator_diagonal(k: &SymTensorField, grid: &Grid, bc: &BoundarySpec) -> Vec<f64> {
    let d = grid.dims;
    let h = [grid.dx, grid.dy, grid.dz];
    let diag_k = [&k.k11, &k.k22, &k.k33];
    let mut out = vec![0.0; d.len()];
    for (c, o) in out.iter_mut().enumerate() {
        let ijk = d.ijk(c);
        for a in 0..3 {
            let faces = (ijk[a] > 0) as u8 + (ijk[a] + 1 < d.n(a)) as u8;
            *o += 0.5 * f64::from(faces) * diag_k[a][c] / (h[a] * h[a]);
        }
        if ijk[2] + 1 == d.nz {
            if let FaceCondition::Robin { k: kr, .. } = bc.faces[2][1] {
                *o += kr / grid.dz;
            }
        }
    }
    out
}

/// Solve `D_iso(C) = F`. With a Robin surface face (`k > 0`) the problem is
/// definite; with zero-flux faces only, `F` must have zero mean and the
/// zero-mean solution is returned.
pub fn solve_isoneutral(
    k: &SymTensorField,
    f: &ScalarField,
    grid: &Grid,
    bc: &BoundarySpec,
    opts: &SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    f.check_dims(grid.dims, "solve_isoneutral")?;
    let (bc0, definite) = homogeneous(bc);
    let d = grid.dims;
    // Affine part: D(0) carries the Robin target.
    let offset = apply_eddy_operator(k, &ScalarField::zeros(d), grid, bc)?;
    let mut rhs: Vec<f64> = f
        .as_slice()
        .iter()
        .zip(offset.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    if !definite {
        let m = mean(f, grid);
        let scale = f.max_abs().max(f64::MIN_POSITIVE);
        if m.abs() > 1e-10 * scale {
            return Err(GmrError::Argument(format!(
                "zero-flux isoneutral problem needs a zero-mean right-hand side, mean is {m:e}"
            )));
        }
        remove_mean(&mut rhs);
    }
    let diag = operator_diagonal(k, grid, bc);
    let mut x = vec![0.0; d.len()];
    let report = krylov(
        |v, out| {
            let vf = ScalarField::from_vec(d, v.to_vec())?;
            let r = apply_eddy_operator(k, &vf, grid, &bc0)?;
            out.copy_from_slice(r.as_slice());
            Ok(())
        },
        &rhs,
        &mut x,
        opts,
        grid.cell_volume(),
        !definite,
        Some(&diag),
        d,
    )?;
    Ok((ScalarField::from_vec(d, x)?, report))
}

/// Single-layer grid over the same horizontal box.
pub fn surface_grid(grid: &Grid) -> Grid {
    Grid::new(&GridSpec {
        nx: grid.dims.nx,
        ny: grid.dims.ny,
        nz: 1,
        lx: grid.lx,
        ly: grid.ly,
        h: grid.h,
    })
    .expect("horizontal extents were validated with the parent grid")
}

/// `sum_k v dz`, the depth-integrated transport.
pub fn depth_integral(v: &ScalarField, grid: &Grid) -> ScalarField {
    let d = grid.dims;
    let mut out = vec![0.0; d.horizontal_len()];
    for (c, &x) in v.as_slice().iter().enumerate() {
        out[c % d.horizontal_len()] += x * grid.dz;
    }
    ScalarField::from_vec(Dims::new(d.nx, d.ny, 1), out).expect("sized above")
}

/// Horizontal divergence of the depth-integrated transport, in discrete L².
pub fn barotropic_divergence(v: &VectorField, grid: &Grid) -> ScalarField {
    let g2 = surface_grid(grid);
    let mut div = neumann_divergence(&depth_integral(&v.x, grid), 0, &g2);
    div.axpy(1.0, &neumann_divergence(&depth_integral(&v.y, grid), 1, &g2));
    div
}

/// Rigid-lid projection: solve `div_h grad_h p_s = div_h(int v dz) / (h dt)`
/// and return `p_s` (zero mean). The corrected field is `v - dt grad_h p_s`.
pub fn solve_surface_pressure(
    v_pred: &VectorField,
    grid: &Grid,
    dt: f64,
    opts: &SolveOptions,
) -> Result<(Field2, SolveReport)> {
    if !v_pred.is_finite() {
        return Err(GmrError::Numerical("non-finite predictor velocity".into()));
    }
    if !(dt > 0.0) {
        return Err(GmrError::Argument(format!("dt must be positive, got {dt}")));
    }
    let g2 = surface_grid(grid);
    let d2 = g2.dims;
    let div = barotropic_divergence(v_pred, grid);
    // -div grad is positive semidefinite; solve -div grad p = -rhs.
    let s = -1.0 / (grid.h * dt);
    let rhs: Vec<f64> = div.as_slice().iter().map(|x| x * s).collect();
    let bc = BoundarySpec::neumann();
    let mut x = vec![0.0; d2.len()];
    let report = krylov(
        |p, out| {
            let pf = ScalarField::from_vec(d2, p.to_vec())?;
            let mut lap = neumann_divergence(&diff(&pf, 0, &g2, &bc)?, 0, &g2);
            lap.axpy(1.0, &neumann_divergence(&diff(&pf, 1, &g2, &bc)?, 1, &g2));
            for (o, l) in out.iter_mut().zip(lap.as_slice()) {
                *o = -l;
            }
            Ok(())
        },
        &rhs,
        &mut x,
        opts,
        g2.dx * g2.dy,
        true,
        None,
        d2,
    )?;
    let mut ps = Field2::zeros(d2.nx, d2.ny);
    ps.as_mut_slice().copy_from_slice(&x);
    Ok((ps, report))
}

/// `v <- v - dt grad_h p_s` on every level.
pub fn apply_pressure_correction(v: &mut VectorField, ps: &Field2, grid: &Grid, dt: f64) -> Result<()> {
    let g2 = surface_grid(grid);
    let pf = ScalarField::from_vec(g2.dims, ps.as_slice().to_vec())?;
    let bc = BoundarySpec::neumann();
    let gx = diff(&pf, 0, &g2, &bc)?;
    let gy = diff(&pf, 1, &g2, &bc)?;
    let n2 = grid.dims.horizontal_len();
    for c in 0..grid.dims.len() {
        v.x[c] -= dt * gx[c % n2];
        v.y[c] -= dt * gy[c % n2];
    }
    Ok(())
}

/// Project `v` onto depth-integrated divergence-free fields; returns `p_s`.
pub fn project(v: &mut VectorField, grid: &Grid, dt: f64, opts: &SolveOptions) -> Result<(Field2, SolveReport)> {
    let (ps, report) = solve_surface_pressure(v, grid, dt, opts)?;
    apply_pressure_correction(v, &ps, grid, dt)?;
    Ok((ps, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardReport {
    pub sweeps: usize,
    pub converged: bool,
    /// Relative L² change of `(theta, S)` per sweep.
    pub increments: Vec<f64>,
}

/// Coupled steady problem `D_iso(rho~(theta,S))(theta) = F`,
/// `D_iso(rho~(theta,S))(S) = G`, iterated by re-assembling the tensor from
/// the latest iterate. The salinity iterate is the zero-mean solution shifted
/// by the mean of `salt0`, so the equation of state sees physical values.
#[allow(clippy::too_many_arguments)]
pub fn picard_isoneutral(
    setup: &ClosureSetup,
    theta0: &ScalarField,
    salt0: &ScalarField,
    f: &ScalarField,
    g: &ScalarField,
    theta_bc: &BoundarySpec,
    opts: &SolveOptions,
    tol: f64,
    max_sweeps: usize,
) -> Result<(ScalarField, ScalarField, PicardReport)> {
    let grid = &setup.grid;
    let s_ref = mean(salt0, grid);
    let salt_bc = BoundarySpec::neumann();
    let (mut theta, mut salt) = (theta0.clone(), salt0.clone());
    let mut report = PicardReport {
        sweeps: 0,
        converged: false,
        increments: Vec::new(),
    };
    for sweep in 1..=max_sweeps {
        let k = setup.diagnose(&theta, &salt)?.kiso;
        let (t_new, _) = solve_isoneutral(&k, f, grid, theta_bc, opts)?;
        let (mut s_new, _) = solve_isoneutral(&k, g, grid, &salt_bc, opts)?;
        s_new.as_mut_slice().iter_mut().for_each(|x| *x += s_ref);
        let dt_norm = l2_norm(&t_new.zip_map(&theta, |a, b| a - b), grid);
        let ds_norm = l2_norm(&s_new.zip_map(&salt, |a, b| a - b), grid);
        let scale = l2_norm(&t_new, grid).hypot(l2_norm(&s_new, grid)).max(f64::MIN_POSITIVE);
        let inc = dt_norm.hypot(ds_norm) / scale;
        report.increments.push(inc);
        report.sweeps = sweep;
        theta = t_new;
        salt = s_new;
        if inc <= tol {
            report.converged = true;
            break;
        }
    }
    Ok((theta, salt, report))
}
