//! Time-dependent primitive equations: diagnostics, right-hand sides,
//! SSP-RK3 stepping with a rigid-lid projection, and budgets.

use serde::{Deserialize, Serialize};

use crate::eddy::{
    apply_eddy_operator, bilinear_form, robin_surface_term, ClosureSetup, ClosureState,
    EddyTensor, SymTensorField,
};
use crate::elliptic::{project, SolveOptions};
use crate::error::{GmrError, Result};
use crate::field::{Dims, Field2, ScalarField, VectorField};
use crate::grid::{
    diff, inner, l2_norm, mean, neumann_divergence, second_diff, BoundarySpec, FaceCondition,
    FaceValue, Grid,
};

#[derive(Clone, Debug, PartialEq)]
pub struct OceanState {
    pub v: VectorField,
    pub theta: ScalarField,
    pub salt: ScalarField,
    pub t: f64,
}

impl OceanState {
    pub fn at_rest(theta: ScalarField, salt: ScalarField) -> Self {
        Self {
            v: VectorField::zeros(theta.dims()),
            theta,
            salt,
            t: 0.0,
        }
    }

    fn lincomb(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        let f = |p: &ScalarField, q: &ScalarField| p.zip_map(q, |u, w| a * u + b * w);
        Self {
            v: VectorField {
                x: f(&x.v.x, &y.v.x),
                y: f(&x.v.y, &y.v.y),
            },
            theta: f(&x.theta, &y.theta),
            salt: f(&x.salt, &y.salt),
            t: a * x.t + b * y.t,
        }
    }

    fn first_non_finite(&self) -> Option<(&'static str, [usize; 3])> {
        [
            ("u", &self.v.x),
            ("v", &self.v.y),
            ("theta", &self.theta),
            ("S", &self.salt),
        ]
        .into_iter()
        .find_map(|(n, f)| f.first_non_finite().map(|c| (n, c)))
    }
}

/// Surface forcing and the non-tracer physical constants.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    /// Wind stress components; the surface condition is `d_z v = h tau`.
    pub tau_x: Field2,
    pub tau_y: Field2,
    pub theta_star: Field2,
    /// Restoring rate; 0 switches restoring off.
    pub k_theta: f64,
    pub f: f64,
    pub re1: f64,
    pub re2: f64,
}

impl BoundaryData {
    pub fn quiescent(nx: usize, ny: usize, f: f64, re1: f64, re2: f64) -> Self {
        Self {
            tau_x: Field2::zeros(nx, ny),
            tau_y: Field2::zeros(nx, ny),
            theta_star: Field2::zeros(nx, ny),
            k_theta: 0.0,
            f,
            re1,
            re2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.k_theta >= 0.0) {
            bad.push(format!("boundary.k_theta must be >= 0, got {}", self.k_theta));
        }
        if !(self.re1 > 0.0) {
            bad.push(format!("physics.Re1 must be positive, got {}", self.re1));
        }
        if !(self.re2 > 0.0) {
            bad.push(format!("physics.Re2 must be positive, got {}", self.re2));
        }
        if !self.f.is_finite() {
            bad.push("physics.f must be finite".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GmrError::ConfigList(bad))
        }
    }

    /// Tracer closure for temperature: Robin at the surface, zero flux elsewhere.
    pub fn theta_bc(&self) -> BoundarySpec {
        BoundarySpec::with_surface(FaceCondition::Robin {
            k: self.k_theta,
            target: FaceValue::Map(self.theta_star.as_slice().to_vec()),
        })
    }

    /// Velocity closures per component: no-penetration on the normal walls,
    /// stress-free on the tangential ones, wind stress at the surface.
    fn velocity_bc(&self, component: usize, h: f64) -> BoundarySpec {
        let tau = if component == 0 { &self.tau_x } else { &self.tau_y };
        let flux: Vec<f64> = tau.as_slice().iter().map(|t| h * t).collect();
        let wall = |axis: usize| {
            if axis == component {
                FaceCondition::DirichletZero
            } else {
                FaceCondition::NeumannZero
            }
        };
        BoundarySpec {
            faces: [
                [wall(0), wall(0)],
                [wall(1), wall(1)],
                [
                    FaceCondition::NeumannZero,
                    FaceCondition::Flux(FaceValue::Map(flux)),
                ],
            ],
        }
    }
}

/// One row of `budgets.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRecord {
    pub t: f64,
    pub ke: f64,
    pub theta_l2: f64,
    pub s_l2: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub s_mean: f64,
    pub iso_dissipation: f64,
    pub gm_variance: f64,
    pub robin_term: f64,
    pub energy_residual: f64,
}

impl BudgetRecord {
    pub const HEADER: [&'static str; 13] = [
        "t",
        "ke",
        "theta_l2",
        "s_l2",
        "theta_min",
        "theta_max",
        "s_min",
        "s_max",
        "s_mean",
        "iso_dissipation",
        "gm_variance",
        "robin_term",
        "energy_residual",
    ];

    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.ke,
            self.theta_l2,
            self.s_l2,
            self.theta_min,
            self.theta_max,
            self.s_min,
            self.s_max,
            self.s_mean,
            self.iso_dissipation,
            self.gm_variance,
            self.robin_term,
            self.energy_residual,
        ]
    }
}

/// Vertical velocity on the `nz + 1` horizontal faces, bottom first.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    dims: Dims,
    data: Vec<f64>,
}

impl FaceField {
    #[inline]
    pub fn at(&self, i: usize, j: usize, kf: usize) -> f64 {
        self.data[i + self.dims.nx * (j + self.dims.ny * kf)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Surface layer `w(z = 0)`.
    pub fn surface(&self) -> &[f64] {
        &self.data[self.dims.nz * self.dims.horizontal_len()..]
    }

    pub fn at_centers(&self) -> ScalarField {
        ScalarField::from_fn(self.dims, |i, j, k| 0.5 * (self.at(i, j, k) + self.at(i, j, k + 1)))
    }
}

fn horizontal_divergence(v: &VectorField, grid: &Grid) -> ScalarField {
    let mut d = neumann_divergence(&v.x, 0, grid);
    d.axpy(1.0, &neumann_divergence(&v.y, 1, grid));
    d
}

/// `w(z) = -int_{-h}^z div_h v`, accumulated face by face from the bottom.
pub fn vertical_velocity_faces(v: &VectorField, grid: &Grid) -> FaceField {
    let d = grid.dims;
    let n2 = d.horizontal_len();
    let div = horizontal_divergence(v, grid);
    let mut data = vec![0.0; n2 * (d.nz + 1)];
    for k in 0..d.nz {
        for q in 0..n2 {
            data[(k + 1) * n2 + q] = data[k * n2 + q] - div[k * n2 + q] * grid.dz;
        }
    }
    FaceField { dims: d, data }
}

/// Cell-centred vertical velocity.
pub fn vertical_velocity(v: &VectorField, grid: &Grid) -> ScalarField {
    vertical_velocity_faces(v, grid).at_centers()
}

/// Hydrostatic pressure with `d_z p = -g rho` and `p = p_s` at `z = 0`.
pub fn hydrostatic_pressure(rho: &ScalarField, ps: &Field2, grid: &Grid, g: f64) -> Result<ScalarField> {
    rho.check_dims(grid.dims, "hydrostatic_pressure")?;
    let d = grid.dims;
    if ps.nx != d.nx || ps.ny != d.ny {
        return Err(GmrError::Argument("surface pressure shape does not match grid".into()));
    }
    let n2 = d.horizontal_len();
    let mut p = ScalarField::zeros(d);
    let top = d.nz - 1;
    for q in 0..n2 {
        let mut acc = ps.as_slice()[q] + g * rho[top * n2 + q] * 0.5 * grid.dz;
        p[top * n2 + q] = acc;
        for k in (0..top).rev() {
            acc += g * 0.5 * (rho[k * n2 + q] + rho[(k + 1) * n2 + q]) * grid.dz;
            p[k * n2 + q] = acc;
        }
    }
    Ok(p)
}

/// Energy-neutral centred advection `(v . grad) C + w d_z C` in skew form.
fn advect(c: &ScalarField, v: &VectorField, w: &FaceField, grid: &Grid) -> Result<ScalarField> {
    let bc = BoundarySpec::neumann();
    let mut out = neumann_divergence(&c.zip_map(&v.x, |a, b| a * b), 0, grid);
    out.axpy(1.0, &neumann_divergence(&c.zip_map(&v.y, |a, b| a * b), 1, grid));
    let gx = diff(c, 0, grid, &bc)?;
    let gy = diff(c, 1, grid, &bc)?;
    let d = grid.dims;
    let n2 = d.horizontal_len();
    let inv2dz = 0.5 / grid.dz;
    for k in 0..d.nz {
        for q in 0..n2 {
            let cell = k * n2 + q;
            let (i, j) = (q % d.nx, q / d.nx);
            let mut vert = 0.0;
            // Top and bottom faces carry no transport.
            if k + 1 < d.nz {
                vert += w.at(i, j, k + 1) * c[cell + n2];
            }
            if k > 0 {
                vert -= w.at(i, j, k) * c[cell - n2];
            }
            out[cell] = 0.5 * out[cell]
                + 0.5 * (v.x[cell] * gx[cell] + v.y[cell] * gy[cell])
                + vert * inv2dz;
        }
    }
    Ok(out)
}

/// Compiled model: closure machinery, boundary data and stepping controls.
#[derive(Clone, Debug)]
pub struct Model {
    pub setup: ClosureSetup,
    pub bd: BoundaryData,
    pub safety: f64,
    pub dt_max: f64,
    pub projection: SolveOptions,
    /// Keep the velocity fixed (tracer-only runs).
    pub freeze_velocity: bool,
}

/// Right-hand sides and diagnostics at one stage.
#[derive(Clone, Debug)]
pub struct StageEval {
    pub closure: ClosureState,
    pub w: FaceField,
    pub p: ScalarField,
    pub rhs_v: VectorField,
    pub rhs_theta: ScalarField,
    pub rhs_salt: ScalarField,
    pub energy_residual: f64,
}

impl Model {
    pub fn new(setup: ClosureSetup, bd: BoundaryData, dt_max: f64) -> Result<Self> {
        bd.validate()?;
        let d = setup.grid.dims;
        if bd.theta_star.nx != d.nx || bd.theta_star.ny != d.ny {
            return Err(GmrError::Argument("theta_star shape does not match grid".into()));
        }
        Ok(Self {
            setup,
            bd,
            safety: 0.5,
            dt_max,
            projection: SolveOptions {
                rtol: 1e-13,
                atol: 0.0,
                maxit: 4000,
                ..Default::default()
            },
            freeze_velocity: false,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.setup.grid
    }

    pub fn momentum_rhs(&self, state: &OceanState, w: &FaceField, p: &ScalarField) -> Result<VectorField> {
        let grid = self.grid();
        let bd = &self.bd;
        let mut out = Vec::with_capacity(2);
        for comp in 0..2 {
            let u = if comp == 0 { &state.v.x } else { &state.v.y };
            let bc = bd.velocity_bc(comp, grid.h);
            let mut r = advect(u, &state.v, w, grid)?;
            r.scale(-1.0);
            r.axpy(-1.0, &diff(p, comp, grid, &BoundarySpec::neumann())?);
            let lap = second_diff(u, 0, grid, &bc)?.zip_map(&second_diff(u, 1, grid, &bc)?, |a, b| a + b);
            r.axpy(1.0 / bd.re1, &lap);
            r.axpy(1.0 / bd.re2, &second_diff(u, 2, grid, &bc)?);
            out.push(r);
        }
        let (mut rx, mut ry) = (out.remove(0), out.remove(0));
        // -f k x v = (f v, -f u)
        rx.axpy(bd.f, &state.v.y);
        ry.axpy(-bd.f, &state.v.x);
        Ok(VectorField { x: rx, y: ry })
    }

    /// `-(v . grad) C - w d_z C - D_iso(C) - D_GM(C)`.
    pub fn tracer_rhs(
        &self,
        c: &ScalarField,
        v: &VectorField,
        w: &FaceField,
        closure: &ClosureState,
        bc: &BoundarySpec,
    ) -> Result<ScalarField> {
        let grid = self.grid();
        let mut r = advect(c, v, w, grid)?;
        r.axpy(1.0, &apply_eddy_operator(&closure.kiso, c, grid, bc)?);
        r.axpy(1.0, &apply_eddy_operator(&closure.kgm, c, grid, bc)?);
        r.scale(-1.0);
        Ok(r)
    }

    pub fn evaluate(&self, state: &OceanState) -> Result<StageEval> {
        let grid = self.grid();
        let closure = self.setup.diagnose(&state.theta, &state.salt)?;
        let w = vertical_velocity_faces(&state.v, grid);
        let zero = Field2::zeros(grid.dims.nx, grid.dims.ny);
        let p = hydrostatic_pressure(&closure.rho, &zero, grid, self.setup.table.g)?;
        let rhs_v = if self.freeze_velocity {
            VectorField::zeros(grid.dims)
        } else {
            self.momentum_rhs(state, &w, &p)?
        };
        let theta_bc = self.bd.theta_bc();
        let salt_bc = BoundarySpec::neumann();
        let rhs_theta = self.tracer_rhs(&state.theta, &state.v, &w, &closure, &theta_bc)?;
        let rhs_salt = self.tracer_rhs(&state.salt, &state.v, &w, &closure, &salt_bc)?;
        let energy_residual = self
            .energy_residual(&state.theta, &rhs_theta, &closure.kiso, true)
            .max(self.energy_residual(&state.salt, &rhs_salt, &closure.kiso, false));
        Ok(StageEval {
            closure,
            w,
            p,
            rhs_v,
            rhs_theta,
            rhs_salt,
            energy_residual,
        })
    }

    fn robin(&self, c: &ScalarField) -> f64 {
        robin_surface_term(c, self.bd.k_theta, self.bd.theta_star.as_slice(), self.grid())
    }

    /// Relative defect of `(C, dC/dt) + a_iso(C, C) + k int C (C - C*) = 0`.
    pub fn energy_residual(&self, c: &ScalarField, rhs: &ScalarField, kiso: &SymTensorField, robin: bool) -> f64 {
        let grid = self.grid();
        let tendency = inner(c, rhs, grid);
        let a = bilinear_form(kiso, c, c, grid);
        let rb = if robin { self.robin(c) } else { 0.0 };
        let scale = l2_norm(c, grid) * l2_norm(rhs, grid) + a.abs() + rb.abs();
        if scale == 0.0 {
            0.0
        } else {
            (tendency + a + rb).abs() / scale
        }
    }

    /// Largest stable step for the current state, clamped to `dt_max`.
    pub fn cfl_dt(&self, state: &OceanState) -> Result<f64> {
        let closure = self.setup.diagnose(&state.theta, &state.salt)?;
        Ok(self.cfl_dt_with(state, &closure))
    }

    fn cfl_dt_with(&self, state: &OceanState, closure: &ClosureState) -> f64 {
        let grid = self.grid();
        let inv_h2: f64 = [grid.dx, grid.dy, grid.dz].iter().map(|h| 1.0 / (h * h)).sum();
        let mk = tensor_bound(closure, &self.setup.mix);
        let mut dt = self.dt_max;
        dt = dt.min(self.safety / (2.0 * mk * inv_h2));
        let speed = state.v.max_speed();
        if speed > 0.0 {
            dt = dt.min(self.safety * grid.min_spacing() / speed);
        }
        if !self.freeze_velocity {
            let nu = 2.0
                * ((1.0 / self.bd.re1) * (1.0 / (grid.dx * grid.dx) + 1.0 / (grid.dy * grid.dy))
                    + (1.0 / self.bd.re2) / (grid.dz * grid.dz));
            dt = dt.min(self.safety / nu);
        }
        dt
    }

    fn project_into(&self, s: &mut OceanState, dt: f64) -> Result<()> {
        if self.freeze_velocity {
            return Ok(());
        }
        let (_, rep) = project(&mut s.v, self.grid(), dt, &self.projection)?;
        if !rep.converged {
            log::warn!(
                "surface pressure solve stopped at {:e} after {} iterations",
                rep.final_residual,
                rep.iterations
            );
        }
        Ok(())
    }

    fn check_finite(&self, s: &OceanState, stage: usize) -> Result<()> {
        if let Some((name, cell)) = s.first_non_finite() {
            return Err(GmrError::Numerical(format!(
                "non-finite {name} at cell {cell:?} in stage {stage} (t = {}); last valid state is the step input",
                s.t
            )));
        }
        Ok(())
    }

    fn euler(&self, s: &OceanState, e: &StageEval, dt: f64) -> OceanState {
        let mut out = s.clone();
        out.v.axpy(dt, &e.rhs_v);
        out.theta.axpy(dt, &e.rhs_theta);
        out.salt.axpy(dt, &e.rhs_salt);
        out.t += dt;
        out
    }

    /// One SSP-RK3 step (Shu-Osher form), each stage projected.
    pub fn step(&self, state: &OceanState, dt: f64) -> Result<(OceanState, BudgetRecord)> {
        let e0 = self.evaluate(state)?;
        let (s, rec, _) = self.step_from(state, e0, dt)?;
        Ok((s, rec))
    }

    /// Largest admissible step given an evaluation of `state`.
    pub fn stable_dt(&self, state: &OceanState, e: &StageEval) -> f64 {
        self.cfl_dt_with(state, &e.closure)
    }

    /// Step from an existing evaluation of `state`; also returns the
    /// evaluation of the new state so callers can chain steps cheaply.
    pub fn step_from(
        &self,
        state: &OceanState,
        e0: StageEval,
        dt: f64,
    ) -> Result<(OceanState, BudgetRecord, StageEval)> {
        let limit = self.cfl_dt_with(state, &e0.closure);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(GmrError::Argument(format!(
                "dt = {dt:e} violates the stability limit {limit:e}"
            )));
        }
        let mut worst = e0.energy_residual;
        let mut s1 = self.euler(state, &e0, dt);
        self.project_into(&mut s1, dt)?;
        self.check_finite(&s1, 1)?;
        let e1 = self.evaluate(&s1)?;
        worst = worst.max(e1.energy_residual);
        let mut s2 = OceanState::lincomb(0.75, state, 0.25, &self.euler(&s1, &e1, dt));
        self.project_into(&mut s2, 0.25 * dt)?;
        self.check_finite(&s2, 2)?;
        let e2 = self.evaluate(&s2)?;
        worst = worst.max(e2.energy_residual);
        let mut s3 = OceanState::lincomb(1.0 / 3.0, state, 2.0 / 3.0, &self.euler(&s2, &e2, dt));
        self.project_into(&mut s3, 2.0 * dt / 3.0)?;
        self.check_finite(&s3, 3)?;
        s3.t = state.t + dt;
        let e3 = self.evaluate(&s3)?;
        let mut rec = self.budgets_with(&s3, &e3);
        rec.energy_residual = rec.energy_residual.max(worst);
        Ok((s3, rec, e3))
    }

    /// Budget record for a state, diagnosing its tensors.
    pub fn budgets(&self, state: &OceanState) -> Result<BudgetRecord> {
        let e = self.evaluate(state)?;
        Ok(self.budgets_with(state, &e))
    }

    pub fn budgets_with(&self, state: &OceanState, e: &StageEval) -> BudgetRecord {
        budgets(state, &e.closure, self, e.energy_residual)
    }
}

/// Upper bound on the spectral radius of the combined eddy tensor per cell
/// (row-sum bound, never below `max(K_I, K_D)`).
fn tensor_bound(closure: &ClosureState, mix: &crate::eddy::MixingParams) -> f64 {
    let d = closure.kiso.dims();
    let mut m = mix.big_m();
    for c in 0..d.len() {
        let a = closure.kiso.matrix(c);
        let b = closure.kgm.matrix(c);
        for r in 0..3 {
            let row: f64 = (0..3).map(|q| (a[r][q] + b[r][q]).abs()).sum();
            m = m.max(row);
        }
    }
    m
}

/// Tracer variance and kinetic energy budgets at one state.
pub fn budgets(state: &OceanState, closure: &ClosureState, model: &Model, energy_residual: f64) -> BudgetRecord {
    let grid = model.grid();
    let bc = BoundarySpec::neumann();
    let gm = |c: &ScalarField| {
        apply_eddy_operator(&closure.kgm, c, grid, &bc)
            .map(|r| inner(&r, c, grid))
            .unwrap_or(f64::NAN)
    };
    let ke = 0.5 * (inner(&state.v.x, &state.v.x, grid) + inner(&state.v.y, &state.v.y, grid));
    BudgetRecord {
        t: state.t,
        ke,
        theta_l2: l2_norm(&state.theta, grid),
        s_l2: l2_norm(&state.salt, grid),
        theta_min: state.theta.min(),
        theta_max: state.theta.max(),
        s_min: state.salt.min(),
        s_max: state.salt.max(),
        s_mean: mean(&state.salt, grid),
        iso_dissipation: bilinear_form(&closure.kiso, &state.theta, &state.theta, grid)
            + bilinear_form(&closure.kiso, &state.salt, &state.salt, grid),
        gm_variance: gm(&state.theta) + gm(&state.salt),
        robin_term: model.robin(&state.theta),
        energy_residual,
    }
}
