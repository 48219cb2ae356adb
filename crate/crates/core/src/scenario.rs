//! Scenario assembly and batch execution: initial state, run loop, output
//! files and the full vs small-slope closure comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::SimConfig;
use crate::dynamics::{BoundaryData, BudgetRecord, Model, OceanState};
use crate::eddy::{kiso_full_entries, kiso_small_entries, Closure, ClosureSetup};
use crate::elliptic::{project, SolveOptions};
use crate::error::{GmrError, Result};
use crate::field::VectorField;
use crate::grid::{l2_norm, Grid};
use crate::snapshot::Snapshot;

/// A compiled configuration: the model plus its initial state.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SimConfig,
    pub model: Model,
    pub initial: OceanState,
}

impl Scenario {
    pub fn build(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let grid = Grid::new(&config.grid)?;
        let table = config.eos_table()?;
        let setup = ClosureSetup::new(
            grid.clone(),
            config.regularization.params(),
            config.physics.mixing(),
            config.regularization.closure,
            table,
        )?;
        let b = &config.boundary;
        let surf = |spec: &crate::config::SurfaceSpec| {
            grid.surface_from_coords(|x, y| spec.eval(x, y, grid.lx, grid.ly))
        };
        let bd = BoundaryData {
            tau_x: surf(&b.tau.x),
            tau_y: surf(&b.tau.y),
            theta_star: surf(&b.theta_star),
            k_theta: b.k_theta,
            f: config.physics.f,
            re1: config.physics.re1,
            re2: config.physics.re2,
        };
        let model = Model::new(setup, bd, config.run.dt_max)?;
        let initial = initial_state(config, &grid)?;
        Ok(Self {
            config: config.clone(),
            model,
            initial,
        })
    }
}

/// Stratified tracers with a basin-scale perturbation, seeded noise and an
/// optional projected initial flow.
pub fn initial_state(config: &SimConfig, grid: &Grid) -> Result<OceanState> {
    use std::f64::consts::PI;
    let i = &config.initial;
    let (lx, ly, h) = (grid.lx, grid.ly, grid.h);
    let mut theta = grid.field_from_coords(|x, y, z| {
        let s = (z + h) / h;
        i.theta_bottom
            + (i.theta_surface - i.theta_bottom) * s
            + i.theta_perturbation * (PI * x / lx).cos() * (PI * y / ly).cos()
    });
    let salt = grid.field_from_coords(|x, _, z| {
        let s = (z + h) / h;
        i.salt_bottom + (i.salt_surface - i.salt_bottom) * s + i.salt_perturbation * (PI * x / lx).cos()
    });
    if i.theta_noise != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.run.seed);
        for x in theta.as_mut_slice() {
            *x += i.theta_noise * rng.gen_range(-1.0..1.0);
        }
    }
    let mut v = VectorField::zeros(grid.dims);
    if i.velocity != 0.0 {
        let u0 = i.velocity;
        v.x = grid.field_from_coords(|x, y, z| u0 * (PI * x / lx).sin() * (PI * y / ly).cos() * (1.0 + z / h));
        v.y = grid.field_from_coords(|x, y, _| -u0 * (PI * x / lx).cos() * (PI * y / ly).sin());
        let opts = SolveOptions {
            rtol: 1e-13,
            maxit: 4000,
            ..Default::default()
        };
        project(&mut v, grid, 1.0, &opts)?;
    }
    Ok(OceanState {
        v,
        theta,
        salt,
        t: 0.0,
    })
}

pub fn snapshot_of(state: &OceanState) -> Snapshot {
    Snapshot {
        dims: state.theta.dims(),
        time: state.t,
        fields: vec![
            ("u".into(), state.v.x.clone()),
            ("v".into(), state.v.y.clone()),
            ("theta".into(), state.theta.clone()),
            ("S".into(), state.salt.clone()),
        ],
    }
}

pub fn budgets_csv_header() -> String {
    BudgetRecord::HEADER.join(",")
}

pub fn budgets_csv_row(r: &BudgetRecord) -> String {
    r.values().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn write_budgets(path: &Path, records: &[BudgetRecord]) -> Result<()> {
    let mut s = budgets_csv_header();
    s.push('\n');
    for r in records {
        s.push_str(&budgets_csv_row(r));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Long-format plot data: every budget series, then a zonal section
/// (`j = ny / 2`) of each final field.
pub fn plot_data_csv(records: &[BudgetRecord], state: &OceanState, grid: &Grid) -> String {
    let mut s = String::from("kind,name,t,x,z,value\n");
    for r in records {
        for (name, v) in BudgetRecord::HEADER.iter().zip(r.values()).skip(1) {
            let _ = writeln!(s, "budget,{name},{},,,{v}", r.t);
        }
    }
    let j = grid.dims.ny / 2;
    for (name, f) in [("u", &state.v.x), ("v", &state.v.y), ("theta", &state.theta), ("S", &state.salt)] {
        for k in 0..grid.dims.nz {
            for i in 0..grid.dims.nx {
                let _ = writeln!(s, "section,{name},{},{},{},{}", state.t, grid.xc[i], grid.zc[k], f.get(i, j, k));
            }
        }
    }
    s
}

/// Result of a batch run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub records: Vec<BudgetRecord>,
    pub final_state: OceanState,
    pub steps_done: usize,
    /// Failure message when the integrator aborted.
    pub aborted: Option<String>,
    pub out_dir: PathBuf,
}

/// An integration that stopped early, with everything up to the last valid
/// step.
#[derive(Debug)]
pub struct Aborted {
    pub error: GmrError,
    pub records: Vec<BudgetRecord>,
    pub state: OceanState,
    pub step: usize,
}

fn aborted(error: GmrError, records: Vec<BudgetRecord>, state: OceanState, step: usize) -> Box<Aborted> {
    Box::new(Aborted {
        error,
        records,
        state,
        step,
    })
}

/// Step a scenario without touching the file system.
pub fn integrate(
    scenario: &Scenario,
    steps: usize,
    mut on_step: impl FnMut(usize, &OceanState, &BudgetRecord) -> Result<()>,
) -> std::result::Result<(Vec<BudgetRecord>, OceanState), Box<Aborted>> {
    let model = &scenario.model;
    let mut state = scenario.initial.clone();
    let mut records = Vec::with_capacity(steps + 1);
    let mut eval = match model.evaluate(&state) {
        Ok(e) => e,
        Err(e) => return Err(aborted(e, records, state, 0)),
    };
    let first = model.budgets_with(&state, &eval);
    if let Err(e) = on_step(0, &state, &first) {
        return Err(aborted(e, records, state, 0));
    }
    records.push(first);
    for n in 1..=steps {
        let dt = model.stable_dt(&state, &eval);
        match model.step_from(&state, eval, dt) {
            Ok((s, rec, e)) => {
                if let Err(err) = on_step(n, &s, &rec) {
                    return Err(aborted(err, records, s, n));
                }
                records.push(rec);
                state = s;
                eval = e;
            }
            Err(err) => return Err(aborted(err, records, state, n - 1)),
        }
    }
    Ok((records, state))
}

/// Run a configuration, writing `effective_config.json`, `budgets.csv`,
/// snapshots and `plot_data.csv` to `out_dir`. On an integrator abort the
/// last valid state is saved and `failure.json` describes the error.
pub fn run(config: &SimConfig) -> Result<RunSummary> {
    let scenario = Scenario::build(config)?;
    let out = PathBuf::from(&config.run.out_dir);
    fs::create_dir_all(&out)?;
    fs::write(out.join("effective_config.json"), config.to_json())?;
    let every = config.run.snapshot_every;
    let snap_path = |n: usize| out.join(format!("snapshot_{n:06}.gmr"));
    let result = integrate(&scenario, config.run.steps, |n, s, _| {
        if n == 0 || (every > 0 && n % every == 0) {
            snapshot_of(s).save(snap_path(n))?;
        }
        Ok(())
    });
    let grid = scenario.model.grid();
    match result {
        Ok((records, state)) => {
            write_budgets(&out.join("budgets.csv"), &records)?;
            fs::write(out.join("plot_data.csv"), plot_data_csv(&records, &state, grid))?;
            Ok(RunSummary {
                steps_done: records.len() - 1,
                records,
                final_state: state,
                aborted: None,
                out_dir: out,
            })
        }
        Err(a) => {
            let Aborted {
                error: err,
                records,
                state,
                step: n,
            } = *a;
            write_budgets(&out.join("budgets.csv"), &records)?;
            let last = out.join(format!("snapshot_{n:06}_last_valid.gmr"));
            snapshot_of(&state).save(&last)?;
            let report = serde_json::json!({
                "status": "aborted",
                "error": err.to_string(),
                "last_valid_step": n,
                "t": state.t,
                "last_snapshot": last.file_name().map(|s| s.to_string_lossy().into_owned()),
            });
            fs::write(out.join("failure.json"), serde_json::to_string_pretty(&report)?)?;
            Ok(RunSummary {
                steps_done: n,
                records,
                final_state: state,
                aborted: Some(err.to_string()),
                out_dir: out,
            })
        }
    }
}

/// One row of `closure_diff.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosureDiff {
    pub t: f64,
    pub theta_diff_l2: f64,
    pub s_diff_l2: f64,
    pub max_slope: f64,
    /// Largest entrywise difference between the full and small-slope tensors
    /// assembled from the same slope field.
    pub tensor_gap: f64,
    /// Largest per-cell analytic bound `K_I (|L|^2 + delta |L|)` (or
    /// `K_I (|L|^2 + |L|)` where the small-slope closure clips).
    pub gap_bound: f64,
    /// Largest per-cell ratio of gap to bound; at most 1.
    pub gap_ratio: f64,
    /// Largest deviation of the computed gap from the entrywise closed form.
    pub formula_error: f64,
}

impl ClosureDiff {
    pub const HEADER: &'static str =
        "t,theta_diff_l2,s_diff_l2,max_slope,tensor_gap,gap_bound,gap_ratio,formula_error";

    pub fn row(&self) -> String {
        [
            self.t,
            self.theta_diff_l2,
            self.s_diff_l2,
            self.max_slope,
            self.tensor_gap,
            self.gap_bound,
            self.gap_ratio,
            self.formula_error,
        ]
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
    }
}

/// Closed-form entries of `K_full(L) - K_small(L)` for an unclipped slope.
pub fn analytic_gap(lx: f64, ly: f64, k_i: f64, delta: f64) -> [f64; 6] {
    let l2 = lx * lx + ly * ly;
    let f = k_i / (1.0 + l2);
    [
        f * (delta - 1.0) * lx * lx,
        f * (delta - 1.0) * lx * ly,
        -f * lx * (delta + l2),
        f * (delta - 1.0) * ly * ly,
        -f * ly * (delta + l2),
        -f * (delta + l2) * l2,
    ]
}

fn tensor_gap_row(t: f64, a: &OceanState, b: &OceanState, model_full: &Model) -> Result<ClosureDiff> {
    let grid = model_full.grid();
    let setup = &model_full.setup;
    let mix = &setup.mix;
    let delta = mix.delta();
    let l = setup.diagnose(&a.theta, &a.salt)?.slope;
    let (mut gap, mut bound, mut ratio, mut ferr) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for c in 0..grid.dims.len() {
        let (x, y) = l.at(c);
        let mag = x.hypot(y);
        let full = kiso_full_entries(x, y, mix);
        let clipped = mag >= setup.reg.r;
        let small = if clipped {
            kiso_small_entries(0.0, 0.0, mix)
        } else {
            kiso_small_entries(x, y, mix)
        };
        let cell_gap = (0..6).map(|e| (full[e] - small[e]).abs()).fold(0.0, f64::max);
        let cell_bound = if clipped {
            mix.k_i * (mag * mag + mag)
        } else {
            mix.k_i * (mag * mag + delta * mag)
        };
        if !clipped {
            let closed = analytic_gap(x, y, mix.k_i, delta);
            for e in 0..6 {
                ferr = ferr.max((full[e] - small[e] - closed[e]).abs());
            }
        }
        gap = gap.max(cell_gap);
        bound = bound.max(cell_bound);
        if cell_bound > 0.0 {
            ratio = ratio.max(cell_gap / cell_bound);
        } else if cell_gap > 0.0 {
            ratio = f64::INFINITY;
        }
    }
    Ok(ClosureDiff {
        t,
        theta_diff_l2: l2_norm(&a.theta.zip_map(&b.theta, |p, q| p - q), grid),
        s_diff_l2: l2_norm(&a.salt.zip_map(&b.salt, |p, q| p - q), grid),
        max_slope: l.max_magnitude(),
        tensor_gap: gap,
        gap_bound: bound,
        gap_ratio: ratio,
        formula_error: ferr,
    })
}

#[derive(Clone, Debug)]
pub struct ComparisonSummary {
    pub full: Vec<BudgetRecord>,
    pub small: Vec<BudgetRecord>,
    pub diffs: Vec<ClosureDiff>,
    pub final_full: OceanState,
    pub final_small: OceanState,
}

/// Run `full` and `small` scenarios in lockstep from their own initial
/// states with a shared step size.
pub fn compare_scenarios(full: &Scenario, small: &Scenario, steps: usize) -> Result<ComparisonSummary> {
    let (mf, ms) = (&full.model, &small.model);
    let (mut a, mut b) = (full.initial.clone(), small.initial.clone());
    let mut ea = mf.evaluate(&a)?;
    let mut eb = ms.evaluate(&b)?;
    let mut rf = vec![mf.budgets_with(&a, &ea)];
    let mut rs = vec![ms.budgets_with(&b, &eb)];
    let mut diffs = vec![tensor_gap_row(0.0, &a, &b, mf)?];
    for _ in 0..steps {
        let dt = mf.stable_dt(&a, &ea).min(ms.stable_dt(&b, &eb));
        let (na, ra, nea) = mf.step_from(&a, ea, dt)?;
        let (nb, rb, neb) = ms.step_from(&b, eb, dt)?;
        a = na;
        b = nb;
        ea = nea;
        eb = neb;
        rf.push(ra);
        rs.push(rb);
        diffs.push(tensor_gap_row(a.t, &a, &b, mf)?);
    }
    Ok(ComparisonSummary {
        full: rf,
        small: rs,
        diffs,
        final_full: a,
        final_small: b,
    })
}

/// Same scenario under both closures; writes `full/budgets.csv`,
/// `small/budgets.csv` and `closure_diff.csv` under `out_dir`.
pub fn compare_closures(config: &SimConfig) -> Result<ComparisonSummary> {
    let mut cf = config.clone();
    cf.regularization.closure = Closure::Full;
    let mut cs = config.clone();
    cs.regularization.closure = Closure::SmallSlope;
    let full = Scenario::build(&cf)?;
    let small = Scenario::build(&cs)?;
    let summary = compare_scenarios(&full, &small, config.run.steps)?;
    let out = PathBuf::from(&config.run.out_dir);
    fs::create_dir_all(out.join("full"))?;
    fs::create_dir_all(out.join("small"))?;
    fs::write(out.join("effective_config.json"), config.to_json())?;
    write_budgets(&out.join("full").join("budgets.csv"), &summary.full)?;
    write_budgets(&out.join("small").join("budgets.csv"), &summary.small)?;
    let mut s = String::from(ClosureDiff::HEADER);
    s.push('\n');
    for d in &summary.diffs {
        s.push_str(&d.row());
        s.push('\n');
    }
    fs::write(out.join("closure_diff.csv"), s)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> SimConfig {
        SimConfig::default()
            .with_overrides(&[
                "grid.nx=16",
                "grid.ny=16",
                "grid.nz=16",
                "run.steps=3",
                &format!("run.out_dir={}", dir.display()),
            ])
            .unwrap()
    }

    #[test]
    fn run_writes_outputs_and_is_deterministic() {
        let d = tempfile::tempdir().unwrap();
        let mut c = small_config(d.path());
        c.run.snapshot_every = 2;
        c.initial.theta_noise = 0.01;
        c.run.seed = 9;
        let s1 = run(&c).unwrap();
        assert!(s1.aborted.is_none());
        let b1 = fs::read_to_string(d.path().join("budgets.csv")).unwrap();
        assert_eq!(b1.lines().next().unwrap(), budgets_csv_header());
        assert_eq!(b1.lines().count(), 5);
        assert!(d.path().join("snapshot_000000.gmr").exists());
        assert!(d.path().join("snapshot_000002.gmr").exists());
        let echoed = SimConfig::load(d.path().join("effective_config.json")).unwrap();
        assert_eq!(echoed, c);
        run(&c).unwrap();
        assert_eq!(b1, fs::read_to_string(d.path().join("budgets.csv")).unwrap());
    }

    #[test]
    fn zero_steps_writes_initial_snapshot_only() {
        let d = tempfile::tempdir().unwrap();
        let mut c = small_config(d.path());
        c.run.steps = 0;
        let s = run(&c).unwrap();
        assert_eq!(s.steps_done, 0);
        let snaps: Vec<_> = fs::read_dir(d.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "gmr"))
            .collect();
        assert_eq!(snaps.len(), 1);
    }

    #[test]
    fn admissibility_failure_is_reported_with_last_state() {
        let d = tempfile::tempdir().unwrap();
        let mut c = small_config(d.path());
        c.initial.theta_surface = 40.0;
        let s = run(&c).unwrap();
        assert!(s.aborted.unwrap().contains("theta"));
        assert!(d.path().join("failure.json").exists());
        assert!(d.path().join("snapshot_000000_last_valid.gmr").exists());
    }

    #[test]
    fn analytic_gap_matches_entry_difference() {
        let mix = crate::eddy::MixingParams {
            k_i: 3.0,
            k_d: 0.03,
            kappa: 1.0,
        };
        let (x, y) = (0.03, -0.04);
        let f = kiso_full_entries(x, y, &mix);
        let s = kiso_small_entries(x, y, &mix);
        let g = analytic_gap(x, y, mix.k_i, mix.delta());
        for e in 0..6 {
            assert!((f[e] - s[e] - g[e]).abs() < 1e-15);
        }
    }
}
