//! Convergence, stability and sampling checks against closed forms.

use std::f64::consts::PI;

use gmr_core::eddy::{apply_eddy_operator, assemble_kiso_full, EddyTensor, MixingParams};
use gmr_core::elliptic::{solve_isoneutral, SolveOptions};
use gmr_core::eos::EosTable;
use gmr_core::grid::{diff, BoundarySpec, FaceCondition, FaceValue, Grid};
use gmr_core::neutral::SlopeField;
use gmr_core::ScalarField;

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Largest error over cells at least a quarter of the box away from every wall.
fn interior_max(err: &ScalarField, grid: &Grid) -> f64 {
    let d = grid.dims;
    let mut m = 0.0_f64;
    for c in 0..d.len() {
        let [i, j, k] = d.ijk(c);
        let inside = |n: usize, q: usize| q >= n / 4 && q < n - n / 4;
        if inside(d.nx, i) && inside(d.ny, j) && inside(d.nz, k) {
            m = m.max(err[c].abs());
        }
    }
    m
}

#[test]
fn centred_difference_is_second_order() {
    let err = |n: usize| {
        let g = Grid::cube(n, 1.0, 1.0).unwrap();
        let f = g.field_from_coords(|x, y, z| (2.0 * x).sin() * (y + 0.3 * z).cos());
        let exact = g.field_from_coords(|x, y, z| 2.0 * (2.0 * x).cos() * (y + 0.3 * z).cos());
        let d = diff(&f, 0, &g, &BoundarySpec::neumann()).unwrap();
        interior_max(&d.zip_map(&exact, |a, b| a - b), &g)
    };
    let (a, b) = (err(16), err(32));
    assert!(order(a, b) > 1.95, "order {}", order(a, b));
}

#[test]
fn rotated_operator_converges_in_the_interior() {
    // Constant tilted tensor: -div(K grad C) = -sum K_ab d_a d_b C.
    let p = MixingParams {
        k_i: 1.0,
        k_d: 0.05,
        kappa: 1.0,
    };
    let (lx, ly) = (0.4, -0.25);
    let err = |n: usize| {
        let g = Grid::cube(n, 1.0, 1.0).unwrap();
        let mut l = SlopeField::zeros(g.dims);
        for c in 0..g.dims.len() {
            l.lx[c] = lx;
            l.ly[c] = ly;
        }
        let k = assemble_kiso_full(&l, &p);
        let m = k.matrix(0);
        let (a, b, q) = (1.3, 0.7, 1.1);
        let u = |x: f64, y: f64, z: f64| (a * x).sin() * (b * y).cos() * (q * z).sin();
        let c = g.field_from_coords(u);
        let exact = g.field_from_coords(|x, y, z| {
            let (sx, cx) = ((a * x).sin(), (a * x).cos());
            let (sy, cy) = ((b * y).sin(), (b * y).cos());
            let (sz, cz) = ((q * z).sin(), (q * z).cos());
            let h = [
                [-a * a * sx * cy * sz, -a * b * cx * sy * sz, a * q * cx * cy * cz],
                [-a * b * cx * sy * sz, -b * b * sx * cy * sz, -b * q * sx * sy * cz],
                [a * q * cx * cy * cz, -b * q * sx * sy * cz, -q * q * sx * cy * sz],
            ];
            -(0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| m[i][j] * h[i][j]).sum::<f64>()
        });
        let out = apply_eddy_operator(&k, &c, &g, &BoundarySpec::neumann()).unwrap();
        interior_max(&out.zip_map(&exact, |x, y| x - y), &g)
    };
    let (e16, e32, e64) = (err(16), err(32), err(64));
    assert!(order(e16, e32) > 1.8, "{e16} {e32}");
    assert!(order(e32, e64) > 1.8, "{e32} {e64}");
}

#[test]
fn robin_solve_stability_constant_is_resolution_independent() {
    // |C| <= C_stab |F|, with C_stab set by the continuous problem.
    let p = MixingParams {
        k_i: 1.0,
        k_d: 0.1,
        kappa: 1.0,
    };
    let ratio = |n: usize| {
        let g = Grid::cube(n, 1.0, 1.0).unwrap();
        let mut l = SlopeField::zeros(g.dims);
        for c in 0..g.dims.len() {
            let [i, _, k] = g.dims.ijk(c);
            l.lx[c] = 0.3 * (PI * g.xc[i]).sin() * (PI * g.zc[k]).cos();
        }
        let k = assemble_kiso_full(&l, &p);
        let bc = BoundarySpec::with_surface(FaceCondition::Robin {
            k: 1.0,
            target: FaceValue::Uniform(0.0),
        });
        let f = g.field_from_coords(|x, y, z| 1.0 + x * y - z * z);
        let opts = SolveOptions {
            rtol: 1e-11,
            ..Default::default()
        };
        let (c, rep) = solve_isoneutral(&k, &f, &g, &bc, &opts).unwrap();
        assert!(rep.converged);
        let n2 = |a: &ScalarField| a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        n2(&c) / n2(&f)
    };
    let r: Vec<f64> = [12, 16, 24].iter().map(|&n| ratio(n)).collect();
    for w in r.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.05, "{r:?}");
    }
}

#[test]
fn eos_sobol_sampling() {
    // 10^3 low-discrepancy points over the admissible box.
    let t = EosTable::builtin();
    let lerp = |[a, b]: [f64; 2], u: f32| a + (b - a) * u as f64;
    let mut worst_fd = 0.0_f64;
    for i in 0..1000u32 {
        let theta = lerp(t.theta_range, sobol_burley::sample(i, 0, 17));
        let s = lerp(t.s_range, sobol_burley::sample(i, 1, 17));
        let p = lerp(t.p_range, sobol_burley::sample(i, 2, 17));
        let rho = t.density_point(theta, s, p);
        assert!(rho >= t.rho_range[0] && rho <= t.rho_range[1], "rho {rho} at {theta} {s} {p}");
        let (a, b) = t.expansion_point(theta, s, p);
        let h = 1e-4;
        let fa = -(t.density_point(theta + h, s, p) - t.density_point(theta - h, s, p)) / (2.0 * h);
        let fb = (t.density_point(theta, s + h, p) - t.density_point(theta, s - h, p)) / (2.0 * h);
        worst_fd = worst_fd.max((fa - a).abs().max((fb - b).abs()) / b.abs());
    }
    assert!(worst_fd < 1e-6, "{worst_fd}");
}
