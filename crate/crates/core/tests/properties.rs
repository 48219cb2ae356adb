use proptest::prelude::*;

use gmr_core::eddy::{
    apply_eddy_operator, assemble_kgm, assemble_kiso_full, kiso_full_entries, kiso_small_entries,
    MixingParams,
};
use gmr_core::eos::EosTable;
use gmr_core::grid::{classify_regions, BoundarySpec, Grid};
use gmr_core::neutral::{clip_small_slope, mollify, RegularizationParams, SlopeField};
use gmr_core::snapshot::Snapshot;
use gmr_core::{Dims, ScalarField};

const N: usize = 6;

fn dims() -> Dims {
    Dims::new(N, N, N)
}

fn field() -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(-1.0f64..1.0, N * N * N).prop_map(|v| ScalarField::from_vec(dims(), v).unwrap())
}

fn slopes(max: f64) -> impl Strategy<Value = SlopeField> {
    (
        prop::collection::vec(-max..max, N * N * N),
        prop::collection::vec(-max..max, N * N * N),
    )
        .prop_map(|(x, y)| {
            let mut l = SlopeField::zeros(dims());
            for c in 0..x.len() {
                l.lx[c] = x[c];
                l.ly[c] = y[c];
                l.active[c] = true;
            }
            l
        })
}

fn mixing() -> impl Strategy<Value = MixingParams> {
    (1e-2f64..1e3, 1e-4f64..0.9, 1e-2f64..1e3).prop_map(|(k_i, delta, kappa)| MixingParams {
        k_i,
        k_d: k_i * delta,
        kappa,
    })
}

fn dot(a: &ScalarField, b: &ScalarField) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn grid() -> Grid {
    Grid::cube(N, 1.0, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clipping_is_idempotent(l in slopes(0.3), r in 0.0f64..0.5) {
        let p = RegularizationParams { eta: 0.1, s0: 1.0, eps0: 0.5, r };
        let once = clip_small_slope(&l, &p);
        prop_assert_eq!(&clip_small_slope(&once, &p), &once);
        for c in 0..dims().len() {
            let (x, y) = once.at(c);
            prop_assert!(x.hypot(y) < r || (x == 0.0 && y == 0.0));
        }
    }

    #[test]
    fn full_tensor_eigenvalues_bracketed(lx in -50.0f64..50.0, ly in -50.0f64..50.0, p in mixing()) {
        let e = kiso_full_entries(lx, ly, &p);
        let m = nalgebra::Matrix3::new(e[0], e[1], e[2], e[1], e[3], e[4], e[2], e[4], e[5]);
        let ev = m.symmetric_eigenvalues();
        let tol = 1e-10 * p.big_m();
        prop_assert!(ev.min() >= p.mu() - tol, "{} < {}", ev.min(), p.mu());
        prop_assert!(ev.max() <= p.big_m() + tol);
        // The neutral normal (lx, ly, -1) is the dianeutral eigenvector.
        let n = nalgebra::Vector3::new(lx, ly, -1.0);
        let kn = m * n;
        prop_assert!((kn - n * p.k_d).norm() <= 1e-10 * p.big_m() * n.norm());
    }

    #[test]
    fn small_tensor_nonnegative_below_clip(a in 0.0f64..std::f64::consts::TAU, s in 0.0f64..0.5, p in mixing()) {
        let (lx, ly) = (s * a.cos(), s * a.sin());
        let e = kiso_small_entries(lx, ly, &p);
        let m = nalgebra::Matrix3::new(e[0], e[1], e[2], e[1], e[3], e[4], e[2], e[4], e[5]);
        prop_assert!(m.symmetric_eigenvalues().min() >= -1e-12 * p.k_i);
    }

    #[test]
    fn gm_operator_is_skew(l in slopes(2.0), c in field(), p in mixing()) {
        let g = grid();
        let k = assemble_kgm(&l, &p);
        let out = apply_eddy_operator(&k, &c, &g, &BoundarySpec::neumann()).unwrap();
        let scale = out.max_abs() * c.max_abs() * dims().len() as f64;
        prop_assert!(dot(&out, &c).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn iso_operator_is_symmetric_and_nonnegative(l in slopes(2.0), u in field(), v in field(), p in mixing()) {
        let g = grid();
        let k = assemble_kiso_full(&l, &p);
        let bc = BoundarySpec::neumann();
        let au = apply_eddy_operator(&k, &u, &g, &bc).unwrap();
        let av = apply_eddy_operator(&k, &v, &g, &bc).unwrap();
        let scale = au.max_abs() * v.max_abs() * dims().len() as f64;
        prop_assert!((dot(&au, &v) - dot(&u, &av)).abs() <= 1e-11 * scale);
        prop_assert!(dot(&au, &u) >= -1e-12 * au.max_abs() * u.max_abs() * dims().len() as f64);
    }

    #[test]
    fn iso_operator_annihilates_constants(l in slopes(2.0), p in mixing(), c0 in -40.0f64..40.0) {
        let g = grid();
        let k = assemble_kiso_full(&l, &p);
        let out = apply_eddy_operator(&k, &ScalarField::constant(dims(), c0), &g, &BoundarySpec::neumann()).unwrap();
        prop_assert!(out.max_abs() <= 1e-12 * p.big_m() * c0.abs().max(1.0));
    }

    #[test]
    fn eos_lipschitz_bound_holds(
        t1 in 0.0f64..1.0, s1 in 0.0f64..1.0, t2 in 0.0f64..1.0, s2 in 0.0f64..1.0, pp in 0.0f64..1.0,
    ) {
        let table = EosTable::builtin();
        let k = table.lipschitz_bound();
        let lerp = |[a, b]: [f64; 2], u: f64| a + (b - a) * u;
        let (ta, sa) = (lerp(table.theta_range, t1), lerp(table.s_range, s1));
        let (tb, sb) = (lerp(table.theta_range, t2), lerp(table.s_range, s2));
        let p = lerp(table.p_range, pp);
        let d = (table.density_point(ta, sa, p) - table.density_point(tb, sb, p)).abs();
        prop_assert!(d <= k * ((ta - tb).abs() + (sa - sb).abs()) + 1e-12);
    }

    #[test]
    fn snapshot_round_trip(a in field(), b in field(), t in any::<f64>().prop_filter("finite", |t| t.is_finite())) {
        let s = Snapshot { dims: dims(), time: t, fields: vec![("a".into(), a), ("b".into(), b)] };
        let mut bytes = Vec::new();
        s.write_to(&mut bytes).unwrap();
        prop_assert_eq!(Snapshot::read_from(&bytes[..]).unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mollifier_is_linear_and_monotone(
        sa in prop::collection::vec(-1.0f64..1.0, 16 * 16 * 16),
        sb in prop::collection::vec(0.0f64..1.0, 16 * 16 * 16),
        alpha in -3.0f64..3.0,
    ) {
        let g = Grid::cube(16, 1.0, 1.0).unwrap();
        let p = RegularizationParams { eta: 0.15, s0: 1.0, eps0: 0.5, r: 0.1 };
        let mask = classify_regions(&g, p.eta).unwrap();
        let a = ScalarField::from_vec(g.dims, sa).unwrap();
        let b = ScalarField::from_vec(g.dims, sb).unwrap();
        let ma = mollify(&a, &g, &p, &mask).unwrap();
        let mb = mollify(&b, &g, &p, &mask).unwrap();
        let combo = a.zip_map(&b, |x, y| alpha * x + y);
        let mc = mollify(&combo, &g, &p, &mask).unwrap();
        for c in 0..g.dims.len() {
            prop_assert!((mc[c] - (alpha * ma[c] + mb[c])).abs() <= 1e-12 * (1.0 + alpha.abs()));
            // Non-negative input gives non-negative output.
            prop_assert!(mb[c] >= 0.0);
        }
    }
}
