//! Polynomial equation of state in specific-volume form,
//! `v(theta, S, p) = sum c_ijk S^i theta^j p^k`, `rho = 1 / v`, evaluated at the
//! static (depth-only) pressure.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GmrError, Result};
use crate::field::ScalarField;
use crate::grid::Grid;

/// Name under which the shipped table can be referenced from a config.
pub const BUILTIN_TABLE: &str = "builtin:default";
const DEFAULT_TABLE_JSON: &str = include_str!("../data/eos_default.json");

/// Polynomial degree caps (salinity, temperature, pressure).
pub const MAX_DEGREE: [u32; 3] = [7, 6, 5];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EosCoefficient {
    /// salinity power
    pub i: u32,
    /// temperature power
    pub j: u32,
    /// pressure power
    pub k: u32,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EosTable {
    pub coeffs: Vec<EosCoefficient>,
    pub theta_range: [f64; 2],
    pub s_range: [f64; 2],
    pub p_range: [f64; 2],
    pub rho_range: [f64; 2],
    pub rho0: f64,
    pub g: f64,
}

/// Samples per axis used for the admissibility check on load.
const LOAD_SAMPLES: usize = 17;
/// Samples per axis for the Lipschitz estimate (32^3 points minimum).
const LIPSCHITZ_SAMPLES: usize = 33;
pub const LIPSCHITZ_SAFETY: f64 = 2.0;

impl EosTable {
    pub fn builtin() -> Self {
        serde_json::from_str(DEFAULT_TABLE_JSON).expect("shipped EOS table parses")
    }

    /// Resolve a config reference: a file path or [`BUILTIN_TABLE`].
    pub fn resolve(reference: &str) -> Result<Self> {
        if reference == BUILTIN_TABLE {
            let t = Self::builtin();
            t.validate()?;
            Ok(t)
        } else {
            Self::load(reference)
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("EOS table serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            GmrError::Config(format!(
                "cannot read EOS table {}: {e}",
                path.as_ref().display()
            ))
        })?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Structural checks plus a sampling check that `rho` stays in `rho_range`
    /// on the admissible box.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let [t0, t1] = self.theta_range;
        if !(t0 < 0.0 && t1 > 0.0) {
            bad.push(format!("theta_range [{t0}, {t1}] must be [-K1, K2] with K1, K2 > 0"));
        }
        for (name, [a, b]) in [
            ("s_range", self.s_range),
            ("p_range", self.p_range),
            ("rho_range", self.rho_range),
        ] {
            if !(a > 0.0 && b > a) {
                bad.push(format!("{name} [{a}, {b}] must satisfy 0 < lo < hi"));
            }
        }
        if !(self.rho0 > 0.0) {
            bad.push(format!("rho0 must be positive, got {}", self.rho0));
        }
        if !(self.g > 0.0) {
            bad.push(format!("g must be positive, got {}", self.g));
        }
        if self.coeffs.is_empty() {
            bad.push("coeffs must not be empty".into());
        }
        for c in &self.coeffs {
            if c.i > MAX_DEGREE[0] || c.j > MAX_DEGREE[1] || c.k > MAX_DEGREE[2] {
                bad.push(format!("coefficient ({}, {}, {}) exceeds degree caps", c.i, c.j, c.k));
            }
            if !c.c.is_finite() {
                bad.push(format!("coefficient ({}, {}, {}) not finite", c.i, c.j, c.k));
            }
        }
        if !bad.is_empty() {
            return Err(GmrError::ConfigList(bad));
        }
        let [r0, r1] = self.rho_range;
        for (theta, s, p) in self.box_samples(LOAD_SAMPLES) {
            let v = self.specific_volume(theta, s, p);
            if !(v > 0.0) {
                return Err(GmrError::Config(format!(
                    "specific volume {v:e} <= 0 at (theta={theta}, S={s}, p={p})"
                )));
            }
            let rho = 1.0 / v;
            if rho < r0 || rho > r1 {
                return Err(GmrError::Config(format!(
                    "density {rho} outside rho_range [{r0}, {r1}] at (theta={theta}, S={s}, p={p})"
                )));
            }
        }
        Ok(())
    }

    fn box_samples(&self, n: usize) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let lin = move |[a, b]: [f64; 2], m: usize| a + (b - a) * m as f64 / (n - 1) as f64;
        (0..n).flat_map(move |a| {
            (0..n).flat_map(move |b| {
                (0..n).map(move |c| {
                    (
                        lin(self.theta_range, a),
                        lin(self.s_range, b),
                        lin(self.p_range, c),
                    )
                })
            })
        })
    }

    #[inline]
    pub fn specific_volume(&self, theta: f64, s: f64, p: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.c * s.powi(c.i as i32) * theta.powi(c.j as i32) * p.powi(c.k as i32))
            .sum()
    }

    /// `(v, dv/dtheta, dv/dS)`
    #[inline]
    pub fn specific_volume_grad(&self, theta: f64, s: f64, p: f64) -> (f64, f64, f64) {
        let mut v = 0.0;
        let mut vt = 0.0;
        let mut vs = 0.0;
        for c in &self.coeffs {
            let pk = p.powi(c.k as i32);
            let si = s.powi(c.i as i32);
            let tj = theta.powi(c.j as i32);
            v += c.c * si * tj * pk;
            if c.j > 0 {
                vt += c.c * c.j as f64 * si * theta.powi(c.j as i32 - 1) * pk;
            }
            if c.i > 0 {
                vs += c.c * c.i as f64 * s.powi(c.i as i32 - 1) * tj * pk;
            }
        }
        (v, vt, vs)
    }

    #[inline]
    pub fn density_point(&self, theta: f64, s: f64, p: f64) -> f64 {
        1.0 / self.specific_volume(theta, s, p)
    }

    /// `(a, b) = (-d rho/d theta, d rho/dS)` at a point.
    #[inline]
    pub fn expansion_point(&self, theta: f64, s: f64, p: f64) -> (f64, f64) {
        let (v, vt, vs) = self.specific_volume_grad(theta, s, p);
        let inv2 = 1.0 / (v * v);
        (vt * inv2, -vs * inv2)
    }

    /// True when the specific volume is affine in `(theta, S)` and independent of
    /// pressure.
    pub fn is_linear(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.c == 0.0 || (c.k == 0 && c.i + c.j <= 1))
    }

    /// Raw sampled supremum of `max(|d rho/d theta|, |d rho/dS|)` over the
    /// admissible box.
    pub fn lipschitz_sup(&self) -> f64 {
        self.box_samples(LIPSCHITZ_SAMPLES)
            .map(|(t, s, p)| {
                let (a, b) = self.expansion_point(t, s, p);
                a.abs().max(b.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Constant `K` with `|rho1 - rho2| <= K (|theta1 - theta2| + |S1 - S2|)`.
    pub fn lipschitz_bound(&self) -> f64 {
        LIPSCHITZ_SAFETY * self.lipschitz_sup()
    }
}

/// Free-function form of [`EosTable::lipschitz_bound`].
pub fn lipschitz_bound(table: &EosTable) -> f64 {
    table.lipschitz_bound()
}

/// Temperature, salinity and the static pressure they are evaluated at.
#[derive(Clone, Debug)]
pub struct ThermoState<'a> {
    pub theta: &'a ScalarField,
    pub salt: &'a ScalarField,
    pub p_st: &'a ScalarField,
}

/// `p_st(z) = -g rho0 z` at every cell centre.
pub fn static_pressure(grid: &Grid, table: &EosTable) -> ScalarField {
    ScalarField::from_fn(grid.dims, |_, _, k| -table.g * table.rho0 * grid.zc[k])
}

fn check_range(
    field: &'static str,
    values: &ScalarField,
    [lo, hi]: [f64; 2],
) -> Result<()> {
    for (c, &x) in values.as_slice().iter().enumerate() {
        if !(x >= lo && x <= hi) {
            return Err(GmrError::Admissibility {
                field,
                cell: values.dims().ijk(c),
                value: x,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

pub fn check_admissible(state: &ThermoState<'_>, table: &EosTable) -> Result<()> {
    let d = state.theta.dims();
    state.salt.check_dims(d, "salinity")?;
    state.p_st.check_dims(d, "static pressure")?;
    check_range("theta", state.theta, table.theta_range)?;
    check_range("S", state.salt, table.s_range)?;
    check_range("p_st", state.p_st, table.p_range)
}

/// Pointwise `rho = 1 / v`. Out-of-range inputs are reported, never clamped.
pub fn density(state: &ThermoState<'_>, table: &EosTable) -> Result<ScalarField> {
    check_admissible(state, table)?;
    let d = state.theta.dims();
    let mut rho = ScalarField::zeros(d);
    let (t, s, p) = (
        state.theta.as_slice(),
        state.salt.as_slice(),
        state.p_st.as_slice(),
    );
    for (c, r) in rho.as_mut_slice().iter_mut().enumerate() {
        let v = table.specific_volume(t[c], s[c], p[c]);
        if !(v > 0.0) {
            return Err(GmrError::EosDomain {
                cell: d.ijk(c),
                value: v,
            });
        }
        *r = 1.0 / v;
    }
    check_range("rho", &rho, table.rho_range)?;
    Ok(rho)
}

/// Thermal expansion `a = -d rho/d theta` and saline contraction `b = d rho/dS`.
pub fn expansion_contraction(
    state: &ThermoState<'_>,
    table: &EosTable,
) -> Result<(ScalarField, ScalarField)> {
    check_admissible(state, table)?;
    let d = state.theta.dims();
    let mut a = ScalarField::zeros(d);
    let mut b = ScalarField::zeros(d);
    let (t, s, p) = (
        state.theta.as_slice(),
        state.salt.as_slice(),
        state.p_st.as_slice(),
    );
    for c in 0..d.len() {
        let (v, vt, vs) = table.specific_volume_grad(t[c], s[c], p[c]);
        if !(v > 0.0) {
            return Err(GmrError::EosDomain {
                cell: d.ijk(c),
                value: v,
            });
        }
        let inv2 = 1.0 / (v * v);
        a[c] = vt * inv2;
        b[c] = -vs * inv2;
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Dims;
    use approx::assert_relative_eq;

    fn table(coeffs: &[(u32, u32, u32, f64)]) -> EosTable {
        EosTable {
            coeffs: coeffs
                .iter()
                .map(|&(i, j, k, c)| EosCoefficient { i, j, k, c })
                .collect(),
            theta_range: [-5.0, 5.0],
            s_range: [1.0, 2.0],
            p_range: [0.0, 10.0],
            rho_range: [1e-6, 1e6],
            rho0: 1000.0,
            g: 10.0,
        }
    }

    #[test]
    fn static_pressure_formula() {
        let g = Grid::cube(4, 1.0, 2.0).unwrap();
        let t = table(&[(0, 0, 0, 1e-3)]);
        let p = static_pressure(&g, &t);
        // zc[1] = -2 + 1.5 * 0.5 = -1.25
        assert_relative_eq!(p.get(0, 0, 1), 12500.0, epsilon = 1e-9);
        for k in 1..4 {
            assert!(p.get(0, 0, k) < p.get(0, 0, k - 1));
        }
        assert!(p.min() > 0.0);
    }

    #[test]
    fn density_examples() {
        let d = Dims::new(2, 2, 2);
        let t = ScalarField::constant(d, 2.0);
        let s = ScalarField::constant(d, 1.5);
        let p = ScalarField::constant(d, 0.0);
        let st = ThermoState {
            theta: &t,
            salt: &s,
            p_st: &p,
        };
        let rho = density(&st, &table(&[(0, 0, 0, 1e-3)])).unwrap();
        assert!(rho.as_slice().iter().all(|&r| (r - 1000.0).abs() < 1e-9));

        let mut tab = table(&[(0, 0, 0, 1.0), (0, 1, 0, 0.1)]);
        tab.s_range = [0.0, 1.0];
        let s0 = ScalarField::zeros(d);
        let st = ThermoState {
            theta: &t,
            salt: &s0,
            p_st: &p,
        };
        let rho = density(&st, &tab).unwrap();
        assert_relative_eq!(rho[0], 1.0 / 1.2, epsilon = 1e-15);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let d = Dims::new(2, 1, 1);
        let mut t = ScalarField::constant(d, 2.0);
        t[1] = 50.0;
        let s = ScalarField::constant(d, 1.5);
        let p = ScalarField::constant(d, 1.0);
        let st = ThermoState {
            theta: &t,
            salt: &s,
            p_st: &p,
        };
        match density(&st, &table(&[(0, 0, 0, 1e-3)])) {
            Err(GmrError::Admissibility { field, cell, .. }) => {
                assert_eq!(field, "theta");
                assert_eq!(cell, [1, 0, 0]);
            }
            other => panic!("expected admissibility error, got {other:?}"),
        }
    }

    #[test]
    fn negative_volume_names_cell() {
        let d = Dims::new(1, 1, 2);
        let t = ScalarField::from_vec(d, vec![0.0, 3.0]).unwrap();
        let s = ScalarField::constant(d, 1.5);
        let p = ScalarField::constant(d, 1.0);
        let st = ThermoState {
            theta: &t,
            salt: &s,
            p_st: &p,
        };
        match density(&st, &table(&[(0, 0, 0, 1.0), (0, 1, 0, -0.5)])) {
            Err(GmrError::EosDomain { cell, .. }) => assert_eq!(cell, [0, 0, 1]),
            other => panic!("expected EOS domain error, got {other:?}"),
        }
    }

    #[test]
    fn expansion_examples() {
        let d = Dims::new(1, 1, 1);
        let t = ScalarField::zeros(d);
        let s = ScalarField::constant(d, 1.5);
        let p = ScalarField::zeros(d);
        let st = ThermoState {
            theta: &t,
            salt: &s,
            p_st: &p,
        };
        let (a, b) = expansion_contraction(&st, &table(&[(0, 0, 0, 1.0), (0, 1, 0, 0.1)])).unwrap();
        assert_relative_eq!(a[0], 0.1, epsilon = 1e-15);
        assert_eq!(b[0], 0.0);
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(table(&[(0, 0, 0, 1e-3)]).lipschitz_bound(), 0.0);
        let mut t = table(&[(0, 0, 0, 1.0), (0, 1, 0, 0.1)]);
        t.theta_range = [0.0, 1.0];
        // sup |d rho / d theta| = 0.1 / v_min^2 with v_min = 1 at theta = 0.
        assert_relative_eq!(t.lipschitz_sup(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(t.lipschitz_bound(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn builtin_table_is_valid_and_roundtrips() {
        let t = EosTable::resolve(BUILTIN_TABLE).unwrap();
        let again = EosTable::from_json(&t.to_json()).unwrap();
        assert_eq!(t, again);
        assert!(!t.is_linear());
    }

    #[test]
    fn bad_tables_rejected() {
        let mut t = EosTable::builtin();
        t.theta_range = [1.0, 5.0];
        assert!(t.validate().is_err());
        let mut t = EosTable::builtin();
        t.rho_range = [1020.0, 1025.0];
        assert!(matches!(t.validate(), Err(GmrError::Config(_))));
    }
}
