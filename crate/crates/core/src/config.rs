//! Scenario configuration: JSON blocks, defaults, dotted-path overrides and
//! all-at-once validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::eddy::{Closure, MixingParams};
use crate::eos::{EosTable, BUILTIN_TABLE};
use crate::error::{GmrError, Result};
use crate::grid::GridSpec;
use crate::neutral::RegularizationParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    #[serde(rename = "K_I")]
    pub k_i: f64,
    #[serde(rename = "K_D")]
    pub k_d: f64,
    pub kappa: f64,
    #[serde(rename = "Re1")]
    pub re1: f64,
    #[serde(rename = "Re2")]
    pub re2: f64,
    pub f: f64,
    pub g: f64,
    pub rho0: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            k_i: 1e3,
            k_d: 0.1,
            kappa: 1e3,
            re1: 0.01,
            re2: 0.1,
            f: 10.0,
            g: 9.81,
            rho0: 1025.0,
        }
    }
}

impl PhysicsConfig {
    pub fn mixing(&self) -> MixingParams {
        MixingParams {
            k_i: self.k_i,
            k_d: self.k_d,
            kappa: self.kappa,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizationConfig {
    pub eta: f64,
    pub s0: f64,
    pub eps0: f64,
    pub r: f64,
    pub closure: Closure,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self {
            eta: 0.15,
            s0: 1.0,
            eps0: 0.5,
            r: 0.1,
            closure: Closure::Full,
        }
    }
}

impl RegularizationConfig {
    pub fn params(&self) -> RegularizationParams {
        RegularizationParams {
            eta: self.eta,
            s0: self.s0,
            eps0: self.eps0,
            r: self.r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EosConfig {
    /// Path to a coefficient table, or `builtin:default`.
    pub table: String,
}

impl Default for EosConfig {
    fn default() -> Self {
        Self {
            table: BUILTIN_TABLE.into(),
        }
    }
}

/// A horizontal field: a constant, or `mean + amplitude * cos(pi * s / L)`
/// along `axis` (`"x"` or `"y"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurfaceSpec {
    Constant(f64),
    Cosine {
        mean: f64,
        amplitude: f64,
        axis: String,
    },
}

impl SurfaceSpec {
    pub fn eval(&self, x: f64, y: f64, lx: f64, ly: f64) -> f64 {
        match self {
            SurfaceSpec::Constant(v) => *v,
            SurfaceSpec::Cosine {
                mean,
                amplitude,
                axis,
            } => {
                let s = if axis == "x" { x / lx } else { y / ly };
                mean + amplitude * (std::f64::consts::PI * s).cos()
            }
        }
    }

    fn check(&self, name: &str, bad: &mut Vec<String>) {
        match self {
            SurfaceSpec::Constant(v) if !v.is_finite() => bad.push(format!("{name} must be finite")),
            SurfaceSpec::Cosine {
                mean,
                amplitude,
                axis,
            } => {
                if !(mean.is_finite() && amplitude.is_finite()) {
                    bad.push(format!("{name} must be finite"));
                }
                if axis != "x" && axis != "y" {
                    bad.push(format!("{name}.axis must be \"x\" or \"y\", got {axis:?}"));
                }
            }
            _ => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauConfig {
    pub x: SurfaceSpec,
    pub y: SurfaceSpec,
}

impl Default for TauConfig {
    fn default() -> Self {
        Self {
            x: SurfaceSpec::Constant(0.0),
            y: SurfaceSpec::Constant(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub tau: TauConfig,
    pub theta_star: SurfaceSpec,
    pub k_theta: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            tau: TauConfig::default(),
            theta_star: SurfaceSpec::Constant(20.0),
            k_theta: 0.0,
        }
    }
}

/// Initial state: linear stratification plus a smooth basin-scale
/// perturbation, optional seeded noise and an optional initial flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub theta_surface: f64,
    pub theta_bottom: f64,
    pub salt_surface: f64,
    pub salt_bottom: f64,
    pub theta_perturbation: f64,
    pub salt_perturbation: f64,
    /// Amplitude of uniform random noise added to theta.
    pub theta_noise: f64,
    /// Amplitude of the initial (projected) horizontal flow.
    pub velocity: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            theta_surface: 25.0,
            theta_bottom: 5.0,
            salt_surface: 34.0,
            salt_bottom: 35.0,
            theta_perturbation: 1.0,
            salt_perturbation: 0.1,
            theta_noise: 0.0,
            velocity: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dt_max: f64,
    pub steps: usize,
    /// Snapshot cadence in steps; 0 writes the initial snapshot only.
    pub snapshot_every: usize,
    pub seed: u64,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt_max: 1.0,
            steps: 100,
            snapshot_every: 0,
            seed: 0,
            out_dir: "out".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub physics: PhysicsConfig,
    pub regularization: RegularizationConfig,
    pub eos: EosConfig,
    pub boundary: BoundaryConfig,
    pub initial: InitialConfig,
    pub run: RunConfig,
}

/// Parse the right-hand side of `--set key=value`: JSON if it parses, a bare
/// string otherwise.
fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl SimConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| GmrError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let s = std::fs::read_to_string(p)
            .map_err(|e| GmrError::Config(format!("cannot read config {}: {e}", p.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Apply `a.b.c=value` overrides in order (last one wins).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| GmrError::Argument(format!("override {o:?} is not key=value")))?;
            let mut node = &mut v;
            let parts: Vec<&str> = key.trim().split('.').collect();
            for (n, part) in parts.iter().enumerate() {
                let obj = node.as_object_mut().ok_or_else(|| {
                    GmrError::Config(format!("override {key:?}: {part:?} is not inside a block"))
                })?;
                if !obj.contains_key(*part) {
                    return Err(GmrError::Config(format!("override {key:?}: unknown field {part:?}")));
                }
                if n + 1 == parts.len() {
                    obj.insert((*part).to_string(), parse_override_value(raw.trim()));
                    break;
                }
                node = obj.get_mut(*part).expect("checked above");
            }
        }
        serde_json::from_value(v).map_err(|e| GmrError::Config(format!("override: {e}")))
    }

    /// Every problem in the configuration, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let g = &self.grid;
        for (name, n) in [("grid.nx", g.nx), ("grid.ny", g.ny), ("grid.nz", g.nz)] {
            if n == 0 {
                bad.push(format!("{name} must be positive"));
            }
        }
        for (name, l) in [("grid.Lx", g.lx), ("grid.Ly", g.ly), ("grid.h", g.h)] {
            if !(l > 0.0 && l.is_finite()) {
                bad.push(format!("{name} must be positive, got {l}"));
            }
        }
        let ph = &self.physics;
        if let Err(GmrError::ConfigList(v)) = ph.mixing().validate() {
            bad.extend(v);
        }
        for (name, x) in [("physics.Re1", ph.re1), ("physics.Re2", ph.re2), ("physics.g", ph.g), ("physics.rho0", ph.rho0)] {
            if !(x > 0.0 && x.is_finite()) {
                bad.push(format!("{name} must be positive, got {x}"));
            }
        }
        if !ph.f.is_finite() {
            bad.push("physics.f must be finite".into());
        }
        let reg = self.regularization.params();
        if let Err(GmrError::ConfigList(v)) = reg.validate() {
            bad.extend(v);
        }
        if bad.is_empty() {
            // Band and mollifier feasibility need a valid grid.
            let lmin = g.lx.min(g.ly).min(g.h);
            if !(2.0 * reg.eta < lmin / 2.0) {
                bad.push(format!(
                    "regularization.eta = {} too large: need 2 eta < min(Lx, Ly, h) / 2 = {}",
                    reg.eta,
                    lmin / 2.0
                ));
            }
            let hmax = (g.lx / g.nx as f64).max(g.ly / g.ny as f64).max(g.h / g.nz as f64);
            if !(0.5 * reg.eta > hmax) {
                bad.push(format!(
                    "regularization.eta = {} unresolved: eta / 2 must exceed the largest spacing {hmax}",
                    reg.eta
                ));
            }
        }
        match EosTable::resolve(&self.eos.table) {
            Ok(_) => {}
            Err(e) => bad.push(format!("eos.table {:?}: {e}", self.eos.table)),
        }
        let b = &self.boundary;
        b.tau.x.check("boundary.tau.x", &mut bad);
        b.tau.y.check("boundary.tau.y", &mut bad);
        b.theta_star.check("boundary.theta_star", &mut bad);
        if !(b.k_theta >= 0.0 && b.k_theta.is_finite()) {
            bad.push(format!("boundary.k_theta must be >= 0, got {}", b.k_theta));
        }
        let i = &self.initial;
        for (name, x) in [
            ("initial.theta_surface", i.theta_surface),
            ("initial.theta_bottom", i.theta_bottom),
            ("initial.salt_surface", i.salt_surface),
            ("initial.salt_bottom", i.salt_bottom),
            ("initial.theta_perturbation", i.theta_perturbation),
            ("initial.salt_perturbation", i.salt_perturbation),
            ("initial.theta_noise", i.theta_noise),
            ("initial.velocity", i.velocity),
        ] {
            if !x.is_finite() {
                bad.push(format!("{name} must be finite"));
            }
        }
        if !(self.run.dt_max > 0.0) {
            bad.push(format!("run.dt_max must be positive, got {}", self.run.dt_max));
        }
        if self.run.out_dir.is_empty() {
            bad.push("run.out_dir must not be empty".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GmrError::ConfigList(bad))
        }
    }

    /// The resolved EOS table with `g` and `rho0` taken from the physics block.
    pub fn eos_table(&self) -> Result<EosTable> {
        let mut t = EosTable::resolve(&self.eos.table)?;
        t.g = self.physics.g;
        t.rho0 = self.physics.rho0;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = SimConfig::default();
        c.validate().unwrap();
        let back = SimConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        // Partial documents fill in defaults.
        let p = SimConfig::from_json(r#"{"grid": {"nx": 16, "ny": 16, "nz": 16, "Lx": 1, "Ly": 1, "h": 1}}"#).unwrap();
        assert_eq!(p.physics, PhysicsConfig::default());
    }

    #[test]
    fn overrides_last_wins() {
        let c = SimConfig::default()
            .with_overrides(&[
                "physics.K_I=5",
                "regularization.closure=small-slope",
                "physics.K_I=7",
                "eos.table=builtin:default",
                "boundary.theta_star={\"mean\": 10, \"amplitude\": 2, \"axis\": \"y\"}",
            ])
            .unwrap();
        assert_eq!(c.physics.k_i, 7.0);
        assert_eq!(c.regularization.closure, Closure::SmallSlope);
        assert!(matches!(c.boundary.theta_star, SurfaceSpec::Cosine { .. }));
        assert!(SimConfig::default().with_overrides(&["physics.nope=1"]).is_err());
        assert!(SimConfig::default().with_overrides(&["physics.K_I"]).is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let c = SimConfig::default()
            .with_overrides(&["physics.K_D=-1", "grid.Lx=0", "eos.table=/no/such/table.json", "run.dt_max=0"])
            .unwrap();
        match c.validate() {
            Err(GmrError::ConfigList(v)) => {
                let all = v.join("\n");
                for key in ["physics.K_D", "grid.Lx", "eos.table", "run.dt_max"] {
                    assert!(all.contains(key), "{key} missing from {all}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(SimConfig::from_json(r#"{"physics": {"kI": 1}}"#).is_err());
    }
}
