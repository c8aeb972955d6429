//! Scenario configuration: JSON schema, defaults, validation, and dotted-path
//! overrides.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::{build_masked_grid, build_radial_grid, DomainSpec, Grid};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    Radial { radius: f64, n: usize },
    Cartesian { h: f64, domain: DomainSpec },
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        match self {
            GridSpec::Radial { radius, n } => Ok(Arc::new(build_radial_grid(*radius, *n)?)),
            GridSpec::Cartesian { h, domain } => Ok(Arc::new(build_masked_grid(domain, *h)?)),
        }
    }
}

/// Constraint mode; a missing target means "take it from the seed".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintSpec {
    Volume {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c0: Option<f64>,
    },
    Dirichlet {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda0: Option<f64>,
    },
}

fn default_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeedSpec {
    Moser {
        rho: f64,
        outer: f64,
        #[serde(default)]
        center: [f64; 2],
        /// Plain scale factor on the unit-energy Moser function.
        #[serde(default = "default_one")]
        amplitude: f64,
        /// Scale the seed to this exact discrete Dirichlet energy instead of
        /// applying `amplitude` (the two are mutually exclusive).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_dirichlet: Option<f64>,
        /// Multiplicative noise amplitude applied node-wise before
        /// normalization, driven by `rng_seed`.
        #[serde(default)]
        perturb_amplitude: f64,
    },
    Coron {
        s: f64,
        /// Anchor angle; the anchor is `3R·(cos, sin)` so `|x₀| = 3R` holds
        /// by construction.
        angle: f64,
        plateau_radius: f64,
        rho: f64,
        cutoff_radius: f64,
        /// Moser-Trudinger energy the member is normalized to.
        target_energy: f64,
        #[serde(default)]
        perturb_amplitude: f64,
    },
    Snapshot {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtSpec {
    pub init: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for DtSpec {
    fn default() -> Self {
        DtSpec { init: 1e-3, min: 1e-12, max: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    pub t_max: f64,
    /// Steady threshold; `null` means `1e-8·Λ₀(u₀)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_steady: Option<f64>,
    pub blowup_umax: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    2_000_000
}

impl Default for StopSpec {
    fn default() -> Self {
        StopSpec { t_max: 50.0, eps_steady: None, blowup_umax: 12.0, max_steps: default_max_steps() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSpec {
    /// Snapshot every k accepted steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every_steps: Option<usize>,
    /// Snapshot whenever `u_max` has grown by this much since the last one;
    /// amplitude, not time, parameterizes blow-up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every_umax_increase: Option<f64>,
}

impl Default for SnapshotSpec {
    fn default() -> Self {
        SnapshotSpec { every_steps: None, every_umax_increase: Some(0.25) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeckSpec {
    pub s_over_rk: f64,
    pub t_over_rk: f64,
    pub shells: usize,
}

impl Default for NeckSpec {
    fn default() -> Self {
        NeckSpec { s_over_rk: 4.0, t_over_rk: 16.0, shells: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    pub profile_box: f64,
    pub local_energy_box: f64,
    pub tol_frac: f64,
    pub nu_peak: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neck: Option<NeckSpec>,
    /// Dump each top bubble's profile samples as CSV next to analysis.json.
    #[serde(default)]
    pub dump_profiles: bool,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            profile_box: 4.0,
            local_energy_box: 20.0,
            tol_frac: 0.1,
            nu_peak: 1.0,
            neck: Some(NeckSpec::default()),
            dump_profiles: false,
        }
    }
}

impl AnalysisSpec {
    pub fn to_config(&self) -> crate::bubbles::AnalysisConfig {
        crate::bubbles::AnalysisConfig {
            profile_box: self.profile_box,
            local_energy_box: self.local_energy_box,
            tol_frac: self.tol_frac,
            nu_peak: self.nu_peak,
            ..Default::default()
        }
    }
}

/// Lattice of Coron-family flow runs plus the center-of-mass acceptance rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub s_values: Vec<f64>,
    pub angles: Vec<f64>,
    /// Rows with `s ≤ s0` must keep the center of mass away from the origin.
    pub s0: f64,
    /// Initial time span excluded from the center-of-mass floor check.
    pub transient_time: f64,
    /// The floor is this fraction of the annulus outer radius.
    pub com_floor_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    pub constraint: ConstraintSpec,
    pub seed: SeedSpec,
    #[serde(default)]
    pub dt: DtSpec,
    #[serde(default)]
    pub stop: StopSpec,
    #[serde(default)]
    pub snapshots: SnapshotSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path)?;
        ScenarioConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization is infallible")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(Error::Config(format!("{path}: {msg}")));
        match &self.grid {
            GridSpec::Radial { radius, n } => {
                if !(*radius > 0.0) {
                    return bad("grid.radius", format!("must be positive, got {radius}"));
                }
                if *n < 16 {
                    return bad("grid.n", format!("must be at least 16, got {n}"));
                }
            }
            GridSpec::Cartesian { h, .. } => {
                if !(*h > 0.0) {
                    return bad("grid.h", format!("must be positive, got {h}"));
                }
            }
        }
        match &self.constraint {
            ConstraintSpec::Volume { c0: Some(c0) } if !(*c0 > 0.0) => {
                return bad("constraint.c0", format!("must be positive, got {c0}"));
            }
            ConstraintSpec::Dirichlet { lambda0: Some(l) } if !(*l > 0.0) => {
                return bad("constraint.lambda0", format!("must be positive, got {l}"));
            }
            _ => {}
        }
        match &self.seed {
            SeedSpec::Moser { rho, outer, amplitude, target_dirichlet, .. } => {
                if !(*rho > 0.0 && rho < outer) {
                    return bad("seed.rho", format!("needs 0 < rho < outer, got {rho} vs {outer}"));
                }
                if target_dirichlet.is_some() && *amplitude != 1.0 {
                    return bad(
                        "seed.amplitude",
                        "amplitude and target_dirichlet are mutually exclusive".into(),
                    );
                }
                if let Some(d) = target_dirichlet {
                    if !(*d > 0.0) {
                        return bad("seed.target_dirichlet", format!("must be positive, got {d}"));
                    }
                }
            }
            SeedSpec::Coron { s, plateau_radius, rho, cutoff_radius, target_energy, .. } => {
                if !(*s > 0.0 && *s <= 1.0) {
                    return bad("seed.s", format!("must be in (0, 1], got {s}"));
                }
                if !(*rho > 0.0 && rho < plateau_radius) {
                    return bad("seed.rho", "needs 0 < rho < plateau_radius".into());
                }
                if !(*cutoff_radius > 0.0 && *cutoff_radius < 0.5 * plateau_radius) {
                    return bad("seed.cutoff_radius", "needs 0 < cutoff < plateau_radius/2".into());
                }
                if !(*target_energy > 0.0) {
                    return bad("seed.target_energy", "must be positive".into());
                }
            }
            SeedSpec::Snapshot { .. } => {}
        }
        if !(self.dt.min > 0.0 && self.dt.init >= self.dt.min && self.dt.max >= self.dt.init) {
            return bad("dt", format!("needs 0 < min <= init <= max, got {:?}", self.dt));
        }
        if !(self.stop.t_max >= 0.0) {
            return bad("stop.t_max", format!("must be non-negative, got {}", self.stop.t_max));
        }
        if !(self.stop.blowup_umax > 0.0) {
            return bad("stop.blowup_umax", "must be positive".into());
        }
        if let Some(e) = self.stop.eps_steady {
            if !(e > 0.0) {
                return bad("stop.eps_steady", format!("must be positive, got {e}"));
            }
        }
        if !(self.analysis.profile_box > 0.0
            && self.analysis.local_energy_box > 0.0
            && self.analysis.tol_frac > 0.0
            && self.analysis.nu_peak > 0.0)
        {
            return bad("analysis", "all analysis parameters must be positive".into());
        }
        if let Some(neck) = &self.analysis.neck {
            if !(neck.s_over_rk > 0.0 && neck.t_over_rk > neck.s_over_rk && neck.shells >= 4) {
                return bad("analysis.neck", "needs 0 < s < t and at least 4 shells".into());
            }
        }
        if let Some(sweep) = &self.sweep {
            if !matches!(self.seed, SeedSpec::Coron { .. }) {
                return bad("sweep", "sweeps require a coron seed".into());
            }
            if sweep.s_values.is_empty() || sweep.angles.is_empty() {
                return bad("sweep", "s_values and angles must be non-empty".into());
            }
            if sweep.s_values.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
                return bad("sweep.s_values", "every s must be in (0, 1]".into());
            }
            if !(sweep.com_floor_frac > 0.0 && sweep.transient_time >= 0.0) {
                return bad("sweep", "needs com_floor_frac > 0 and transient_time >= 0".into());
            }
        }
        Ok(())
    }

    /// Apply a `key=value` override with a dotted path into the JSON tree,
    /// e.g. `grid.n=512` or `stop.t_max=10`.
    pub fn with_override(&self, spec: &str) -> Result<ScenarioConfig> {
        let (path, raw) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
        let mut tree = serde_json::to_value(self)?;
        let parts: Vec<&str> = path.split('.').collect();
        let (last, parents) = parts.split_last().unwrap();
        let parent = if parents.is_empty() {
            &mut tree
        } else {
            let ptr = format!("/{}", parents.join("/"));
            tree.pointer_mut(&ptr)
                .ok_or_else(|| Error::Config(format!("override path `{path}`: no such location")))?
        };
        let value: serde_json::Value = raw
            .parse()
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        match parent {
            serde_json::Value::Object(map) => {
                map.insert(last.to_string(), value);
            }
            serde_json::Value::Array(arr) => {
                let idx: usize = last
                    .parse()
                    .map_err(|_| Error::Config(format!("override path `{path}`: `{last}` is not an index")))?;
                let slot = arr
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("override path `{path}`: index {idx} out of range")))?;
                *slot = value;
            }
            _ => {
                return Err(Error::Config(format!(
                    "override path `{path}` does not address an object or array"
                )))
            }
        }
        let cfg: ScenarioConfig = serde_json::from_value(tree)
            .map_err(|e| Error::Config(format!("override `{spec}` produced an invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::presets;

    #[test]
    fn configs_round_trip_bit_identically() {
        for (name, cfg) in presets() {
            let json = cfg.to_json();
            let back = ScenarioConfig::from_json(&json).unwrap();
            assert_eq!(cfg, back, "preset {name}");
            // and a second serialization is byte-identical
            assert_eq!(json, back.to_json(), "preset {name}");
        }
    }

    #[test]
    fn malformed_config_reports_position() {
        let text = "{\n  \"grid\": {\"kind\": \"radial\", \"radius\": 1.0, \"n\": }\n}";
        let err = ScenarioConfig::from_json(text).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = presets()[0].1.clone();
        cfg.stop.blowup_umax = -1.0;
        assert!(cfg.validate().is_err());

        let cfg = presets()[0].1.clone();
        assert!(cfg.with_override("grid.n=8").is_err());
        let over = cfg.with_override("grid.n=512").unwrap();
        assert_eq!(over.grid, GridSpec::Radial { radius: 1.0, n: 512 });
        let over = cfg.with_override("stop.t_max=5.5").unwrap();
        assert_eq!(over.stop.t_max, 5.5);
        assert!(cfg.with_override("nonsense.path=1").is_err());
    }
}
