//! The five canonical experiment presets.

use std::f64::consts::PI;
use std::path::PathBuf;

use crate::grid::DomainSpec;

use super::config::*;

pub const PRESET_NAMES: [&str; 5] = [
    "subcritical-ball",
    "quantize-radial",
    "quantize-cartesian",
    "coron-annulus-sweep",
    "dirichlet-mode-ball",
];

/// Subcritical volume-constrained flow on the unit ball: converges to a
/// positive stationary solution, cross-checked against the shooting oracle.
fn subcritical_ball() -> ScenarioConfig {
    ScenarioConfig {
        grid: GridSpec::Radial { radius: 1.0, n: 1024 },
        constraint: ConstraintSpec::Volume { c0: None },
        seed: SeedSpec::Moser {
            rho: (-1.0f64).exp(),
            outer: 1.0,
            center: [0.0, 0.0],
            amplitude: 0.8,
            target_dirichlet: None,
            perturb_amplitude: 0.0,
        },
        dt: DtSpec { init: 1e-3, min: 1e-12, max: 0.05 },
        stop: StopSpec { t_max: 50.0, eps_steady: None, blowup_umax: 12.0, max_steps: 2_000_000 },
        snapshots: SnapshotSpec::default(),
        analysis: AnalysisSpec::default(),
        output_dir: PathBuf::from("out/subcritical-ball"),
        rng_seed: 0,
        sweep: None,
    }
}

/// Supercritical radial seed (Moser function scaled to `Λ₀ = 1.3·4π`); the
/// volume flow concentrates at the origin and the analyzer reads the 4π
/// quantum off the snapshots.
fn quantize_radial() -> ScenarioConfig {
    ScenarioConfig {
        grid: GridSpec::Radial { radius: 1.0, n: 4096 },
        constraint: ConstraintSpec::Volume { c0: None },
        seed: SeedSpec::Moser {
            rho: (-2.0f64).exp(),
            outer: 1.0,
            center: [0.0, 0.0],
            amplitude: 1.0,
            target_dirichlet: Some(1.3 * 4.0 * PI),
            perturb_amplitude: 0.0,
        },
        dt: DtSpec { init: 1e-4, min: 1e-12, max: 0.02 },
        stop: StopSpec { t_max: 150.0, eps_steady: None, blowup_umax: 6.0, max_steps: 2_000_000 },
        snapshots: SnapshotSpec { every_steps: None, every_umax_increase: Some(0.25) },
        analysis: AnalysisSpec::default(),
        output_dir: PathBuf::from("out/quantize-radial"),
        rng_seed: 0,
        sweep: None,
    }
}

/// The same supercritical experiment on a masked Cartesian disc, at coarser
/// desk-scale resolution.
fn quantize_cartesian() -> ScenarioConfig {
    ScenarioConfig {
        grid: GridSpec::Cartesian {
            h: 1.0 / 96.0,
            domain: DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 },
        },
        constraint: ConstraintSpec::Volume { c0: None },
        seed: SeedSpec::Moser {
            rho: (-2.0f64).exp(),
            outer: 1.0,
            center: [0.0, 0.0],
            amplitude: 1.0,
            target_dirichlet: Some(1.3 * 4.0 * PI),
            perturb_amplitude: 0.0,
        },
        dt: DtSpec { init: 1e-4, min: 1e-12, max: 0.01 },
        stop: StopSpec { t_max: 50.0, eps_steady: None, blowup_umax: 3.2, max_steps: 2_000_000 },
        snapshots: SnapshotSpec { every_steps: None, every_umax_increase: Some(0.25) },
        analysis: AnalysisSpec::default(),
        output_dir: PathBuf::from("out/quantize-cartesian"),
        rng_seed: 0,
        sweep: None,
    }
}

/// 8×8 (s, angle) lattice of Coron-family seeds on the annulus; each run
/// tracks the Dirichlet-density center of mass, the mechanism behind the
/// supercritical existence argument on non-contractible domains.
fn coron_annulus_sweep() -> ScenarioConfig {
    let s_values: Vec<f64> = (1..=8).map(|k| 0.125 * k as f64).collect();
    let angles: Vec<f64> = (0..8).map(|k| 2.0 * PI * k as f64 / 8.0).collect();
    ScenarioConfig {
        grid: GridSpec::Cartesian {
            h: 1.0 / 48.0,
            domain: DomainSpec::Annulus { outer: 1.0, inner: 0.05 },
        },
        constraint: ConstraintSpec::Volume { c0: None },
        seed: SeedSpec::Coron {
            s: 0.5,
            angle: 0.0,
            plateau_radius: 0.25,
            rho: 0.25 / std::f64::consts::E,
            cutoff_radius: 0.06,
            target_energy: 1.0,
            perturb_amplitude: 0.0,
        },
        dt: DtSpec { init: 1e-3, min: 1e-12, max: 0.02 },
        stop: StopSpec { t_max: 3.0, eps_steady: None, blowup_umax: 12.0, max_steps: 2_000_000 },
        snapshots: SnapshotSpec { every_steps: None, every_umax_increase: None },
        analysis: AnalysisSpec::default(),
        output_dir: PathBuf::from("out/coron-annulus-sweep"),
        rng_seed: 0,
        sweep: Some(SweepSpec {
            s_values,
            angles,
            s0: 0.5,
            transient_time: 0.5,
            com_floor_frac: 0.1,
        }),
    }
}

/// Dirichlet-constrained flow on the ball: the Moser-Trudinger energy climbs
/// monotonically to the constrained maximizer.
fn dirichlet_mode_ball() -> ScenarioConfig {
    ScenarioConfig {
        grid: GridSpec::Radial { radius: 1.0, n: 1024 },
        constraint: ConstraintSpec::Dirichlet { lambda0: None },
        seed: SeedSpec::Moser {
            rho: (-1.0f64).exp(),
            outer: 1.0,
            center: [0.0, 0.0],
            amplitude: 0.75,
            target_dirichlet: None,
            perturb_amplitude: 0.0,
        },
        dt: DtSpec { init: 1e-3, min: 1e-12, max: 0.05 },
        stop: StopSpec { t_max: 50.0, eps_steady: None, blowup_umax: 12.0, max_steps: 2_000_000 },
        snapshots: SnapshotSpec::default(),
        analysis: AnalysisSpec::default(),
        output_dir: PathBuf::from("out/dirichlet-mode-ball"),
        rng_seed: 0,
        sweep: None,
    }
}

/// All named presets, in their canonical order.
pub fn presets() -> Vec<(&'static str, ScenarioConfig)> {
    vec![
        ("subcritical-ball", subcritical_ball()),
        ("quantize-radial", quantize_radial()),
        ("quantize-cartesian", quantize_cartesian()),
        ("coron-annulus-sweep", coron_annulus_sweep()),
        ("dirichlet-mode-ball", dirichlet_mode_ball()),
    ]
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    presets().into_iter().find(|(n, _)| *n == name).map(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_the_five_canonical_names() {
        let names: Vec<&str> = presets().iter().map(|(n, _)| *n).collect();
        assert_eq!(names, PRESET_NAMES);
        assert!(preset("quantize-radial").is_some());
        assert!(preset("no-such-preset").is_none());
    }

    #[test]
    fn presets_validate() {
        for (name, cfg) in presets() {
            cfg.validate().unwrap_or_else(|e| panic!("preset {name}: {e}"));
        }
    }
}
