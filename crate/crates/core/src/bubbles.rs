//! Concentration analysis of a field snapshot: peak detection, bubble scale,
//! rescaled-profile comparison against the Liouville profile, local and neck
//! energies, and the 4π-quantization verdicts.
//!
//! At a concentration point `x_k` with height `u_peak`, the scale `r_k` is
//! fixed by `λ r_k² u_peak² e^{u_peak²} = 4`, and the rescaled profile
//! `η_k(x) = u_peak·(u(x_k + r_k x) − u_peak)` converges to
//! `η₀ = log(1/(1+|x|²))`, the solution of `−Δη₀ = 4e^{2η₀}` with total mass
//! `∫4e^{2η₀} = 4π`. The energy density `e = λu²e^{u²}` carries the
//! concentrating Dirichlet energy in integer multiples of 4π.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::grid::{build_radial_grid, Field, GridKind};
use crate::{Error, Result};

/// Tunables of the snapshot analyzer.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AnalysisConfig {
    /// Radius `L` of the reference box the rescaled profile is sampled on.
    pub profile_box: f64,
    /// Local energy is integrated over `B_{L·r_k}` with this `L`.
    pub local_energy_box: f64,
    /// Quantization tolerance as a fraction of 4π.
    pub tol_frac: f64,
    /// Peak-extraction threshold on `λ·inf_j|x−x_j|²·u²e^{u²}`.
    pub nu_peak: f64,
    pub max_peaks: usize,
    /// Peaks closer than this multiple of the larger scale are merged.
    pub merge_factor: f64,
    /// Profile sample density per unit length of the reference box.
    pub samples_per_unit: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            profile_box: 4.0,
            local_energy_box: 20.0,
            tol_frac: 0.1,
            nu_peak: 1.0,
            max_peaks: 8,
            merge_factor: 5.0,
            samples_per_unit: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Peak {
    pub index: usize,
    pub position: [f64; 2],
    pub value: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Greedy peak extraction: the global maximum first, then repeatedly the
/// maximizer of `λ·inf_j|x−x_j|²·u²e^{u²}` while that score exceeds
/// `nu_peak`, followed by a scale-based merge of near-coincident peaks.
pub fn detect_peaks(u: &Field, lambda: f64, cfg: &AnalysisConfig) -> Vec<Peak> {
    let g = u.grid();
    let vals = u.values();
    if lambda <= 0.0 {
        return Vec::new();
    }
    let (i0, v0) = u.argmax();
    if v0 <= 0.0 {
        return Vec::new();
    }
    let mut peaks = vec![Peak { index: i0, position: g.coords()[i0], value: v0 }];

    while peaks.len() < cfg.max_peaks {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, &v) in vals.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            let d2 = peaks
                .iter()
                .map(|p| {
                    let d = dist(g.coords()[i], p.position);
                    d * d
                })
                .fold(f64::INFINITY, f64::min);
            let usq = v * v;
            let score = lambda * d2 * usq * usq.exp();
            if score > best.1 {
                best = (i, score);
            }
        }
        if best.1 <= cfg.nu_peak {
            break;
        }
        let i = best.0;
        peaks.push(Peak { index: i, position: g.coords()[i], value: vals[i] });
    }

    // merge candidates closer than merge_factor times the larger scale
    loop {
        let scales: Vec<f64> = peaks
            .iter()
            .map(|p| bubble_scale(p.value, lambda).unwrap_or(f64::INFINITY))
            .collect();
        let mut drop = None;
        'outer: for a in 0..peaks.len() {
            for b in a + 1..peaks.len() {
                let cutoff = cfg.merge_factor * scales[a].max(scales[b]);
                if dist(peaks[a].position, peaks[b].position) < cutoff {
                    drop = Some(if peaks[a].value >= peaks[b].value { b } else { a });
                    break 'outer;
                }
            }
        }
        match drop {
            Some(i) => {
                peaks.remove(i);
            }
            None => break,
        }
    }
    peaks
}

/// Bubble scale from `λ r_k² u_peak² e^{u_peak²} = 4`.
pub fn bubble_scale(u_peak: f64, lambda: f64) -> Result<f64> {
    if !(u_peak > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bubble scale needs positive peak and lambda, got u_peak = {u_peak}, lambda = {lambda}"
        )));
    }
    Ok(2.0 / (lambda.sqrt() * u_peak * (0.5 * u_peak * u_peak).exp()))
}

/// The limiting profile `η₀(x) = log(1/(1+|x|²))`.
pub fn liouville_profile(x: [f64; 2]) -> f64 {
    -(x[0] * x[0] + x[1] * x[1]).ln_1p()
}

/// `∫_{B_L} 4e^{2η₀} = 4πL²/(1+L²)`; the limit `L → ∞` carries the full
/// quantum 4π.
pub fn liouville_mass(l: f64) -> f64 {
    if l.is_infinite() {
        4.0 * PI
    } else {
        4.0 * PI * l * l / (1.0 + l * l)
    }
}

/// Rescaled profile samples on the reference box `B_L`.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileSamples {
    /// Sample points in bubble units (radial grids sample along the ray).
    pub points: Vec<[f64; 2]>,
    /// `η_k` at the sample points.
    pub values: Vec<f64>,
    pub box_radius: f64,
}

/// Sample `η_k(x) = u_peak·(u(x_k + r_k x) − u_peak)` on a fixed lattice over
/// `B_L`. Errors out when the bubble is not resolved (`r_k < 4h`).
pub fn rescale_profile(
    u: &Field,
    center: [f64; 2],
    r_k: f64,
    l_box: f64,
    samples_per_unit: usize,
) -> Result<ProfileSamples> {
    let g = u.grid();
    let h = g.spacing();
    if r_k < 4.0 * h {
        return Err(Error::UnderResolved { r_k, min_scale: 4.0 * h });
    }
    if samples_per_unit == 0 || !(l_box > 0.0) {
        return Err(Error::InvalidParameter("profile needs samples_per_unit > 0 and L > 0".into()));
    }
    let u_peak = u.interpolate(center);
    let step = 1.0 / samples_per_unit as f64;
    let mut points = Vec::new();
    let mut values = Vec::new();
    match g.kind() {
        GridKind::Radial => {
            let radius = g.radius().unwrap();
            let m = (l_box * samples_per_unit as f64).round() as usize;
            for j in 0..=m {
                let rho = j as f64 * step;
                let r = center[0] + r_k * rho;
                if r > radius {
                    break;
                }
                points.push([rho, 0.0]);
                values.push(u_peak * (u.interpolate([r, 0.0]) - u_peak));
            }
        }
        GridKind::Cartesian => {
            let domain = g.domain().unwrap();
            let m = (l_box * samples_per_unit as f64).round() as i64;
            for jy in -m..=m {
                for jx in -m..=m {
                    let xi = [jx as f64 * step, jy as f64 * step];
                    if xi[0] * xi[0] + xi[1] * xi[1] > l_box * l_box {
                        continue;
                    }
                    let p = [center[0] + r_k * xi[0], center[1] + r_k * xi[1]];
                    if !domain.contains(p[0], p[1]) {
                        continue;
                    }
                    points.push(xi);
                    values.push(u_peak * (u.interpolate(p) - u_peak));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Degenerate("profile box does not intersect the domain".into()));
    }
    Ok(ProfileSamples { points, values, box_radius: l_box })
}

/// Sup-norm distance of sampled `η_k` to `η₀` over the sample points.
pub fn profile_error(p: &ProfileSamples) -> f64 {
    p.points
        .iter()
        .zip(&p.values)
        .fold(0.0f64, |m, (x, v)| m.max((v - liouville_profile(*x)).abs()))
}

/// `Λ(r) = ∫_{B_r(center)} λu²e^{u²}`, with exactly additive ball weights.
pub fn local_energy(u: &Field, lambda: f64, center: [f64; 2], radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("local energy needs r > 0, got {radius}")));
    }
    let g = u.grid();
    let mut acc = 0.0;
    for (i, &v) in u.values().iter().enumerate() {
        let w = g.weight_in_ball(i, center, radius);
        if w > 0.0 {
            let usq = v * v;
            acc += w * usq * usq.exp();
        }
    }
    Ok(lambda * acc)
}

/// Annular energies and flux densities over geometric shells.
#[derive(Clone, Debug, Serialize)]
pub struct NeckScan {
    /// Shell boundaries, geometrically spaced from `s` to `t` (m+1 radii).
    pub radii: Vec<f64>,
    /// `N(t_i, t_{i+1})`, one per shell.
    pub annular_energies: Vec<f64>,
    /// `P(t_i) = t_i·∂N/∂t`, one per shell boundary.
    pub flux_densities: Vec<f64>,
    /// Least-squares slope of `w_k(r) = u_peak(u(r) − u_peak)` against
    /// `log(1/r)`; the Liouville tail gives values just under 2.
    pub decay_exponent: f64,
}

/// Scan the neck `[s, t]` around a bubble with `m ≥ 4` geometric shells.
pub fn neck_scan(
    u: &Field,
    lambda: f64,
    center: [f64; 2],
    s: f64,
    t: f64,
    shells: usize,
) -> Result<NeckScan> {
    if !(s > 0.0 && t > s) {
        return Err(Error::InvalidParameter(format!("neck needs 0 < s < t, got [{s}, {t}]")));
    }
    if shells < 4 {
        return Err(Error::InvalidParameter(format!("neck needs at least 4 shells, got {shells}")));
    }
    let g = u.grid();
    let q = (t / s).powf(1.0 / shells as f64);
    let radii: Vec<f64> = (0..=shells).map(|i| s * q.powi(i as i32)).collect();

    // cumulative ball energies; differences are exactly additive
    let ball: Vec<f64> = radii
        .iter()
        .map(|&r| local_energy(u, lambda, center, r))
        .collect::<Result<_>>()?;
    let annular_energies: Vec<f64> = ball.windows(2).map(|w| w[1] - w[0]).collect();

    // verify no shell is geometrically degenerate (zero quadrature measure)
    if g.kind() == GridKind::Cartesian {
        for (i, w) in radii.windows(2).enumerate() {
            let measure: f64 = (0..g.node_count())
                .map(|k| g.weight_in_ball(k, center, w[1]) - g.weight_in_ball(k, center, w[0]))
                .sum();
            if measure <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "neck shell {i} [{}, {}] holds no quadrature nodes",
                    w[0], w[1]
                )));
            }
        }
    }

    let density = |v: f64| -> f64 {
        let usq = v * v;
        usq * usq.exp()
    };
    let flux_densities: Vec<f64> = match g.kind() {
        GridKind::Radial => radii
            .iter()
            .map(|&r| 2.0 * PI * lambda * r * r * density(u.interpolate([center[0] + r, 0.0])))
            .collect(),
        GridKind::Cartesian => {
            let sq = q.sqrt();
            radii
                .iter()
                .map(|&r| {
                    let lo = local_energy(u, lambda, center, r / sq)?;
                    let hi = local_energy(u, lambda, center, r * sq)?;
                    Ok((hi - lo) / q.ln())
                })
                .collect::<Result<_>>()?
        }
    };

    // fit w_k against −log r over the shell boundaries (intercept absorbed)
    let u_peak = u.interpolate(center);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &r in &radii {
        let uval = match g.kind() {
            GridKind::Radial => u.interpolate([center[0] + r, 0.0]),
            GridKind::Cartesian => {
                // shell-averaged u over nodes near radius r
                let sq = q.sqrt();
                let mut acc = 0.0;
                let mut cnt = 0usize;
                for (i, &v) in u.values().iter().enumerate() {
                    let d = dist(g.coords()[i], center);
                    if d >= r / sq && d < r * sq {
                        acc += v;
                        cnt += 1;
                    }
                }
                if cnt == 0 {
                    continue;
                }
                acc / cnt as f64
            }
        };
        xs.push(-r.ln());
        ys.push(u_peak * (uval - u_peak));
    }
    let decay_exponent = slope_with_intercept(&xs, &ys);

    Ok(NeckScan { radii, annular_energies, flux_densities, decay_exponent })
}

fn slope_with_intercept(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantizationVerdict {
    Quantized,
    NonConcentrating,
    Anomalous,
}

/// Nearest quantization level `l = round(Λ/4π)`, its deviation
/// `|Λ − 4πl|`, and the verdict at the given fractional tolerance.
pub fn quantize(local_energy: f64, tol_frac: f64) -> (u32, f64, QuantizationVerdict) {
    let quantum = 4.0 * PI;
    let l = (local_energy / quantum).round().max(0.0) as u32;
    let deviation = (local_energy - quantum * l as f64).abs();
    let verdict = if l == 0 {
        QuantizationVerdict::NonConcentrating
    } else if deviation <= tol_frac * quantum {
        QuantizationVerdict::Quantized
    } else {
        QuantizationVerdict::Anomalous
    };
    (l, deviation, verdict)
}

/// Empirical constant of the pointwise bound: the max over nodes of
/// `λ·inf_i|x−x_i|²·u²e^{u²}`.
pub fn pointwise_bound(u: &Field, lambda: f64, peaks: &[Peak]) -> Result<f64> {
    if peaks.is_empty() {
        return Err(Error::InvalidParameter("pointwise bound needs at least one peak".into()));
    }
    let g = u.grid();
    let mut worst = 0.0f64;
    for (i, &v) in u.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let d2 = peaks
            .iter()
            .map(|p| {
                let d = dist(g.coords()[i], p.position);
                d * d
            })
            .fold(f64::INFINITY, f64::min);
        let usq = v * v;
        worst = worst.max(lambda * d2 * usq * usq.exp());
    }
    Ok(worst)
}

/// Empirical constant of the oscillation bound: max over sampled pairs of
/// `|u(y) − u(z)|·u(y)` with `z ∈ B_{R(y)/2}(y)`, `R(y)` the distance from
/// `y` to the nearest peak.
pub fn oscillation_stat(u: &Field, peaks: &[Peak]) -> Result<f64> {
    if peaks.is_empty() {
        return Err(Error::InvalidParameter("oscillation stat needs at least one peak".into()));
    }
    let g = u.grid();
    let vals = u.values();
    let n = vals.len();
    let stride_y = (n / 512).max(1);
    let stride_z = (n / 2048).max(1);
    let mut worst = 0.0f64;
    for iy in (0..n).step_by(stride_y) {
        let uy = vals[iy];
        if uy <= 0.0 {
            continue;
        }
        let py = g.coords()[iy];
        let ry = peaks.iter().map(|p| dist(py, p.position)).fold(f64::INFINITY, f64::min);
        if ry <= 0.0 {
            continue;
        }
        for iz in (0..n).step_by(stride_z) {
            if dist(py, g.coords()[iz]) <= 0.5 * ry {
                worst = worst.max((uy - vals[iz]).abs() * uy);
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeparationReport {
    /// `min_j |x_k − x_j| / r_k` over the other peaks; absent for a lone peak.
    pub nearest_peak_ratio: Option<f64>,
    /// `dist(x_k, ∂Ω) / r_k`.
    pub boundary_ratio: f64,
}

/// Everything the analyzer knows about one concentration point.
#[derive(Clone, Debug, Serialize)]
pub struct BubbleReport {
    pub position: [f64; 2],
    pub u_peak: f64,
    /// Bubble scale `r_k`; satisfies `λr_k²u_peak²e^{u_peak²} = 4`.
    pub scale: f64,
    /// Sup distance of the rescaled profile to `η₀` on the profile box;
    /// absent when the bubble is below the resolvable scale `4h`.
    pub profile_err: Option<f64>,
    /// `Λ_local`, the energy in `B_{L·r_k}`.
    pub local_energy: f64,
    /// Nearest integer quantization level.
    pub level: u32,
    /// `|Λ_local − 4π·level|`.
    pub deviation: f64,
    pub verdict: QuantizationVerdict,
    pub separation: SeparationReport,
    pub under_resolved: bool,
}

/// Run the full §4–§5 analysis on one snapshot.
pub fn analyze_snapshot(u: &Field, lambda: f64, cfg: &AnalysisConfig) -> Result<Vec<BubbleReport>> {
    let g = u.grid();
    let peaks = detect_peaks(u, lambda, cfg);
    let mut reports = Vec::with_capacity(peaks.len());
    for (k, peak) in peaks.iter().enumerate() {
        let scale = bubble_scale(peak.value, lambda)?;
        let under_resolved = scale < 4.0 * g.spacing();
        let profile_err = if under_resolved {
            None
        } else {
            let samples =
                rescale_profile(u, peak.position, scale, cfg.profile_box, cfg.samples_per_unit)?;
            Some(profile_error(&samples))
        };
        let lam_local = local_energy(u, lambda, peak.position, cfg.local_energy_box * scale)?;
        let (level, deviation, verdict) = quantize(lam_local, cfg.tol_frac);
        let nearest_peak_ratio = peaks
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, p)| dist(peak.position, p.position) / scale)
            .fold(f64::INFINITY, f64::min);
        reports.push(BubbleReport {
            position: peak.position,
            u_peak: peak.value,
            scale,
            profile_err,
            local_energy: lam_local,
            level,
            deviation,
            verdict,
            separation: SeparationReport {
                nearest_peak_ratio: (peaks.len() > 1).then_some(nearest_peak_ratio),
                boundary_ratio: g.boundary_distance(peak.position) / scale,
            },
            under_resolved,
        });
    }
    Ok(reports)
}

/// Sup over interior nodes of the Liouville residual `|−Δη₀ − 4e^{2η₀}|` on a
/// radial reference grid of the given size.
pub fn liouville_residual_sup(box_radius: f64, n: usize) -> Result<f64> {
    let g = Arc::new(build_radial_grid(box_radius, n)?);
    let eta = Field::sampled(&g, liouville_profile);
    let lap = g.laplacian(&eta)?;
    let mut worst = 0.0f64;
    for i in g.interior_indices() {
        let e = eta.values()[i];
        let res = -lap.values()[i] - 4.0 * (2.0 * e).exp();
        worst = worst.max(res.abs());
    }
    Ok(worst)
}

/// Discrete `∫_{B_l} 4e^{2η₀}` on a radial reference grid of radius
/// `box_radius ≥ l`, for comparison with `liouville_mass(l)`.
pub fn liouville_discrete_mass(box_radius: f64, n: usize, l: f64) -> Result<f64> {
    let g = Arc::new(build_radial_grid(box_radius, n)?);
    let eta = Field::sampled(&g, liouville_profile);
    let mut acc = 0.0;
    for (i, &e) in eta.values().iter().enumerate() {
        let w = g.weight_in_ball(i, [0.0, 0.0], l);
        if w > 0.0 {
            acc += w * 4.0 * (2.0 * e).exp();
        }
    }
    Ok(acc)
}
