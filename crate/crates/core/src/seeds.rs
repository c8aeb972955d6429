//! Initial-data constructors: Moser functions, the Coron family with a
//! cutoff away from the domain hole, normalization to a prescribed
//! Moser-Trudinger energy, and the Dirichlet-density center of mass.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::energy::OVERFLOW_LIMIT_USQ;
use crate::grid::{DomainSpec, Field, Grid, GridKind};
use crate::{Error, Result};

/// Parameters of the truncated-logarithm Moser function `m_{ρ,R}` centered
/// at `center`: constant `√(log(R/ρ))/√(2π)` on `B_ρ`, then
/// `log(R/r)/√(2π log(R/ρ))`, then zero outside `B_R`. Its Dirichlet energy
/// is 1 for any admissible `(ρ, R)`.
#[derive(Clone, Copy, Debug)]
pub struct MoserParams {
    pub rho: f64,
    pub outer: f64,
    pub center: [f64; 2],
}

/// Parameters of the Coron family member `v_{s,x₀} = m_{sρ,R,(1−s)x₀}(1−τ)`:
/// a Moser bump of scale `sρ` slid from `x₀` (at `s→0`) into the domain hole
/// (at `s=1`), cut off on `B_{2·cutoff_radius}` around the origin.
#[derive(Clone, Copy, Debug)]
pub struct CoronParams {
    /// Homotopy parameter in (0, 1].
    pub s: f64,
    /// Bump anchor `x₀` with `|x₀| = 3·plateau_radius`.
    pub center: [f64; 2],
    /// Moser outer radius `R`; the annulus the construction lives in has
    /// outer radius `R₁ = 4R`.
    pub plateau_radius: f64,
    /// Moser inner scale ρ (the plateau of the `s`-member has radius `sρ`).
    pub rho: f64,
    /// Cutoff inner radius `R₂`, with `0 < R₂ < R/2`; τ ≡ 1 on `B_{R₂}` and
    /// τ ≡ 0 outside `B_{2R₂}`.
    pub cutoff_radius: f64,
    /// Moser-Trudinger energy the normalized member is scaled to.
    pub target_energy: f64,
}

impl CoronParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::InvalidParameter(format!("coron s must be in (0,1], got {}", self.s)));
        }
        if !(self.rho > 0.0 && self.rho < self.plateau_radius) {
            return Err(Error::InvalidParameter("coron needs 0 < rho < plateau radius".into()));
        }
        if !(self.cutoff_radius > 0.0 && self.cutoff_radius < 0.5 * self.plateau_radius) {
            return Err(Error::InvalidParameter(
                "coron needs 0 < cutoff radius < plateau_radius/2".into(),
            ));
        }
        let dist = self.center[0].hypot(self.center[1]);
        if (dist - 3.0 * self.plateau_radius).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "coron anchor must satisfy |x0| = 3R: |x0| = {dist}, 3R = {}",
                3.0 * self.plateau_radius
            )));
        }
        if !(self.target_energy > 0.0) {
            return Err(Error::InvalidParameter("coron target energy must be positive".into()));
        }
        Ok(())
    }
}

fn moser_value(d: f64, rho: f64, outer: f64) -> f64 {
    let norm = (2.0 * PI * (outer / rho).ln()).sqrt();
    if d <= rho {
        (outer / rho).ln() / norm
    } else if d < outer {
        (outer / d).ln() / norm
    } else {
        0.0
    }
}

/// Sample `m_{ρ,R}` on a grid. Values outside the domain are dropped by the
/// mask and boundary nodes are forced to zero, so the result is an `H¹₀`
/// member even when `B_R(x₀)` sticks out of the domain.
pub fn moser_function(p: &MoserParams, g: &Arc<Grid>) -> Result<Field> {
    if !(p.rho > 0.0 && p.rho < p.outer) {
        return Err(Error::InvalidParameter(format!(
            "moser function needs 0 < rho < R, got rho = {}, R = {}",
            p.rho, p.outer
        )));
    }
    if g.kind() == GridKind::Radial && p.center[0].hypot(p.center[1]) > 1e-12 {
        return Err(Error::InvalidParameter(
            "radial grids carry origin-centered Moser functions only".into(),
        ));
    }
    let (rho, outer, c) = (p.rho, p.outer, p.center);
    Ok(Field::sampled_h10(g, |x| {
        moser_value((x[0] - c[0]).hypot(x[1] - c[1]), rho, outer)
    }))
}

/// Quintic smoothstep: 0 → 1 on [0, 1] with vanishing first and second
/// derivatives at both ends.
fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// Radial cutoff `τ` about the origin: 1 on `B_{R₂}`, 0 outside `B_{2R₂}`,
/// joined by a monotone C² ramp of width `R₂`. The ramp is self-similar, so
/// `∫|∇τ|²` is the same for every `R₂`.
pub fn cutoff(r2: f64, outer: f64, g: &Arc<Grid>) -> Result<Field> {
    if !(r2 > 0.0 && r2 < 0.5 * outer) {
        return Err(Error::InvalidParameter(format!(
            "cutoff needs 0 < R2 < R/2, got R2 = {r2}, R = {outer}"
        )));
    }
    Ok(Field::sampled(g, |x| {
        let d = x[0].hypot(x[1]);
        1.0 - smoothstep((d - r2) / r2)
    }))
}

fn domain_contains_annulus(domain: &DomainSpec, outer: f64, inner: f64) -> bool {
    match domain {
        DomainSpec::Annulus { outer: o, inner: i } => *o >= outer * (1.0 - 1e-12) && *i <= inner,
        DomainSpec::RectWithHoles { x0, y0, x1, y1, holes } => {
            let rect_ok =
                *x0 <= -outer && *y0 <= -outer && *x1 >= outer && *y1 >= outer;
            rect_ok
                && holes
                    .iter()
                    .all(|h| h.cx.hypot(h.cy) + h.r <= inner)
        }
        DomainSpec::Ball { .. } => false,
    }
}

/// The Coron family member `v_{s,x₀}(x) = m_{sρ,R,(1−s)x₀}(x)·(1 − τ(x))`.
pub fn coron_field(p: &CoronParams, g: &Arc<Grid>) -> Result<Field> {
    p.validate()?;
    let r1 = 4.0 * p.plateau_radius;
    let lacks = || {
        Error::InvalidParameter(format!(
            "grid domain does not contain the annulus B_{r1} \\ B_{} required by the Coron family",
            p.cutoff_radius
        ))
    };
    match g.domain() {
        Some(d) if domain_contains_annulus(d, r1, p.cutoff_radius) => {}
        _ => return Err(lacks()),
    }
    let rho_s = p.s * p.rho;
    let bump_center = [(1.0 - p.s) * p.center[0], (1.0 - p.s) * p.center[1]];
    let (r2, outer) = (p.cutoff_radius, p.plateau_radius);
    Ok(Field::sampled_h10(g, |x| {
        let d = (x[0] - bump_center[0]).hypot(x[1] - bump_center[1]);
        let tau = 1.0 - smoothstep((x[0].hypot(x[1]) - r2) / r2);
        moser_value(d, rho_s, outer) * (1.0 - tau)
    }))
}

/// Find `α > 0` with `E(√α·v) = c₀` by bisection to width 1e-3 followed by
/// Newton, to relative accuracy 1e-8. The map `α ↦ E(√α v)` is strictly
/// increasing and convex, so the root is unique.
pub fn normalize_alpha(v: &Field, c0: f64) -> Result<(f64, Field)> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InvalidParameter(format!("normalize_alpha needs c0 > 0, got {c0}")));
    }
    let vsq: Vec<f64> = v.values().iter().map(|x| x * x).collect();
    let vsq_max = vsq.iter().cloned().fold(0.0, f64::max);
    if vsq_max == 0.0 {
        return Err(Error::Degenerate("normalize_alpha of the zero field".into()));
    }
    let weights = v.grid().weights();
    let energy = |alpha: f64| -> Result<f64> {
        if alpha * vsq_max > OVERFLOW_LIMIT_USQ {
            return Err(Error::RootFindFailed(format!(
                "c0 = {c0} unreachable: alpha = {alpha} trips the overflow guard while bracketing"
            )));
        }
        Ok(0.5
            * vsq
                .iter()
                .zip(weights)
                .map(|(s, w)| w * (alpha * s).exp_m1())
                .sum::<f64>())
    };
    let slope = |alpha: f64| -> f64 {
        0.5 * vsq
            .iter()
            .zip(weights)
            .map(|(s, w)| w * s * (alpha * s).exp())
            .sum::<f64>()
    };

    let mut iterations = 0usize;
    let mut budget = || -> Result<()> {
        iterations += 1;
        if iterations > 200 {
            Err(Error::RootFindFailed("normalize_alpha exceeded 200 iterations".into()))
        } else {
            Ok(())
        }
    };

    let mut lo = 0.0;
    let mut hi = 1.0;
    while energy(hi)? < c0 {
        budget()?;
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-3 {
        budget()?;
        let mid = 0.5 * (lo + hi);
        if energy(mid)? < c0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut alpha = 0.5 * (lo + hi);
    loop {
        budget()?;
        let e = energy(alpha)?;
        if (e - c0).abs() <= 1e-8 * c0 {
            break;
        }
        let step = (c0 - e) / slope(alpha);
        alpha = (alpha + step).clamp(0.25 * lo.max(f64::MIN_POSITIVE), 4.0 * hi);
    }
    let sqrt_alpha = alpha.sqrt();
    Ok((alpha, v.map(|x| sqrt_alpha * x)))
}

/// Center of mass `m(u) = ∫x|∇u|² / ∫|∇u|²` with the discrete edge-energy
/// density as the weight. Radial grids are symmetric by construction, so the
/// center is the origin.
pub fn center_of_mass(u: &Field) -> Result<[f64; 2]> {
    let g = u.grid();
    let mut total = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    g.for_each_edge_energy(u, |mid, e| {
        total += e;
        mx += mid[0] * e;
        my += mid[1] * e;
    });
    if total == 0.0 {
        return Err(Error::Degenerate("center_of_mass of a field with zero Dirichlet energy".into()));
    }
    match g.kind() {
        GridKind::Radial => Ok([0.0, 0.0]),
        GridKind::Cartesian => Ok([mx / total, my / total]),
    }
}
