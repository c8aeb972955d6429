//! Scalar functionals of a field: the Moser-Trudinger energy, the two
//! Lagrange-multiplier formulas, the kinetic term, and the a-priori
//! inequality checks used online by the flow.
//!
//! Both constraint modes share the same flow equation; only the scalar λ
//! differs. With the volume (fixed `E`) constraint,
//! `λ = ∫|∇u|² / ∫u²e^{u²}`; with the fixed Dirichlet integral,
//! `λ = ∫|Δu|²e^{−u²} / ∫|∇u|²`, evaluated with the same discrete Laplacian
//! the stepper uses so the discrete conservation identity holds exactly.

use serde::{Deserialize, Serialize};

use crate::grid::Field;
use crate::{Error, Result};

/// Hard cap on `u²` before exponentiation. Beyond this the state is treated
/// as a blow-up overflow, never silently saturated.
pub const OVERFLOW_LIMIT_USQ: f64 = 700.0;

/// The flow's conserved quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ConstraintKind {
    /// Fixed volume: `E(u(t)) = c₀` for all t.
    Volume { c0: f64 },
    /// Fixed Dirichlet integral: `∫|∇u(t)|² = Λ₀` for all t.
    Dirichlet { lambda0: f64 },
}

impl ConstraintKind {
    pub fn volume(c0: f64) -> Result<Self> {
        if c0 > 0.0 && c0.is_finite() {
            Ok(ConstraintKind::Volume { c0 })
        } else {
            Err(Error::InvalidParameter(format!("volume constraint needs c0 > 0, got {c0}")))
        }
    }

    pub fn dirichlet(lambda0: f64) -> Result<Self> {
        if lambda0 > 0.0 && lambda0.is_finite() {
            Ok(ConstraintKind::Dirichlet { lambda0 })
        } else {
            Err(Error::InvalidParameter(format!(
                "dirichlet constraint needs Λ0 > 0, got {lambda0}"
            )))
        }
    }

    pub fn target(&self) -> f64 {
        match self {
            ConstraintKind::Volume { c0 } => *c0,
            ConstraintKind::Dirichlet { lambda0 } => *lambda0,
        }
    }

    pub fn is_volume(&self) -> bool {
        matches!(self, ConstraintKind::Volume { .. })
    }

    /// Value of the conserved quantity on a field.
    pub fn measure(&self, u: &Field) -> Result<f64> {
        match self {
            ConstraintKind::Volume { .. } => mt_energy(u),
            ConstraintKind::Dirichlet { .. } => u.grid().dirichlet_energy(u),
        }
    }

    /// Relative drift of the conserved quantity from its target.
    pub fn residual(&self, u: &Field) -> Result<f64> {
        Ok((self.measure(u)? - self.target()).abs() / self.target())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintKind::Volume { c0 } => ConstraintKind::volume(*c0).map(|_| ()),
            ConstraintKind::Dirichlet { lambda0 } => ConstraintKind::dirichlet(*lambda0).map(|_| ()),
        }
    }
}

/// One row of the trajectory ledger.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedgerRow {
    pub t: f64,
    pub mt_energy: f64,
    pub dirichlet_energy: f64,
    pub lambda: f64,
    pub u_max: f64,
    pub kinetic: f64,
    pub constraint_residual: f64,
}

impl EnergyLedgerRow {
    pub const CSV_HEADER: &'static str = "t,E,D,lambda,u_max,kinetic,constraint_residual";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.t,
            self.mt_energy,
            self.dirichlet_energy,
            self.lambda,
            self.u_max,
            self.kinetic,
            self.constraint_residual
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidParameter(format!("bad ledger row `{line}`")))?;
        if cols.len() != 7 {
            return Err(Error::InvalidParameter(format!(
                "ledger row needs 7 columns, got {}",
                cols.len()
            )));
        }
        Ok(EnergyLedgerRow {
            t: cols[0],
            mt_energy: cols[1],
            dirichlet_energy: cols[2],
            lambda: cols[3],
            u_max: cols[4],
            kinetic: cols[5],
            constraint_residual: cols[6],
        })
    }
}

/// Error out if any node would overflow `e^{u²}`.
pub fn check_overflow(u: &Field) -> Result<()> {
    for (i, &v) in u.values().iter().enumerate() {
        let usq = v * v;
        if usq > OVERFLOW_LIMIT_USQ {
            return Err(Error::Overflow { node: i, max_usq: usq });
        }
    }
    Ok(())
}

/// Moser-Trudinger energy `E(u) = ½∫(e^{u²}−1)`, with `e^{u²}−1` evaluated by
/// `exp_m1` so small fields do not lose the constraint tolerance to
/// cancellation.
pub fn mt_energy(u: &Field) -> Result<f64> {
    check_overflow(u)?;
    let g = u.grid();
    let mut acc = 0.0;
    for (v, w) in u.values().iter().zip(g.weights()) {
        acc += w * (v * v).exp_m1();
    }
    Ok(0.5 * acc)
}

/// `∫ u² e^{u²}`, the density that carries the concentrating energy.
pub fn exp_weighted_mass(u: &Field) -> Result<f64> {
    check_overflow(u)?;
    let g = u.grid();
    let mut acc = 0.0;
    for (v, w) in u.values().iter().zip(g.weights()) {
        let usq = v * v;
        acc += w * usq * usq.exp();
    }
    Ok(acc)
}

/// Multiplier for the fixed-volume constraint: `λ = ∫|∇u|² / ∫u²e^{u²}`.
pub fn lambda_volume(u: &Field) -> Result<f64> {
    let denom = exp_weighted_mass(u)?;
    if denom == 0.0 {
        return Err(Error::Degenerate("lambda_volume of the zero field".into()));
    }
    Ok(u.grid().dirichlet_energy(u)? / denom)
}

/// Multiplier for the fixed-Dirichlet-integral constraint:
/// `λ = ∫|Δu|²e^{−u²} / ∫|∇u|²`, with the stepper's own Laplacian stencil.
pub fn lambda_dirichlet(u: &Field) -> Result<f64> {
    let g = u.grid();
    let denom = g.dirichlet_energy(u)?;
    if denom == 0.0 {
        return Err(Error::Degenerate("lambda_dirichlet of the zero field".into()));
    }
    let lap = g.laplacian(u)?;
    let num = g.integrate(&lap.zip_map(u, |dv, v| dv * dv * (-v * v).exp())?)?;
    Ok(num / denom)
}

/// Upper bound `λ₀ = 2Λ₀/c₀` valid for the volume-constrained flow at every
/// time. No per-time bound holds in the Dirichlet mode, so that variant is
/// rejected.
pub fn lambda_upper_bound(c: &ConstraintKind, lambda0: f64) -> Result<f64> {
    match c {
        ConstraintKind::Volume { c0 } => {
            if *c0 <= 0.0 {
                return Err(Error::InvalidParameter(format!("c0 must be positive, got {c0}")));
            }
            Ok(2.0 * lambda0 / c0)
        }
        ConstraintKind::Dirichlet { .. } => Err(Error::NotApplicable(
            "the 2Λ0/c0 bound holds per-time only for the volume constraint".into(),
        )),
    }
}

/// Outcome of the `∫u²e^{u²} ≥ E(u)/2` check.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LowerBoundReport {
    pub weighted_mass: f64,
    pub half_energy: f64,
    pub holds: bool,
}

/// Check the lower bound `∫u²e^{u²} ≥ E(u)/2` (up to 1e-10 slack).
pub fn check_lower_bound(u: &Field) -> Result<LowerBoundReport> {
    let weighted_mass = exp_weighted_mass(u)?;
    let half_energy = 0.5 * mt_energy(u)?;
    Ok(LowerBoundReport {
        weighted_mass,
        half_energy,
        holds: weighted_mass >= half_energy - 1e-10,
    })
}

/// Kinetic term `∫ u_t² e^{u²}`.
pub fn kinetic(u: &Field, u_t: &Field) -> Result<f64> {
    check_overflow(u)?;
    let g = u.grid();
    g.integrate(&u_t.zip_map(u, |ut, v| ut * ut * (v * v).exp())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_radial_grid, Field};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn ball(n: usize) -> Arc<crate::grid::Grid> {
        Arc::new(build_radial_grid(1.0, n).unwrap())
    }

    /// High-resolution radial quadrature of `f(r)·2πr` over [0, 1],
    /// independent of the grid machinery.
    fn quad_oracle(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let r = i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * f(r) * 2.0 * PI * r * h;
        }
        acc
    }

    #[test]
    fn mt_energy_examples() {
        let g = ball(256);
        assert_eq!(mt_energy(&Field::zeros(g.clone())).unwrap(), 0.0);

        let one = Field::sampled(&g, |_| 1.0);
        let expect = 0.5 * (std::f64::consts::E - 1.0) * PI;
        let got = mt_energy(&one).unwrap();
        assert!((got - expect).abs() / expect < 1e-2, "{got} vs {expect}");
        assert!((expect - 2.6989).abs() < 1e-3);
    }

    #[test]
    fn mt_energy_against_quadrature_oracle() {
        let g = ball(512);
        let u = Field::sampled(&g, |p| 1.0 - p[0] * p[0]);
        let oracle = 0.5 * quad_oracle(|r| ((1.0 - r * r).powi(2)).exp_m1(), 100_000);
        let got = mt_energy(&u).unwrap();
        assert!((got - oracle).abs() / oracle < 5e-3, "{got} vs {oracle}");
    }

    #[test]
    fn mt_energy_overflow_guard() {
        let g = ball(64);
        let u = Field::sampled(&g, |_| 27.0); // u² = 729 > 700
        assert!(matches!(mt_energy(&u), Err(Error::Overflow { .. })));
    }

    #[test]
    fn lambda_volume_ratio_and_degenerate() {
        let g = ball(512);
        let u = Field::sampled_h10(&g, |p| 1.0 - p[0] * p[0]);
        let d = g.dirichlet_energy(&u).unwrap();
        let m = exp_weighted_mass(&u).unwrap();
        let lam = lambda_volume(&u).unwrap();
        assert!((lam - d / m).abs() < 1e-14);
        assert!(lam > 0.0);

        assert!(matches!(
            lambda_volume(&Field::zeros(g.clone())),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn lambda_dirichlet_positive_and_scale_dependent() {
        let g = ball(512);
        let u = Field::sampled_h10(&g, |p| 1.0 - p[0] * p[0]);
        let lam = lambda_dirichlet(&u).unwrap();
        assert!(lam > 0.0);

        // no scale invariance is claimed: doubling u changes the value
        let u2 = u.map(|v| 2.0 * v);
        let lam2 = lambda_dirichlet(&u2).unwrap();
        assert!((lam - lam2).abs() > 1e-6);

        assert!(matches!(
            lambda_dirichlet(&Field::zeros(g.clone())),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn lambda_upper_bound_examples() {
        let c = ConstraintKind::volume(1.0).unwrap();
        let b = lambda_upper_bound(&c, 4.0 * PI).unwrap();
        assert!((b - 8.0 * PI).abs() < 1e-12);
        assert!((b - 25.13).abs() < 0.01);

        let c = ConstraintKind::volume(2.0).unwrap();
        assert!((lambda_upper_bound(&c, 2.0).unwrap() - 2.0).abs() < 1e-15);

        assert!(ConstraintKind::volume(0.0).is_err());
        let d = ConstraintKind::dirichlet(1.0).unwrap();
        assert!(matches!(lambda_upper_bound(&d, 1.0), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn lower_bound_holds_on_corpus() {
        let g = ball(512);
        let zero = Field::zeros(g.clone());
        let rep = check_lower_bound(&zero).unwrap();
        assert!(rep.holds && rep.weighted_mass == 0.0 && rep.half_energy == 0.0);

        let u = Field::sampled_h10(&g, |p| 1.0 - p[0] * p[0]);
        let rep = check_lower_bound(&u).unwrap();
        assert!(rep.holds);
        let lhs_oracle = quad_oracle(
            |r| {
                let v = 1.0 - r * r;
                v * v * (v * v).exp()
            },
            100_000,
        );
        assert!((rep.weighted_mass - lhs_oracle).abs() / lhs_oracle < 5e-3);

        let m = crate::seeds::moser_function(
            &crate::seeds::MoserParams { rho: (-1.0f64).exp(), outer: 1.0, center: [0.0, 0.0] },
            &g,
        )
        .unwrap();
        assert!(check_lower_bound(&m).unwrap().holds);
    }

    #[test]
    fn kinetic_examples() {
        let g = ball(256);
        let u = Field::sampled_h10(&g, |p| 1.0 - p[0]);
        let zero = Field::zeros(g.clone());
        assert_eq!(kinetic(&u, &zero).unwrap(), 0.0);

        let one = Field::sampled(&g, |_| 1.0);
        let got = kinetic(&zero, &one).unwrap();
        assert!((got - PI).abs() / PI < 1e-2);
    }

    #[test]
    fn mt_energy_monotone_in_amplitude() {
        let g = ball(256);
        let u = Field::sampled_h10(&g, |p| 1.0 - p[0] * p[0]);
        let mut last = 0.0;
        for k in 1..=8 {
            let alpha = 0.25 * k as f64;
            let e = mt_energy(&u.map(|v| alpha * v)).unwrap();
            assert!(e > last);
            last = e;
        }
    }

    #[test]
    fn ledger_row_round_trip() {
        let row = EnergyLedgerRow {
            t: 0.125,
            mt_energy: 1.5,
            dirichlet_energy: 0.64,
            lambda: 0.42671,
            u_max: 0.8,
            kinetic: 1e-9,
            constraint_residual: 3.2e-12,
        };
        let back = EnergyLedgerRow::from_csv(&row.to_csv()).unwrap();
        assert_eq!(row, back);
    }
}
