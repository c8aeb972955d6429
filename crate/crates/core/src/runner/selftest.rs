//! Fast invariant corpus behind `mtflow selftest`: a few seconds of checks
//! spanning every module, printing one line per check.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::bubbles;
use crate::energy;
use crate::grid::{build_masked_grid, build_radial_grid, DomainSpec, Field};
use crate::seeds::{self, MoserParams};
use crate::stationary;

pub struct SelfTestResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(
    out: &mut Vec<SelfTestResult>,
    name: &'static str,
    run: impl FnOnce() -> Result<(bool, String), crate::Error>,
) {
    let (pass, detail) = match run() {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    out.push(SelfTestResult { name, pass, detail });
}

/// Run the whole corpus; all checks are executed regardless of failures.
pub fn selftest() -> Vec<SelfTestResult> {
    let mut out = Vec::new();

    check(&mut out, "grid.radial-weights", || {
        let g = build_radial_grid(1.0, 256)?;
        let area = g.area();
        let positive = g.weights().iter().all(|&w| w > 0.0);
        Ok((
            positive && (area - PI).abs() / PI < 1e-2,
            format!("area {area:.6} vs π, weights positive: {positive}"),
        ))
    });

    check(&mut out, "grid.masked-area", || {
        let g = build_masked_grid(&DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 }, 1.0 / 64.0)?;
        let area = g.area();
        Ok(((area - PI).abs() / PI < 0.02, format!("area {area:.6} vs π")))
    });

    check(&mut out, "grid.laplacian-parabola", || {
        let g = Arc::new(build_radial_grid(1.0, 256)?);
        let u = Field::sampled(&g, |p| 1.0 - p[0] * p[0]);
        let lap = g.laplacian(&u)?;
        let worst = g
            .interior_indices()
            .fold(0.0f64, |m, i| m.max((lap.values()[i] + 4.0).abs()));
        Ok((worst < 1e-8, format!("max |Δ(1−r²) + 4| = {worst:.3e}")))
    });

    check(&mut out, "grid.summation-by-parts", || {
        let g = Arc::new(build_masked_grid(&DomainSpec::Ball { cx: 0.0, cy: 0.0, r: 1.0 }, 1.0 / 32.0)?);
        let u = Field::sampled_h10(&g, |p| (1.0 - p[0] * p[0] - p[1] * p[1]) * p[0]);
        let v = Field::sampled_h10(&g, |p| (1.0 - p[0] * p[0] - p[1] * p[1]).powi(2));
        let lu = g.laplacian(&u)?;
        let lv = g.laplacian(&v)?;
        let a = g.integrate(&v.zip_map(&lu, |x, y| x * y)?)?;
        let b = g.integrate(&u.zip_map(&lv, |x, y| x * y)?)?;
        let asym = (a - b).abs();
        Ok((asym < 1e-10, format!("|<v,Δu> − <u,Δv>| = {asym:.3e}")))
    });

    check(&mut out, "energy.mt-closed-form", || {
        let g = Arc::new(build_radial_grid(1.0, 256)?);
        let one = Field::sampled(&g, |_| 1.0);
        let e = energy::mt_energy(&one)?;
        let expect = 0.5 * (std::f64::consts::E - 1.0) * PI;
        Ok(((e - expect).abs() / expect < 1e-2, format!("E = {e:.5} vs {expect:.5}")))
    });

    check(&mut out, "energy.lower-bound", || {
        let g = Arc::new(build_radial_grid(1.0, 256)?);
        let u = Field::sampled_h10(&g, |p| 1.0 - p[0] * p[0]);
        let rep = energy::check_lower_bound(&u)?;
        Ok((rep.holds, format!("{} >= {}", rep.weighted_mass, rep.half_energy)))
    });

    check(&mut out, "seeds.moser-unit-energy", || {
        let g = Arc::new(build_radial_grid(1.0, 1024)?);
        let m = seeds::moser_function(
            &MoserParams { rho: (-1.0f64).exp(), outer: 1.0, center: [0.0, 0.0] },
            &g,
        )?;
        let d = g.dirichlet_energy(&m)?;
        Ok(((d - 1.0).abs() < 0.02, format!("‖∇m‖² = {d:.5}")))
    });

    check(&mut out, "seeds.normalize-fixed-point", || {
        let g = Arc::new(build_radial_grid(1.0, 256)?);
        let u = Field::sampled_h10(&g, |p| 1.0 - p[0] * p[0]);
        let e = energy::mt_energy(&u)?;
        let (alpha, _) = seeds::normalize_alpha(&u, e)?;
        Ok(((alpha - 1.0).abs() < 1e-8, format!("alpha = {alpha}")))
    });

    check(&mut out, "bubbles.liouville-identity", || {
        let e1 = bubbles::liouville_residual_sup(4.0, 256)?;
        let e2 = bubbles::liouville_residual_sup(4.0, 512)?;
        let order = (e1 / e2).log2();
        Ok((order >= 1.9, format!("order {order:.3}")))
    });

    check(&mut out, "bubbles.liouville-mass", || {
        let got = bubbles::liouville_discrete_mass(8.0, 1024, 1.0)?;
        let expect = bubbles::liouville_mass(1.0);
        Ok(((got - expect).abs() / expect < 0.01, format!("{got:.5} vs {expect:.5} (2π)")))
    });

    check(&mut out, "bubbles.synthetic-quantum", || {
        let g = Arc::new(build_radial_grid(2.0, 4096)?);
        let (u_peak, r_k) = (6.0f64, 0.05f64);
        let lambda = 4.0 / (r_k * r_k * u_peak * u_peak * (u_peak * u_peak).exp());
        let u = Field::sampled(&g, |p| {
            u_peak + bubbles::liouville_profile([p[0] / r_k, p[1] / r_k]) / u_peak
        });
        let local = bubbles::local_energy(&u, lambda, [0.0, 0.0], 20.0 * r_k)?;
        let (level, dev, _) = bubbles::quantize(local, 0.1);
        Ok((level == 1 && dev < 0.1 * 4.0 * PI, format!("Λ = {local:.4}, level {level}")))
    });

    check(&mut out, "stationary.richardson-order", || {
        let coarse = stationary::shoot(1.5, 1.2, 1.0, 256)?.terminal_value;
        let mid = stationary::shoot(1.5, 1.2, 1.0, 512)?.terminal_value;
        let fine = stationary::shoot(1.5, 1.2, 1.0, 1024)?.terminal_value;
        let order = ((coarse - mid).abs() / (mid - fine).abs()).log2();
        Ok((order > 3.5, format!("order {order:.2}")))
    });

    check(&mut out, "stationary.lambda-volume-collapse", || {
        let sol = stationary::solve_dirichlet(1.0, 1.0, (0.1, 5.0), 16384)?;
        let g = Arc::new(build_radial_grid(1.0, 1024)?);
        let u = sol.sample_on(&g)?;
        let lam = energy::lambda_volume(&u)?;
        Ok(((lam - 1.0).abs() < 1e-3, format!("lambda_volume = {lam:.6}")))
    });

    out
}
