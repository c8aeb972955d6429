//! Radial shooting solver for the stationary problem `−Δu = λu e^{u²}` on a
//! ball, used as an independent oracle for the flow and for branch diagrams.
//!
//! The radial reduction `u'' + u'/r + λu e^{u²} = 0`, `u(0) = a`, `u'(0) = 0`
//! is integrated by classic RK4 started one step off the origin with the
//! series `u ≈ a + c₂r² + c₄r⁴`, and the Dirichlet boundary condition is
//! enforced by a secant/bisection iteration on the shooting amplitude `a`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::energy::OVERFLOW_LIMIT_USQ;
use crate::grid::{Field, Grid, GridKind};
use crate::{Error, Result};

/// A radial trajectory of the stationary ODE, converged or not.
#[derive(Clone, Debug)]
pub struct ShootResult {
    pub lambda: f64,
    /// Shooting parameter `a = u(0)`.
    pub amplitude: f64,
    /// Ball radius the trajectory was integrated to.
    pub radius: f64,
    /// Sample radii `r_i = i·h`.
    pub r: Vec<f64>,
    /// Samples of `u`.
    pub u: Vec<f64>,
    /// Samples of `u'`.
    pub du: Vec<f64>,
    pub terminal_value: f64,
    pub terminal_slope: f64,
    /// Outer iterations spent finding the amplitude (zero for a raw shot).
    pub iterations: usize,
    /// `|u(R)|`, the Dirichlet defect.
    pub boundary_residual: f64,
    /// True when `|u(R)| ≤ 1e-8·a` and `u > 0` on `[0, R)`.
    pub converged: bool,
    /// Integration step.
    pub step: f64,
    /// True when the integration stopped before `R` because the (negative)
    /// trajectory left the representable range; `terminal_value` then holds
    /// the last sample and is decisively negative.
    pub truncated: bool,
}

fn trapz(r: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..r.len() - 1 {
        acc += 0.5 * (r[i + 1] - r[i]) * (f(i) + f(i + 1));
    }
    acc
}

fn rhs(r: f64, u: f64, p: f64, lambda: f64) -> (f64, f64) {
    (p, -p / r - lambda * u * (u * u).exp())
}

/// Integrate the radial ODE from the origin with `u(0) = a`, `u'(0) = 0`.
pub fn shoot(lambda: f64, amplitude: f64, radius: f64, n: usize) -> Result<ShootResult> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("shoot needs lambda > 0, got {lambda}")));
    }
    if amplitude < 0.0 {
        return Err(Error::InvalidParameter(format!("shoot needs a >= 0, got {amplitude}")));
    }
    if !(radius > 0.0) || n < 16 {
        return Err(Error::InvalidParameter("shoot needs R > 0 and n >= 16".into()));
    }
    let h = radius / n as f64;
    let mut r_out = Vec::with_capacity(n + 1);
    let mut u_out = Vec::with_capacity(n + 1);
    let mut p_out = Vec::with_capacity(n + 1);

    // series start: u = a + c2 r² + c4 r⁴ with c2 = −λf(a)/4, c4 = −λf'(a)c2/16;
    // the quartic term is kept only where it is a small correction, otherwise
    // the start degrades gracefully to the quadratic (the trajectory is about
    // to cross zero within one step anyway at such amplitudes)
    let a = amplitude;
    let f0 = a * (a * a).exp();
    let df0 = (a * a).exp() * (1.0 + 2.0 * a * a);
    let c2 = -lambda * f0 / 4.0;
    let mut c4 = -lambda * df0 * c2 / 16.0;
    if c4.abs() * h * h > 0.1 * c2.abs() {
        c4 = 0.0;
    }

    r_out.push(0.0);
    u_out.push(a);
    p_out.push(0.0);

    let mut r = h;
    let mut u = a + c2 * h * h + c4 * h.powi(4);
    let mut p = 2.0 * c2 * h + 4.0 * c4 * h.powi(3);
    r_out.push(r);
    u_out.push(u);
    p_out.push(p);

    let mut truncated = false;
    for _ in 1..n {
        if u * u > OVERFLOW_LIMIT_USQ {
            truncated = true;
            break;
        }
        let (k1u, k1p) = rhs(r, u, p, lambda);
        let (k2u, k2p) = rhs(r + 0.5 * h, u + 0.5 * h * k1u, p + 0.5 * h * k1p, lambda);
        let (k3u, k3p) = rhs(r + 0.5 * h, u + 0.5 * h * k2u, p + 0.5 * h * k2p, lambda);
        let (k4u, k4p) = rhs(r + h, u + h * k3u, p + h * k3p, lambda);
        let u_next = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        let p_next = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        if !u_next.is_finite() || !p_next.is_finite() {
            truncated = true;
            break;
        }
        u = u_next;
        p = p_next;
        r += h;
        r_out.push(r);
        u_out.push(u);
        p_out.push(p);
        if u < 0.0 {
            // crossed zero before R; only the sign of the terminal value is
            // needed beyond this point and the ODE turns violently unstable
            truncated = r < radius * (1.0 - 1e-12);
            break;
        }
    }

    if truncated && u > 0.0 {
        // the nonlinearity only pulls positive trajectories down, so an
        // upward explosion means the inputs were unreasonable
        return Err(Error::Overflow { node: 0, max_usq: u * u });
    }
    // for a truncated (crossed) trajectory, extrapolate the dive to R so the
    // amplitude root-finder sees a graded, not sign-only, signal
    let terminal_value = if truncated { u + p.min(0.0) * (radius - r) } else { u };
    let terminal_slope = p;
    let positive_inside = u_out[..u_out.len().saturating_sub(1)].iter().all(|&v| v > 0.0);
    let converged = amplitude > 0.0
        && !truncated
        && positive_inside
        && terminal_value.abs() <= 1e-8 * amplitude;
    Ok(ShootResult {
        lambda,
        amplitude,
        radius,
        r: r_out,
        u: u_out,
        du: p_out,
        terminal_value,
        terminal_slope,
        iterations: 0,
        boundary_residual: terminal_value.abs(),
        converged,
        step: h,
        truncated,
    })
}

/// Solve the Dirichlet problem at fixed λ by a secant iteration (with
/// bisection fallback) on `a ↦ u(R)` over a sign-changing bracket.
pub fn solve_dirichlet(lambda: f64, radius: f64, bracket: (f64, f64), n: usize) -> Result<ShootResult> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("bad amplitude bracket [{lo}, {hi}]")));
    }
    let terminal = |a: f64| -> Result<f64> { Ok(shoot(lambda, a, radius, n)?.terminal_value) };
    let mut f_lo = terminal(lo)?;
    let mut f_hi = terminal(hi)?;
    if f_lo == 0.0 {
        let mut out = shoot(lambda, lo, radius, n)?;
        out.iterations = 1;
        return Ok(out);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    for it in 1..=200 {
        // secant proposal; bisect whenever it crowds an endpoint, so wildly
        // asymmetric terminal values cannot stall the shrinkage
        let w = hi - lo;
        let mut next = hi - f_hi * w / (f_hi - f_lo);
        if !next.is_finite() || next <= lo + 0.05 * w || next >= hi - 0.05 * w {
            next = 0.5 * (lo + hi);
        }
        let f_next = terminal(next)?;
        let a = next;
        if f_next.abs() <= 1e-8 * a || (hi - lo) < f64::EPSILON * a.abs() {
            let mut out = shoot(lambda, a, radius, n)?;
            out.iterations = it;
            return Ok(out);
        }
        if f_next.signum() == f_lo.signum() {
            lo = next;
            f_lo = f_next;
        } else {
            hi = next;
            f_hi = f_next;
        }
    }
    Err(Error::RootFindFailed(format!(
        "solve_dirichlet did not converge at lambda = {lambda} in 200 iterations"
    )))
}

impl ShootResult {
    /// `∫|∇u|² = 2π ∫ u'² r dr` by trapezoid over the ODE samples.
    pub fn dirichlet_energy(&self) -> f64 {
        trapz(&self.r, |i| self.du[i] * self.du[i] * self.r[i]) * 2.0 * PI
    }

    /// `E(u) = ½∫(e^{u²}−1) = π ∫ (e^{u²}−1) r dr`.
    pub fn mt_energy(&self) -> f64 {
        trapz(&self.r, |i| (self.u[i] * self.u[i]).exp_m1() * self.r[i]) * PI
    }

    /// Resample the trajectory onto a radial grid (linear interpolation; exact
    /// node values when the grid spacing matches the integration step).
    pub fn sample_on(&self, grid: &Arc<Grid>) -> Result<Field> {
        if grid.kind() != GridKind::Radial {
            return Err(Error::InvalidParameter("shooting solutions are radial".into()));
        }
        let gr = grid.radius().unwrap();
        let covered = *self.r.last().unwrap_or(&0.0);
        if gr > covered * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "grid radius {gr} exceeds the trajectory's covered radius {covered}"
            )));
        }
        let h = self.step;
        let mut vals = Vec::with_capacity(grid.node_count());
        for c in grid.coords() {
            let t = c[0] / h;
            let i = (t.floor() as usize).min(self.r.len() - 2);
            let frac = t - i as f64;
            vals.push(self.u[i] * (1.0 - frac) + self.u[i + 1] * frac);
        }
        let mut f = Field::new(grid.clone(), vals, false)?;
        f.enforce_zero_boundary();
        Ok(f)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.lambda,
            self.amplitude,
            self.dirichlet_energy(),
            self.mt_energy(),
            self.boundary_residual
        )
    }
}

pub const BRANCH_CSV_HEADER: &str = "lambda,a,dirichlet_energy,mt_energy,u_terminal_residual";

/// Solution branch over a λ grid with warm-started amplitude brackets.
#[derive(Clone, Debug)]
pub struct BranchTable {
    pub rows: Vec<ShootResult>,
    /// λ at which continuation lost the bracket, if it did; rows up to that
    /// point are kept.
    pub lost_at: Option<f64>,
}

/// Trace the positive radial branch across a λ grid. Brackets are warm-started
/// from the previous amplitude and widened geometrically until the terminal
/// value changes sign.
pub fn branch(lambdas: &[f64], radius: f64, n: usize) -> Result<BranchTable> {
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter("branch needs positive lambdas".into()));
    }
    let mut rows: Vec<ShootResult> = Vec::with_capacity(lambdas.len());
    let mut lost_at = None;
    for &lambda in lambdas {
        let guess = rows.last().map(|r: &ShootResult| r.amplitude).unwrap_or(0.05);
        match bracketed_solve(lambda, radius, n, guess) {
            Ok(sol) => rows.push(sol),
            Err(_) => {
                lost_at = Some(lambda);
                break;
            }
        }
    }
    Ok(BranchTable { rows, lost_at })
}

/// Solve at one λ, growing a bracket around the amplitude guess.
pub fn bracketed_solve(lambda: f64, radius: f64, n: usize, guess: f64) -> Result<ShootResult> {
    let mut lo = (guess / 4.0).max(1e-6);
    let mut hi = guess * 4.0;
    for _ in 0..60 {
        let f_lo = shoot(lambda, lo, radius, n)?.terminal_value;
        let f_hi = shoot(lambda, hi, radius, n)?.terminal_value;
        if f_lo > 0.0 && f_hi < 0.0 {
            return solve_dirichlet(lambda, radius, (lo, hi), n);
        }
        if f_lo <= 0.0 {
            lo *= 0.5;
        }
        if f_hi >= 0.0 {
            hi *= 1.6;
        }
    }
    Err(Error::NoSignChange { lo, hi })
}

/// Estimated concentration scale `r_k = 2/(√λ·a·e^{a²/2})` of a solution.
pub fn concentration_scale(lambda: f64, amplitude: f64) -> f64 {
    2.0 / (lambda.sqrt() * amplitude * (0.5 * amplitude * amplitude).exp())
}

fn resolved_solve(lambda: f64, radius: f64, guess: f64) -> Result<ShootResult> {
    // an under-resolved solve lands on a spurious root, so escalate the step
    // count geometrically until the root's own concentration scale is covered
    let mut n = 262_144usize;
    for _ in 0..5 {
        let sol = bracketed_solve(lambda, radius, n, guess)?;
        let rk = concentration_scale(sol.lambda, sol.amplitude);
        if rk / sol.step >= 16.0 {
            return Ok(sol);
        }
        if n >= 16_000_000 {
            break;
        }
        n = (n * 4).min(16_000_000);
    }
    Err(Error::RootFindFailed(format!(
        "solution at lambda = {lambda} concentrates below the resolvable scale"
    )))
}

/// Find the Theorem-pair: two distinct amplitudes whose solutions carry the
/// same Dirichlet energy `alpha`, one on each side of the branch fold.
/// `lambda_window` must bracket the fold peak ((lo, hi) with the peak in
/// between); the search bisects in λ on each side until `|Λ₀ − alpha| ≤ tol`.
pub fn energy_pair(
    radius: f64,
    alpha: f64,
    tol: f64,
    lambda_peak: f64,
    lambda_lo: f64,
    lambda_hi: f64,
) -> Result<(ShootResult, ShootResult)> {
    let side = |mut lam_far: f64, near_peak: f64| -> Result<ShootResult> {
        let mut lam_peak = near_peak;
        let mut guess = 2.0;
        for _ in 0..40 {
            let lam = 0.5 * (lam_far + lam_peak);
            let sol = resolved_solve(lam, radius, guess)?;
            let d = sol.dirichlet_energy();
            guess = sol.amplitude;
            if (d - alpha).abs() <= tol {
                return Ok(sol);
            }
            // Λ₀ increases toward the fold peak on both sides
            if d < alpha {
                lam_far = lam;
            } else {
                lam_peak = lam;
            }
        }
        Err(Error::RootFindFailed(format!(
            "no solution with Dirichlet energy {alpha} ± {tol} on this branch side"
        )))
    };
    let ascending = side(lambda_hi, lambda_peak)?;
    let descending = side(lambda_lo, lambda_peak)?;
    Ok((ascending, descending))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_radial_grid;

    #[test]
    fn zero_amplitude_gives_zero_trajectory() {
        let s = shoot(1.0, 0.0, 1.0, 256).unwrap();
        assert!(s.u.iter().all(|&v| v == 0.0));
        assert!(s.du.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_amplitude_matches_linearized_ode() {
        // at a = 1e-3 the equation is essentially u'' + u'/r + λu = 0; compare
        // against a high-resolution RK4 integration of that linear equation
        let lambda = 2.0;
        let a = 1e-3;
        let s = shoot(lambda, a, 1.0, 2048).unwrap();

        let n = 20_480;
        let h = 1.0 / n as f64;
        let mut u = a + -lambda * a / 4.0 * h * h;
        let mut p = -lambda * a / 2.0 * h;
        let lin = |r: f64, u: f64, p: f64| (p, -p / r - lambda * u);
        let mut r = h;
        for _ in 1..n {
            let (k1u, k1p) = lin(r, u, p);
            let (k2u, k2p) = lin(r + 0.5 * h, u + 0.5 * h * k1u, p + 0.5 * h * k1p);
            let (k3u, k3p) = lin(r + 0.5 * h, u + 0.5 * h * k2u, p + 0.5 * h * k2p);
            let (k4u, k4p) = lin(r + h, u + h * k3u, p + h * k3p);
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            r += h;
        }
        assert!(
            (s.terminal_value - u).abs() <= 1e-6 * a,
            "{} vs {u}",
            s.terminal_value
        );
    }

    #[test]
    fn step_halving_shows_fourth_order() {
        let lambda = 1.5;
        let a = 1.2;
        let coarse = shoot(lambda, a, 1.0, 256).unwrap().terminal_value;
        let mid = shoot(lambda, a, 1.0, 512).unwrap().terminal_value;
        let fine = shoot(lambda, a, 1.0, 1024).unwrap().terminal_value;
        let e1 = (coarse - mid).abs();
        let e2 = (mid - fine).abs();
        let order = (e1 / e2).log2();
        assert!(order > 3.5, "measured order {order}");
    }

    fn discrete_pde_residual(lambda: f64, n: usize) -> f64 {
        // the trajectory is integrated far finer than the grid so the grid
        // stencil's O(h²) truncation dominates the measured residual
        let sol = solve_dirichlet(lambda, 1.0, (0.1, 5.0), 262_144).unwrap();
        assert!(sol.converged);
        let g = Arc::new(build_radial_grid(1.0, n).unwrap());
        let u = sol.sample_on(&g).unwrap();
        let lap = g.laplacian(&u).unwrap();
        let mut worst: f64 = 0.0;
        for i in g.interior_indices() {
            let v = u.values()[i];
            let res = lap.values()[i] + lambda * v * (v * v).exp();
            worst = worst.max(res.abs());
        }
        worst
    }

    #[test]
    fn solve_dirichlet_satisfies_discrete_pde_at_second_order() {
        let e1 = discrete_pde_residual(1.0, 512);
        let e2 = discrete_pde_residual(1.0, 1024);
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "measured order {order} (residuals {e1}, {e2})");
    }

    #[test]
    fn stationarity_collapses_lambda_volume() {
        let lambda = 1.0;
        let n = 2048;
        let sol = solve_dirichlet(lambda, 1.0, (0.1, 5.0), n).unwrap();
        let g = Arc::new(build_radial_grid(1.0, n).unwrap());
        let u = sol.sample_on(&g).unwrap();
        let lam_v = crate::energy::lambda_volume(&u).unwrap();
        assert!((lam_v - lambda).abs() <= 1e-3, "lambda_volume = {lam_v}");
        let lam_d = crate::energy::lambda_dirichlet(&u).unwrap();
        assert!((lam_d - lambda).abs() <= 1e-3, "lambda_dirichlet = {lam_d}");
    }

    #[test]
    fn solve_dirichlet_rejects_empty_bracket() {
        // tiny amplitudes at small lambda keep u(R) > 0 throughout
        assert!(matches!(
            solve_dirichlet(1.0, 1.0, (1e-4, 2e-4), 256),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn branch_energies_vanish_at_small_amplitude() {
        // descending lambda grid near the linear eigenvalue ~5.78
        let lambdas: Vec<f64> = (0..8).map(|k| 5.5 - 0.25 * k as f64).collect();
        let table = branch(&lambdas, 1.0, 512).unwrap();
        assert!(table.lost_at.is_none());
        assert_eq!(table.rows.len(), lambdas.len());
        // amplitude and energy both shrink toward the bifurcation point
        let first = &table.rows[table.rows.len() - 1];
        let top = &table.rows[0];
        assert!(top.amplitude < first.amplitude);
        assert!(top.dirichlet_energy() < first.dirichlet_energy());
        for row in &table.rows {
            assert!(row.converged);
        }
    }

    #[test]
    fn branch_rows_revalidate_from_scratch() {
        let lambdas = [3.0, 2.0, 1.0];
        let table = branch(&lambdas, 1.0, 1024).unwrap();
        for row in &table.rows {
            let fresh = solve_dirichlet(
                row.lambda,
                1.0,
                (0.5 * row.amplitude, 1.5 * row.amplitude + 0.1),
                1024,
            )
            .unwrap();
            assert!(
                (fresh.amplitude - row.amplitude).abs() <= 1e-6 * row.amplitude.max(1.0),
                "lambda = {}: {} vs {}",
                row.lambda,
                fresh.amplitude,
                row.amplitude
            );
        }
    }
}
