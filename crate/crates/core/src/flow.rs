//! Time integration of the constrained flow `u_t e^{u²} = Δu + λue^{u²}`.
//!
//! One step is backward Euler in the diffusion with the coefficient
//! `e^{−uₙ²}` frozen at the old state, explicit in the `λu` forcing:
//!
//! ```text
//! (I − dt·e^{−uₙ²}Δ) u⁺ = uₙ + dt·λ·uₙ
//! ```
//!
//! The solution is affine in λ, `u⁺(λ) = (1 + dt·λ)·v` with
//! `v = (I − dt·e^{−uₙ²}Δ)⁻¹uₙ`, so the constraint projection reduces to one
//! linear solve plus a scalar iteration on λ that pins the conserved quantity
//! to its target. The linear system, symmetrized by the quadrature weights
//! and the frozen exponential, is solved by Jacobi-preconditioned conjugate
//! gradients; the matrix is an M-matrix, so positive data stays positive up
//! to solver tolerance.

use serde::Serialize;

use crate::energy::{
    self, ConstraintKind, EnergyLedgerRow, OVERFLOW_LIMIT_USQ,
};
use crate::grid::Field;
use crate::{Error, Result};

/// The evolving object: current time, field, multiplier, constraint, and
/// step size.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub u: Field,
    pub lambda: f64,
    pub constraint: ConstraintKind,
    pub dt: f64,
}

impl FlowState {
    /// Validate initial data: zero-boundary, non-negative (to 1e-12), not
    /// identically zero, and already on the constraint target to 1e-6
    /// relative. The initial λ is the instantaneous multiplier of `u0`.
    pub fn new(u0: Field, constraint: ConstraintKind, dt: f64) -> Result<FlowState> {
        constraint.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("flow needs dt > 0, got {dt}")));
        }
        if !u0.zero_boundary() {
            return Err(Error::BoundaryFlagUnset);
        }
        if let Some(bad) = u0.values().iter().find(|&&v| v < -1e-12) {
            return Err(Error::InvalidParameter(format!(
                "initial data violates the maximum principle: node value {bad}"
            )));
        }
        if u0.values().iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate(
                "the zero field only flows with c0 = 0, which the constraint excludes".into(),
            ));
        }
        let residual = constraint.residual(&u0)?;
        if residual > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "initial data misses the constraint target by {residual:.3e} relative (> 1e-6); normalize the seed first"
            )));
        }
        let lambda = match constraint {
            ConstraintKind::Volume { .. } => energy::lambda_volume(&u0)?,
            ConstraintKind::Dirichlet { .. } => energy::lambda_dirichlet(&u0)?,
        };
        Ok(FlowState { t: 0.0, u: u0, lambda, constraint, dt })
    }
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepInfo {
    /// Nodes clipped from below −1e-12 back to zero (expected 0).
    pub clip_count: usize,
    pub cg_iterations: usize,
    pub projection_iterations: usize,
}

/// Jacobi-preconditioned CG on the weight-symmetrized system
/// `(W e^{uₙ²} − dt·WΔ) v = W e^{uₙ²} uₙ`, boundary rows pinned to zero.
fn solve_diffusion(u: &Field, exp_usq: &[f64], dt: f64) -> Result<(Vec<f64>, usize)> {
    let g = u.grid();
    let n = g.node_count();
    let w = g.weights();
    let un = u.values();

    let mut b = vec![0.0; n];
    for i in 0..n {
        if !g.is_boundary(i) {
            b[i] = w[i] * exp_usq[i] * un[i];
        }
    }
    let lap_diag = g.laplacian_diagonal();
    let mut precond = vec![1.0; n];
    for i in 0..n {
        if !g.is_boundary(i) {
            precond[i] = 1.0 / (w[i] * exp_usq[i] + dt * w[i] * lap_diag[i]);
        }
    }

    let mut lap = vec![0.0; n];
    let apply = |x: &[f64], out: &mut [f64], lap: &mut [f64]| {
        g.laplacian_into(x, lap);
        for i in 0..n {
            out[i] = if g.is_boundary(i) {
                0.0
            } else {
                w[i] * (exp_usq[i] * x[i] - dt * lap[i])
            };
        }
    };

    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let b_norm = dot(&b, &b).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }

    // warm start from uₙ (with boundary zeros)
    let mut x: Vec<f64> = (0..n).map(|i| if g.is_boundary(i) { 0.0 } else { un[i] }).collect();
    let mut r = vec![0.0; n];
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax, &mut lap);
    for i in 0..n {
        r[i] = b[i] - ax[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(ri, m)| ri * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let tol = 1e-10 * b_norm;
    let max_iter = 40_000.min(4 * n + 200);

    for iter in 0..max_iter {
        if dot(&r, &r).sqrt() <= tol {
            return Ok((x, iter));
        }
        apply(&p, &mut ax, &mut lap);
        let pap = dot(&p, &ax);
        if pap <= 0.0 {
            return Err(Error::SolverStalled { residual: dot(&r, &r).sqrt() / b_norm, iters: iter });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        for i in 0..n {
            z[i] = r[i] * precond[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverStalled { residual: dot(&r, &r).sqrt() / b_norm, iters: max_iter })
}

/// Scale factor `c` with `E(c·v) = c0` (volume projection), by bracketing and
/// a safeguarded secant. Returns `(c, iterations)`.
fn project_volume(v: &Field, c0: f64) -> Result<(f64, usize)> {
    let weights = v.grid().weights();
    let vsq: Vec<f64> = v.values().iter().map(|x| x * x).collect();
    let vsq_max = vsq.iter().cloned().fold(0.0, f64::max);
    if vsq_max == 0.0 {
        return Err(Error::Degenerate("volume projection of the zero field".into()));
    }
    let energy_of = |c: f64| -> Result<f64> {
        if c * c * vsq_max > OVERFLOW_LIMIT_USQ {
            return Err(Error::Overflow { node: 0, max_usq: c * c * vsq_max });
        }
        Ok(0.5
            * vsq
                .iter()
                .zip(weights)
                .map(|(s, w)| w * (c * c * s).exp_m1())
                .sum::<f64>())
    };

    let mut iters = 0usize;
    let mut lo = 1.0;
    let mut f_lo = energy_of(lo)? - c0;
    if f_lo == 0.0 {
        return Ok((1.0, 0));
    }
    if f_lo > 0.0 {
        // diffusion increased E; bracket downward
        let mut hi = lo;
        let mut f_hi = f_lo;
        while f_lo > 0.0 {
            iters += 1;
            if iters > 100 {
                return Err(Error::ProjectionFailed("no lower bracket for the volume projection".into()));
            }
            hi = lo;
            f_hi = f_lo;
            lo *= 0.5;
            f_lo = energy_of(lo)? - c0;
        }
        return secant_scale(lo, hi, f_lo, f_hi, c0, iters, &energy_of);
    }
    let mut hi = 1.0;
    let mut f_hi = f_lo;
    while f_hi < 0.0 {
        iters += 1;
        if iters > 100 {
            return Err(Error::ProjectionFailed("no upper bracket for the volume projection".into()));
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 1.5;
        f_hi = energy_of(hi)? - c0;
    }
    secant_scale(lo, hi, f_lo, f_hi, c0, iters, &energy_of)
}

fn secant_scale(
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    mut f_hi: f64,
    c0: f64,
    mut iters: usize,
    energy_of: &dyn Fn(f64) -> Result<f64>,
) -> Result<(f64, usize)> {
    loop {
        iters += 1;
        if iters > 200 {
            return Err(Error::ProjectionFailed(format!(
                "volume projection did not reach |E − c0| <= 1e-8·c0 (bracket [{lo}, {hi}])"
            )));
        }
        let w = hi - lo;
        let mut c = hi - f_hi * w / (f_hi - f_lo);
        if !c.is_finite() || c <= lo + 1e-3 * w || c >= hi - 1e-3 * w {
            c = 0.5 * (lo + hi);
        }
        let f = energy_of(c)? - c0;
        if f.abs() <= 5e-9 * c0 {
            return Ok((c, iters));
        }
        if f < 0.0 {
            lo = c;
            f_lo = f;
        } else {
            hi = c;
            f_hi = f;
        }
    }
}

/// One semi-implicit step with exact scalar constraint projection.
pub fn step(s: &FlowState) -> Result<(FlowState, StepInfo)> {
    if !(s.dt > 0.0) {
        return Err(Error::InvalidParameter(format!("step needs dt > 0, got {}", s.dt)));
    }
    let g = s.u.grid().clone();
    let mut exp_usq = Vec::with_capacity(g.node_count());
    for (i, &v) in s.u.values().iter().enumerate() {
        let usq = v * v;
        if usq > OVERFLOW_LIMIT_USQ {
            return Err(Error::Overflow { node: i, max_usq: usq });
        }
        exp_usq.push(usq.exp());
    }
    let (v_vals, cg_iterations) = solve_diffusion(&s.u, &exp_usq, s.dt)?;
    let v = Field::new(g.clone(), v_vals, true)?;

    let (c, projection_iterations) = match s.constraint {
        ConstraintKind::Volume { c0 } => project_volume(&v, c0)?,
        ConstraintKind::Dirichlet { lambda0 } => {
            let d = g.dirichlet_energy(&v)?;
            if d == 0.0 {
                return Err(Error::Degenerate("dirichlet projection of the zero field".into()));
            }
            ((lambda0 / d).sqrt(), 1)
        }
    };
    let lambda = (c - 1.0) / s.dt;

    let mut clip_count = 0usize;
    let mut vals: Vec<f64> = v.values().iter().map(|&x| c * x).collect();
    for x in vals.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-12 {
                clip_count += 1;
            }
            *x = 0.0;
        }
    }
    let u_next = Field::new(g, vals, true)?;
    let next = FlowState {
        t: s.t + s.dt,
        u: u_next,
        lambda,
        constraint: s.constraint,
        dt: s.dt,
    };
    Ok((next, StepInfo { clip_count, cg_iterations, projection_iterations }))
}

/// Instantaneous time derivative `u_t = e^{−u²}Δu + λu` of the flow.
pub fn residual(u: &Field, lambda: f64) -> Result<Field> {
    let g = u.grid();
    let lap = g.laplacian(u)?;
    lap.zip_map(u, |dv, v| (-v * v).exp() * dv + lambda * v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Steady,
    TimeLimit,
    BlowupThreshold,
    Overflow,
    StepFailure,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StopDiagnostics {
    pub u_max: f64,
    pub lambda: f64,
    pub mt_energy: f64,
    pub dirichlet_energy: f64,
    pub kinetic: f64,
    pub constraint_residual: f64,
    pub clip_total: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StopReport {
    pub reason: StopReason,
    pub t_final: f64,
    pub steps: usize,
    pub diagnostics: StopDiagnostics,
}

/// Stopping thresholds and step-size bounds.
#[derive(Clone, Copy, Debug)]
pub struct StopConfig {
    /// Steady threshold; `None` means `1e-8·Λ₀(u0)`.
    pub eps_steady: Option<f64>,
    pub blowup_umax: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_steps: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            eps_steady: None,
            blowup_umax: 12.0,
            dt_min: 1e-12,
            dt_max: 0.05,
            max_steps: 2_000_000,
        }
    }
}

pub struct RunOutcome {
    pub ledger: Vec<EnergyLedgerRow>,
    pub report: StopReport,
    pub final_state: FlowState,
}

fn ledger_row(s: &FlowState, kinetic: f64) -> Result<EnergyLedgerRow> {
    Ok(EnergyLedgerRow {
        t: s.t,
        mt_energy: energy::mt_energy(&s.u)?,
        dirichlet_energy: s.u.grid().dirichlet_energy(&s.u)?,
        lambda: s.lambda,
        u_max: s.u.u_max(),
        kinetic,
        constraint_residual: s.constraint.residual(&s.u)?,
    })
}

/// Integrate with adaptive step control until a stopping criterion fires.
///
/// A trial step is rejected (and dt halved) when the solver or projection
/// fails, or when the accepted-step invariants would break: λ must stay
/// positive (and under `2Λ₀/c₀·(1+1e-6)` in volume mode), the dissipated
/// energy must be monotone to 1e-8 absolute, and the constraint residual must
/// stay at projection accuracy. Ten clean steps in a row grow dt by 1.2× up
/// to `dt_max`. The observer sees every accepted state with its ledger row,
/// the initial state included.
pub fn run(
    s0: FlowState,
    t_max: f64,
    cfg: &StopConfig,
    mut observer: impl FnMut(&FlowState, &EnergyLedgerRow),
) -> Result<RunOutcome> {
    let lambda0_initial = s0.u.grid().dirichlet_energy(&s0.u)?;
    let eps_steady = cfg.eps_steady.unwrap_or(1e-8 * lambda0_initial);
    let lambda_bound = match s0.constraint {
        ConstraintKind::Volume { c0 } => Some(2.0 * lambda0_initial / c0 * (1.0 + 1e-6)),
        ConstraintKind::Dirichlet { .. } => None,
    };

    let kin0 = energy::kinetic(&s0.u, &residual(&s0.u, s0.lambda)?)?;
    let mut ledger = vec![ledger_row(&s0, kin0)?];
    observer(&s0, &ledger[0]);

    let mut state = s0;
    let mut clip_total = 0usize;
    let mut rejected = 0usize;
    let mut accepted = 0usize;
    let mut clean_streak = 0usize;

    let finish = |reason: StopReason,
                  state: &FlowState,
                  ledger: Vec<EnergyLedgerRow>,
                  clip_total: usize,
                  accepted: usize,
                  rejected: usize|
     -> Result<RunOutcome> {
        let last = *ledger.last().unwrap();
        Ok(RunOutcome {
            report: StopReport {
                reason,
                t_final: state.t,
                steps: accepted,
                diagnostics: StopDiagnostics {
                    u_max: last.u_max,
                    lambda: last.lambda,
                    mt_energy: last.mt_energy,
                    dirichlet_energy: last.dirichlet_energy,
                    kinetic: last.kinetic,
                    constraint_residual: last.constraint_residual,
                    clip_total,
                    accepted_steps: accepted,
                    rejected_steps: rejected,
                },
            },
            final_state: state.clone(),
            ledger,
        })
    };

    if state.u.u_max() >= cfg.blowup_umax {
        return finish(StopReason::BlowupThreshold, &state, ledger, 0, 0, 0);
    }

    loop {
        if state.t >= t_max || accepted >= cfg.max_steps {
            return finish(StopReason::TimeLimit, &state, ledger, clip_total, accepted, rejected);
        }
        state.dt = state.dt.clamp(cfg.dt_min, cfg.dt_max).min(t_max - state.t).max(cfg.dt_min);

        let attempt = step(&state);
        let (next, info) = match attempt {
            Ok(ok) => ok,
            Err(Error::Overflow { .. }) => {
                return finish(StopReason::Overflow, &state, ledger, clip_total, accepted, rejected);
            }
            Err(Error::SolverStalled { .. })
            | Err(Error::ProjectionFailed(_))
            | Err(Error::Degenerate(_)) => {
                rejected += 1;
                clean_streak = 0;
                if state.dt <= cfg.dt_min * 1.0000001 {
                    return finish(StopReason::StepFailure, &state, ledger, clip_total, accepted, rejected);
                }
                state.dt *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };

        let prev = ledger.last().unwrap();
        let u_t = next.u.zip_map(&state.u, |a, b| (a - b) / state.dt)?;
        let kinetic = energy::kinetic(&state.u, &u_t)?;
        let row = ledger_row(&next, kinetic)?;

        let mut ok = next.lambda > 0.0 && row.constraint_residual <= 1e-8;
        match state.constraint {
            ConstraintKind::Volume { .. } => {
                ok = ok
                    && row.dirichlet_energy <= prev.dirichlet_energy + 1e-8
                    && next.lambda <= lambda_bound.unwrap();
            }
            ConstraintKind::Dirichlet { .. } => {
                ok = ok && row.mt_energy >= prev.mt_energy - 1e-8;
            }
        }
        if !ok {
            rejected += 1;
            clean_streak = 0;
            if state.dt <= cfg.dt_min * 1.0000001 {
                return finish(StopReason::StepFailure, &state, ledger, clip_total, accepted, rejected);
            }
            state.dt *= 0.5;
            continue;
        }

        state = next;
        accepted += 1;
        clip_total += info.clip_count;
        clean_streak += 1;
        if clean_streak >= 10 {
            clean_streak = 0;
            state.dt = (state.dt * 1.2).min(cfg.dt_max);
        }
        ledger.push(row);
        observer(&state, &row);

        let steady = match state.constraint {
            ConstraintKind::Volume { .. } => kinetic <= eps_steady,
            ConstraintKind::Dirichlet { .. } => kinetic / state.lambda <= eps_steady,
        };
        if steady {
            return finish(StopReason::Steady, &state, ledger, clip_total, accepted, rejected);
        }
        if state.u.u_max() >= cfg.blowup_umax {
            return finish(StopReason::BlowupThreshold, &state, ledger, clip_total, accepted, rejected);
        }
    }
}

/// Outcome of the exponential maximum-principle check over a ledger.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MaxPrincipleReport {
    /// Worst relative excess of `u_max(t)` over `e^{∫λ}·u_max(t₀)` across all
    /// ordered row pairs; non-positive when the bound holds strictly.
    pub worst_margin: f64,
    pub holds: bool,
}

/// Verify `u_max(t) ≤ exp(∫_{t₀}^t λ ds)·u_max(t₀)·(1 + 1e-4)` for every
/// ordered pair of ledger rows, via the running minimum of the discounted
/// sup-norm `φ = u_max·e^{−∫λ}`.
pub fn max_principle_check(ledger: &[EnergyLedgerRow]) -> Result<MaxPrincipleReport> {
    if ledger.len() < 2 {
        return Err(Error::InvalidParameter("max principle check needs at least 2 rows".into()));
    }
    let mut integral = 0.0;
    let mut min_phi = f64::INFINITY;
    let mut worst: f64 = f64::NEG_INFINITY;
    for (k, row) in ledger.iter().enumerate() {
        if k > 0 {
            integral += row.lambda * (row.t - ledger[k - 1].t);
        }
        // discount in log space: phi = u_max · e^{−∫λ}
        let log_phi = row.u_max.max(1e-300).ln() - integral;
        let phi = log_phi.exp();
        if k > 0 {
            worst = worst.max(phi / min_phi - 1.0);
        }
        min_phi = min_phi.min(phi);
    }
    Ok(MaxPrincipleReport { worst_margin: worst, holds: worst <= 1e-4 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_radial_grid, Field};
    use crate::seeds::{moser_function, MoserParams};
    use std::sync::Arc;

    fn moser_seed(n: usize, amplitude: f64) -> Field {
        let g = Arc::new(build_radial_grid(1.0, n).unwrap());
        let m = moser_function(
            &MoserParams { rho: (-1.0f64).exp(), outer: 1.0, center: [0.0, 0.0] },
            &g,
        )
        .unwrap();
        m.map(|v| amplitude * v)
    }

    #[test]
    fn zero_initial_data_is_rejected() {
        let g = Arc::new(build_radial_grid(1.0, 64).unwrap());
        let zero = Field::zeros(g);
        let c = ConstraintKind::volume(1.0).unwrap();
        assert!(matches!(FlowState::new(zero, c, 1e-3), Err(Error::Degenerate(_))));
        assert!(ConstraintKind::volume(0.0).is_err());
    }

    #[test]
    fn seed_must_sit_on_the_constraint() {
        let u = moser_seed(128, 0.8);
        let c = ConstraintKind::volume(123.0).unwrap();
        assert!(FlowState::new(u, c, 1e-3).is_err());
    }

    #[test]
    fn volume_step_conserves_e_and_dissipates_d() {
        let u = moser_seed(256, 0.8);
        let c0 = energy::mt_energy(&u).unwrap();
        let c = ConstraintKind::volume(c0).unwrap();
        let mut st = FlowState::new(u, c, 1e-3).unwrap();
        let mut d_prev = st.u.grid().dirichlet_energy(&st.u).unwrap();
        for _ in 0..20 {
            let (next, info) = step(&st).unwrap();
            let e = energy::mt_energy(&next.u).unwrap();
            assert!((e - c0).abs() <= 1e-7 * c0, "E drift {}", (e - c0).abs() / c0);
            let d = next.u.grid().dirichlet_energy(&next.u).unwrap();
            assert!(d <= d_prev + 1e-8, "D rose from {d_prev} to {d}");
            assert!(next.lambda > 0.0);
            assert_eq!(info.clip_count, 0);
            d_prev = d;
            st = next;
        }
    }

    #[test]
    fn dirichlet_step_conserves_d_and_grows_e() {
        let u = moser_seed(256, 0.75);
        let lambda0 = u.grid().dirichlet_energy(&u).unwrap();
        let c = ConstraintKind::dirichlet(lambda0).unwrap();
        let mut st = FlowState::new(u, c, 1e-3).unwrap();
        let mut e_prev = energy::mt_energy(&st.u).unwrap();
        for _ in 0..20 {
            let (next, _) = step(&st).unwrap();
            let d = next.u.grid().dirichlet_energy(&next.u).unwrap();
            assert!((d - lambda0).abs() <= 1e-10 * lambda0);
            let e = energy::mt_energy(&next.u).unwrap();
            assert!(e >= e_prev - 1e-8);
            assert!(next.lambda > 0.0);
            e_prev = e;
            st = next;
        }
    }

    #[test]
    fn discrete_kinetic_matches_energy_growth_rate() {
        // Dirichlet mode: ∫u_t²e^{u²} = λ·dE/dt along the flow
        let u = moser_seed(512, 0.75);
        let lambda0 = u.grid().dirichlet_energy(&u).unwrap();
        let c = ConstraintKind::dirichlet(lambda0).unwrap();
        let st = FlowState::new(u, c, 1e-4).unwrap();
        let e0 = energy::mt_energy(&st.u).unwrap();
        let (next, _) = step(&st).unwrap();
        let e1 = energy::mt_energy(&next.u).unwrap();
        let u_t = next.u.zip_map(&st.u, |a, b| (a - b) / st.dt).unwrap();
        let kin = energy::kinetic(&st.u, &u_t).unwrap();
        let rhs = next.lambda * (e1 - e0) / st.dt;
        assert!((kin - rhs).abs() <= 0.1 * kin.max(rhs), "kinetic {kin} vs λ·dE/dt {rhs}");
    }

    #[test]
    fn stationary_solution_is_a_fixed_point() {
        let n = 512;
        let sol = crate::stationary::solve_dirichlet(1.0, 1.0, (0.1, 5.0), 8192).unwrap();
        let g = Arc::new(build_radial_grid(1.0, n).unwrap());
        let u0 = sol.sample_on(&g).unwrap();
        let c0 = energy::mt_energy(&u0).unwrap();
        let c = ConstraintKind::volume(c0).unwrap();
        let mut st = FlowState::new(u0.clone(), c, 1e-3).unwrap();
        for _ in 0..100 {
            let (next, _) = step(&st).unwrap();
            st = next;
        }
        let drift = st
            .u
            .values()
            .iter()
            .zip(u0.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(drift <= 1e-3, "sup-norm drift {drift}");
    }

    #[test]
    fn residual_examples() {
        let g = Arc::new(build_radial_grid(1.0, 512).unwrap());
        let zero = Field::zeros(g.clone());
        let r = residual(&zero, 3.0).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));

        // λ = 0, u = 1 − r²: residual is e^{−u²}·(−4) at interior nodes
        let u = Field::sampled_h10(&g, |p| 1.0 - p[0] * p[0]);
        let r = residual(&u, 0.0).unwrap();
        for i in (1..g.node_count() - 1).step_by(37) {
            let v = u.values()[i];
            let expect = -4.0 * (-v * v).exp();
            assert!((r.values()[i] - expect).abs() < 1e-6, "node {i}");
        }

        // a converged stationary solution has an instantaneous u_t that
        // shrinks at second order under grid refinement
        let sol = crate::stationary::solve_dirichlet(1.0, 1.0, (0.1, 5.0), 262_144).unwrap();
        let sup_at = |n: usize| {
            let g = Arc::new(build_radial_grid(1.0, n).unwrap());
            let u = sol.sample_on(&g).unwrap();
            residual(&u, 1.0).unwrap().sup_norm()
        };
        let (e1, e2) = (sup_at(512), sup_at(1024));
        let order = (e1 / e2).log2();
        assert!(order >= 1.7, "order {order} (sups {e1}, {e2})");
    }

    #[test]
    fn run_stops_immediately_at_zero_time_budget() {
        let u = moser_seed(128, 0.8);
        let c0 = energy::mt_energy(&u).unwrap();
        let st = FlowState::new(u, ConstraintKind::volume(c0).unwrap(), 1e-3).unwrap();
        let out = run(st, 0.0, &StopConfig::default(), |_, _| {}).unwrap();
        assert_eq!(out.report.reason, StopReason::TimeLimit);
        assert_eq!(out.ledger.len(), 1);
        assert_eq!(out.report.steps, 0);
    }

    #[test]
    fn subcritical_run_reaches_steady_state() {
        let u = moser_seed(256, 0.8);
        let c0 = energy::mt_energy(&u).unwrap();
        let st = FlowState::new(u, ConstraintKind::volume(c0).unwrap(), 1e-3).unwrap();
        let out = run(st, 50.0, &StopConfig::default(), |_, _| {}).unwrap();
        assert_eq!(out.report.reason, StopReason::Steady, "report {:?}", out.report);
        assert_eq!(out.report.diagnostics.clip_total, 0);
        // λ stayed positive and bounded, energies monotone
        let lambda0 = out.ledger[0].dirichlet_energy;
        let bound = 2.0 * lambda0 / c0 * (1.0 + 1e-6);
        for w in out.ledger.windows(2) {
            assert!(w[1].lambda > 0.0 && w[1].lambda <= bound);
            assert!(w[1].dirichlet_energy <= w[0].dirichlet_energy + 1e-8);
            assert!(w[1].constraint_residual <= 1e-8);
        }
    }

    #[test]
    fn halving_the_step_changes_the_trajectory_at_first_order() {
        let run_to = |dt_max: f64| {
            let u = moser_seed(256, 0.8);
            let c0 = energy::mt_energy(&u).unwrap();
            let st = FlowState::new(u, ConstraintKind::volume(c0).unwrap(), 1e-4).unwrap();
            let cfg = StopConfig { dt_max, eps_steady: Some(1e-30), ..StopConfig::default() };
            run(st, 1.0, &cfg, |_, _| {}).unwrap().final_state
        };
        let coarse = run_to(0.02);
        let fine = run_to(0.01);
        let sup = coarse
            .u
            .values()
            .iter()
            .zip(fine.u.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        // first-order scheme: the dt_max halving moves u(T) by O(dt)
        assert!(sup <= 5.0 * 0.02, "sup difference {sup}");
        let d_gap = (coarse.u.grid().dirichlet_energy(&coarse.u).unwrap()
            - fine.u.grid().dirichlet_energy(&fine.u).unwrap())
        .abs();
        assert!(d_gap <= 5.0 * 0.02, "D difference {d_gap}");
    }

    #[test]
    fn supercritical_seed_hits_the_blowup_threshold() {
        // engineered concentration run: supercritical Moser seed, stop the
        // moment the sup-norm crosses 3
        let g = Arc::new(build_radial_grid(1.0, 1024).unwrap());
        let m = moser_function(
            &MoserParams { rho: (-2.0f64).exp(), outer: 1.0, center: [0.0, 0.0] },
            &g,
        )
        .unwrap();
        let d = g.dirichlet_energy(&m).unwrap();
        let scale = (1.3 * 4.0 * std::f64::consts::PI / d).sqrt();
        let u0 = m.map(|v| scale * v);
        let c0 = energy::mt_energy(&u0).unwrap();
        let st = FlowState::new(u0, ConstraintKind::volume(c0).unwrap(), 1e-4).unwrap();
        let cfg = StopConfig { blowup_umax: 3.0, dt_max: 0.02, ..StopConfig::default() };
        let out = run(st, 100.0, &cfg, |_, _| {}).unwrap();
        assert_eq!(out.report.reason, StopReason::BlowupThreshold);
        // the sup-norm grows monotonically through the concentration phase
        let umax: Vec<f64> = out.ledger.iter().map(|r| r.u_max).collect();
        assert!(umax.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(out.final_state.u.u_max() >= 3.0);
    }

    #[test]
    fn max_principle_on_ledgers() {
        let u = moser_seed(256, 0.8);
        let c0 = energy::mt_energy(&u).unwrap();
        let st = FlowState::new(u, ConstraintKind::volume(c0).unwrap(), 1e-3).unwrap();
        let out = run(st, 5.0, &StopConfig::default(), |_, _| {}).unwrap();
        let rep = max_principle_check(&out.ledger).unwrap();
        assert!(rep.holds, "margin {}", rep.worst_margin);

        // negative control: a synthetic ledger where u_max doubles with λ = 0
        let mk = |t: f64, u_max: f64| EnergyLedgerRow {
            t,
            mt_energy: 1.0,
            dirichlet_energy: 1.0,
            lambda: 0.0,
            u_max,
            kinetic: 0.0,
            constraint_residual: 0.0,
        };
        let bad = vec![mk(0.0, 1.0), mk(1.0, 2.0)];
        let rep = max_principle_check(&bad).unwrap();
        assert!(!rep.holds);
        assert!((rep.worst_margin - 1.0).abs() < 1e-12);

        assert!(max_principle_check(&bad[..1]).is_err());
    }
}
