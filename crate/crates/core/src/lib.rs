//! Numerical toolkit for the constrained heat flow of the Moser-Trudinger energy.
//!
//! The flow `u_t e^{u²} = Δu + λ u e^{u²}` on a bounded planar domain, with
//! homogeneous Dirichlet data, is integrated under one of two constraints:
//! either the Moser-Trudinger energy `E(u) = ½∫(e^{u²}−1)` is held at its
//! initial value (fixed volume) or the Dirichlet energy `∫|∇u|²` is
//! (fixed Dirichlet integral). The multiplier λ(t) is the scalar that
//! enforces the chosen constraint at every step.
//!
//! Crate layout:
//! - [`grid`]: radial and masked-Cartesian discretizations, Laplacian,
//!   quadrature, and field snapshots
//! - [`energy`]: scalar functionals, the two λ formulas, and a-priori
//!   inequality checks
//! - [`seeds`]: Moser functions, the Coron family, energy normalization,
//!   center of mass
//! - [`flow`]: semi-implicit time stepping with exact scalar constraint
//!   projection, trajectory ledgers, stopping detection
//! - [`bubbles`]: concentration analysis — peak detection, bubble scale,
//!   Liouville profile comparison, neck scans, energy quantization
//! - [`stationary`]: radial shooting solver for `−Δu = λue^{u²}`, used as an
//!   independent oracle and for branch diagrams
//! - [`runner`]: scenario configs, presets, persistence, and the CLI backend

pub mod bubbles;
pub mod energy;
mod error;
pub mod flow;
pub mod grid;
pub mod runner;
pub mod seeds;
pub mod stationary;

pub use error::{Error, Result};
