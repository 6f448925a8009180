//! Positive normalized mountain-pass solutions of the Kirchhoff problem
//!
//! ```text
//! −(a + b∫|∇u|²) Δu + λu = ρ|u|^{p−2}u   in Ω,   u = 0 on ∂Ω,   ∫u² = c
//! ```
//!
//! on 1D intervals and 2D rectangles, together with the diagnostics that
//! go with them: geometry certificates, Morse indices, blow-up profiles and
//! parameter continuation.

pub mod asymptotics;
pub mod config;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod par;
pub mod poisson;
pub mod report;
pub mod run;
pub mod solve;
pub mod spectral;
pub mod sphere;

pub use energy::{energy, gradient, hessian_apply, EnergyReport, ProblemParams};
pub use error::{Error, Result};
pub use geometry::{certify_geometry, estimate_gn_constant, initial_path, GNEstimate, GeometryCertificate};
pub use grid::{Field, Grid};
pub use solve::{deform_path, mountain_pass_solve, refine_newton, PathState, SolutionRecord, SolverConfig};
pub use spectral::{dirichlet_eigs, morse_index, EigenPair, MorseReport};
pub use sphere::SphereOps;
pub use asymptotics::{
    blowup_diagnose, continue_b, continue_c, continue_rho, solve_soliton, BlowupProfile, ContinuationRecord,
    SolitonProfile,
};
pub use config::RunConfig;
