//! Numerical laboratory for the gravitational Vlasov–Manev–Fokker–Planck
//! system.
//!
//! The crate simulates the ε-regularized dynamics two ways, with interacting
//! Langevin particles ([`particles`]) and with a deterministic split solver on
//! a truncated phase-space grid ([`phase_grid`]), and evaluates the functionals
//! that control those dynamics ([`diagnostics`], [`inequalities`]).
//! Interchangeable numerical building blocks (pairwise force evaluators,
//! SDE integrators, advection and velocity-relaxation schemes, inequality
//! checks) sit behind traits and are looked up by name in a [`registry`], so
//! scenario files and the command line can select them at runtime.

pub mod diagnostics;
pub mod error;
pub mod inequalities;
pub mod kernels;
pub mod particles;
pub mod phase_grid;
pub mod registry;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec, Point};
