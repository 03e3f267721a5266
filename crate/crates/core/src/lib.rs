//! Numerical laboratory for the resonant semilinear Duffing equation
//! `ẍ + n²x + g(x) + ψ'(x) = p(t)` with bounded `g`, periodic `ψ` and
//! `2π`-periodic forcing `p`.

pub mod action_angle;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod function;
pub mod integrator;
pub mod oscillatory;
pub mod quadrature;
pub mod resonance;
pub mod system;

pub use error::{Error, Result};
pub use fit::DecayFit;
pub use function::{FunctionSpec, TrigPoly};
pub use system::{DuffingSystem, SystemSpec};
