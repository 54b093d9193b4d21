//! Numerical toolkit for hyperbolic sets of discrete-time control systems.
//!
//! The crate is organised around a [`ControlSystem`](system::ControlSystem)
//! trait describing an invertible map family `x ↦ f(x, u)` with Jacobians and
//! interval enclosures. On top of it sit:
//!
//! - [`hyperbolicity`]: stable/unstable splittings along orbits, unstable
//!   determinants and fitted hyperbolicity constants;
//! - [`setops`]: grid approximations of maximal and controlled invariant sets,
//!   fiber-tube volumes, accessibility ranks and controlled chains;
//! - [`shadowing`]: Newton refinement of pseudo-orbits, periodic orbits,
//!   conjugacies and expansivity probes;
//! - [`pressure`]: escape-rate and pressure estimators, invariance-entropy
//!   bounds, spanning-set counts and data-rate formulas;
//! - [`ratelimited`]: coder/controller simulation over a rate-limited channel.
//!
//! All rates are reported in bits per step unless a field says otherwise.

pub mod error;
pub mod hyperbolicity;
pub mod pressure;
pub mod ratelimited;
pub mod setops;
pub mod shadowing;
pub mod stats;
pub mod system;

pub use error::{Error, Result};
