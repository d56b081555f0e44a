//! Magnetically actuated thin-shell swimmers in viscous flow.
//!
//! The crate models a magnetized elastic sheet immersed in a Stokes fluid and
//! driven by a spatially uniform, time-varying magnetic field.  It is split
//! into layers that mirror the physics:
//!
//! * [`geometry`] — swimmer planforms, triangulation, magnetization patterns,
//!   rigid tilts, and the collocation sphere used by the drag oracle.
//! * [`elastica`] — discrete-shell stretching and bending forces with an
//!   Euler–Bernoulli cantilever calibration harness.
//! * [`magnetics`] — field programs, convection of remnant magnetization with
//!   element rotation, and conversion of distributed couples to nodal forces.
//! * [`hydrodynamics`] — regularized-stokeslet mobility (dense or matrix-free)
//!   plus probe-grid flow evaluation.
//! * [`dynamics`] — the inertialess mobility ODE, cycle bookkeeping, swimming
//!   speed, failure-regime classification, and flowrate diagnostics.
//!
//! Everything here is deterministic: no randomness, no threads, no iteration
//! orders that depend on hashing.  The crate is `no_std` (with `alloc`) so it
//! can be embedded; all I/O lives in the companion CLI crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod elastica;
pub mod geometry;
pub mod hydrodynamics;
pub mod magnetics;
pub mod math;

mod error;

pub use error::{Error, Result};
