//! Simulation and bound verification for exponentially noise-to-state stable
//! (eNSS) stochastic systems `dx = f(x) dt + h(x) Σ(t) dω`.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the numerical
//! pieces: closed-form occupancy and crossing-time bounds ([`bounds`]), the
//! system description and generator evaluation ([`model`]), seeded
//! Euler–Maruyama integration ([`sim`]), loop extraction and statistical
//! comparison against the bounds ([`loops`]), and the dominated-coupling
//! samplers behind the strong laws used for crossing-time averages
//! ([`slln`]). File formats, configuration and the command line live in the
//! `nss-lab` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod error;
pub mod loops;
pub mod model;
pub mod sim;
pub mod slln;
pub mod stats;

pub use error::{Error, Result};
