//! Pulse-level simulation of a Josephson phase qubit treated as a driven
//! three-level system.
//!
//! The crate is `no_std` (with `alloc`) and holds only the numerics: the
//! level model and Hamiltonian ([`system`]), drive envelopes and spectra
//! ([`pulses`]), the room-temperature control chain ([`sigchain`]), the
//! Lindblad integrator ([`dynamics`]), the tunneling readout ([`readout`]) and
//! the measurement protocols built on top of them ([`experiments`]). File
//! formats and the command-line runner live in the `phaseq` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod fit;
pub mod linalg;
pub mod optimize;
pub mod pulses;
pub mod readout;
pub mod sigchain;
pub mod system;
pub mod waveform;

pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
