//! Design and simulation of multi-plane light converters (MPLC) acting on
//! spatially entangled photon pairs.
//!
//! The crate is layered bottom-up:
//!
//! * [`field`] sampled complex fields, Gaussian spot bases, overlaps
//! * [`propagation`] and [`mplc`] free-space propagation, phase masks and the
//!   forward model of a mask stack, transfer-matrix extraction
//! * [`wfm`] wavefront-matching mask design
//! * [`unitaries`] DFT and Haar-random target matrices
//! * [`twophoton`] two-photon states, coincidences and fidelities
//! * [`certification`] two-basis fidelity bound for entanglement dimension
//! * [`fiber`] LP modes of a step-index fiber
//! * [`experiments`] end-to-end runners used by the command line

pub mod bessel;
pub mod certification;
pub mod error;
pub mod experiments;
pub mod fiber;
pub mod field;
pub mod layout;
pub mod mplc;
pub mod propagation;
pub mod rng;
pub mod twophoton;
pub mod unitaries;
pub mod wfm;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used for transfer matrices, unitaries and states.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
