//! Classical simulation stack for digital quantum evolution of lossy two-leg
//! ladders.
//!
//! The crate covers the full pipeline one would run against hardware, plus the
//! exact references needed to validate it:
//!
//! * [`model`] — tight-binding ladder with on-site loss, Bloch form,
//!   Hermitian/anti-Hermitian split, Pauli decomposition.
//! * [`encoding`] — binary encoding of the fixed-particle-number sector.
//! * [`lcu`] — linear-combination-of-unitaries realizations of the
//!   non-unitary half step `exp(-H_A dt)`.
//! * [`circuit`] — gate-level IR: Pauli rotations, Trotter steps, LCU steps,
//!   gate folding and CX twirling.
//! * [`engine`] — dense statevector execution, exact or shot-sampled, with a
//!   stochastic Pauli + readout noise model.
//! * [`oracle`] — exact-diagonalization references (propagator, spectra,
//!   escape profiles).
//! * [`analysis`] — norm recovery and escape-probability reconstruction from
//!   engine output.
//! * [`mitigation`] — tensored readout calibration/inversion and zero-noise
//!   extrapolation with physical constraints.
//!
//! Shot trajectories, calibration batches, and parameter scans are
//! data-parallel; they run on rayon when the `parallel` feature (default) is
//! enabled and fall back to sequential iteration without it. Results are
//! collected in input order either way, so outputs are bit-identical across
//! thread counts.

pub mod analysis;
pub mod circuit;
pub mod encoding;
pub mod engine;
mod error;
pub mod lcu;
pub mod linalg;
pub mod mitigation;
pub mod model;
pub mod oracle;
pub mod par;
pub mod pauli;
pub mod qp;

pub use error::{Error, Result};
