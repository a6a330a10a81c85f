//! Simulation toolkit for molecular spin qubit/qudit systems.
//!
//! The crate covers the full pipeline from Hamiltonian construction to Bell
//! inequality evaluation:
//!
//! * [`qspace`] — operator algebra on composite spin Hilbert spaces,
//! * [`model`] — the electro-nuclear dimer and the three-spin trimer models,
//! * [`dynamics`] — unitary and Lindblad (pure-dephasing) propagation,
//! * [`pulses`] — compilation of planar rotations and entangling sequences
//!   into resonant square pulses, plus the SU(4) rotation decomposition,
//! * [`grape`] — gradient-ascent pulse engineering for target unitaries,
//! * [`bell`] — CHSH and CGLMP inequality machinery,
//! * [`harness`] — config-driven experiment runs, sweeps and persistence.

pub mod bell;
pub mod dynamics;
pub mod grape;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod opt;
pub mod pulses;
pub mod qspace;

pub use linalg::{CMat, CVec, C64};
pub use model::{DimerParams, HamiltonianModel, TrimerParams};
pub use qspace::{QState, SpinSystem};
