//! Simulation kernels for single-photon steering experiments.
//!
//! The crate models the optical preparation of a path-polarization
//! entangled photon, projective and null-result measurements with collapse,
//! steering assemblages with CHSH and local-hidden-state analysis, the
//! Elitzur-Vaidman interaction-free measurement, the Stern-Gerlach
//! entangled-wavepacket state, and a seeded Monte Carlo protocol in which
//! Alice tries to convince Bob they share entanglement.
//!
//! All values are immutable after construction; every operation is a pure
//! function of its inputs (randomness enters only through explicitly passed
//! per-trial generators), so concurrent trial workers need no coordination.

pub mod error;
pub mod measure;
pub mod optics;
pub mod protocol;

pub mod qstate;
pub mod steering;
pub mod sterngerlach;
pub mod rng;



pub use error::{CoreError, Result};
pub use qstate::{
    expectation, fidelity, pure_fidelity, BasisLabel, DensityOp, LabeledState, Oam, Observable,
    Path, PhotonLabel, Pol, QValue, Role, Spin, C64,
};
