//! Bound tightening and verification for dense feedforward networks.
//!
//! The crate centers on partial multi-neuron relaxation: starting from
//! single-neuron symbolic bound tightening (`sbt`), a small heuristically
//! selected group of unfixed activation neurons gets joint bounding
//! hyper-planes whose biases are optimized by a Lagrangian dual ascent
//! (`dual`), after which an LP-based forward/backward pass (`lp`) folds the
//! planes back into concrete per-neuron intervals. A compact complete
//! branch-and-bound verifier plus brute-force oracles (`verify`) sit on top.
//!
//! Module map:
//! - [`net`] — network / query data model, JSON formats, exact forward eval
//! - [`relax`] — per-activation linear relaxations and phase splits
//! - [`sbt`] — back-substitution based symbolic bound tightening
//! - [`dual`] — generalized dual lower bounds and projected gradient ascent
//! - [`lp`] — dense simplex, relaxed-LP encoding, forward/backward tightening
//! - [`pmnr`] — neuron selection, hyper-plane generation, the main loop
//! - [`verify`] — branch-and-bound verifier, exact oracles, benchmark harness

pub mod dual;
pub mod linalg;
pub mod lp;
pub mod net;
pub mod pmnr;
pub mod relax;
pub mod sbt;
pub mod verify;

pub use net::{ActivationKind, InputDomain, Layer, Network, Query};
pub use sbt::{BoundsState, SingleRelax};
pub use verify::{Verdict, VerdictStatus};
