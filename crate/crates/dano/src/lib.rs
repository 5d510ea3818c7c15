//! Dense statevector simulation and training for variational quantum
//! classifiers whose measurement side is trainable: fixed Pauli-Z readout
//! (VQC), trainable dense k-local Hermitian observables (ANO), and trainable
//! diagonal k-local observables paired with the circuit (DANO).
//!
//! The crate is organized around the pipeline:
//!
//! * [`sim`] — statevector engine: gates, marginals, reduced density matrices
//! * [`model`] — encoding, brickwork ansatz, observable families, forward pass
//! * [`grad`] — analytic, parameter-shift, and adjoint gradients
//! * [`train`] — losses, Adam, epoch loop, rescue protocol, evaluation
//! * [`data`] — IDX/PGM ingestion, pooling, PCA, splits, synthetic sets
//! * [`oracle`] — brute-force dense-matrix reference path and bound checks
//! * [`io`] — checkpoints, feature caches, digests, CSV schema
//! * [`cli`] — the `dano` binary's subcommands

pub mod cli;
pub mod data;
pub mod error;
pub mod grad;
pub mod io;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
