//! Measurement-based quantum computation on thermal spin ensembles.
//!
//! This crate simulates a family of spin models whose thermal states serve as
//! resources for measurement-based quantum computation while the interactions
//! stay switched on. Lattice sites host composite blocks: a central high spin
//! coupled isotropically to effective spin-1/2 halves living on the adjacent
//! bonds. The blocks commute, the spectrum of each block is harmonic, and the
//! dynamics revive periodically, which is what makes measurement rounds under
//! an always-on Hamiltonian possible.
//!
//! Module map:
//! - [`linalg`]: dense complex matrix helpers (kron, expm for Hermitian
//!   generators, Hermitian eigendecomposition).
//! - [`spin_algebra`]: spin operators, bond half-qubit algebras, projective
//!   spin-direction filters and the correction rotations attached to them.
//! - [`model_blocks`]: block Hamiltonians for the two lattice geometries,
//!   closed-form spectra, lattice adjacency descriptions.
//! - [`thermal_channel`]: Gibbs ensembles per block, the effective single-
//!   block error channel, Pauli-twirled syndrome extraction, temperature
//!   sweeps and the error-rate threshold solver.
//! - [`fusion_pipeline`]: symbolic Pauli/stabilizer bookkeeping plus a small
//!   factored statevector engine that reduces measured blocks to a cluster
//!   state with a classical Pauli frame.
//! - [`dynamics_scheduler`]: revival verification for the always-on evolution
//!   and a round scheduler that packs measurement operations into revival
//!   instants.
//! - [`cli`]: command-line entry points (`sweep`, `threshold`, `spectrum`,
//!   `demo`).

pub mod cli;
pub mod dynamics_scheduler;
pub mod fusion_pipeline;
pub mod linalg;
pub mod model_blocks;
pub mod spin_algebra;
pub mod thermal_channel;
