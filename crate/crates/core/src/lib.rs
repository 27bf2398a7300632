//! Sparse Pauli-Lindblad noise models for layers of two-qubit Clifford
//! gates: learning from decay benchmarks, quasi-probability inversion and
//! probabilistic error cancellation (PEC), with built-in noisy-circuit
//! simulators for end-to-end validation against injected ground truth.

pub mod bases;
pub mod circuit;
pub mod fitting;
pub mod learning;
pub mod lindblad;
pub mod pauli;
pub mod pec;
pub mod seed;
pub mod sim;

#[cfg(test)]
mod testutil;

pub use pauli::{GateKind, GateLayer, Letter, PauliString, SignedPauli, TwoQubitGate};
