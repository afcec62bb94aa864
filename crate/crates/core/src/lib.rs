//! Quantum-assisted topology optimization of discretized elastic structures:
//! finite-element assembly, block encodings of the stiffness matrix,
//! singular value filtering, amplitude estimation and Grover search over
//! material configurations.

pub mod blockenc;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod grover;
pub mod qae;
pub mod qsim;
pub mod qsvt;

pub use error::{Error, Result};
