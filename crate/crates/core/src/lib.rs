//! Quantum Fisher information of two-mode probe states in a three-mode
//! ring-lattice rotation sensor, with and without particle loss.

pub mod error;
pub mod fock;
pub mod linalg;
pub mod loss;
pub mod protocol;
pub mod qfi;
pub mod states;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
