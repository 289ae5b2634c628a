//! Tensors, permutations, deterministic randomness and the assignment solver.

pub mod lap;
pub mod perm;
pub mod rng;
pub mod tensor;

pub use lap::{lap_solve, Assignment, Sense};
pub use perm::Permutation;
pub use rng::Rng;
pub use tensor::{sigmoid, Tensor};
