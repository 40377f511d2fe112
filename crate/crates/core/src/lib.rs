pub mod dirichlet;
pub mod fusion;
pub mod lattice;
mod multilevel;
pub mod nifti;
pub mod phantom;
pub mod propagation;
pub mod sparse;
pub mod volume;
