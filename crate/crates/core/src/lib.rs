//! Effective diffusion constants of lattice random walks in periodic,
//! reflection-antisymmetric drift environments.

pub mod env;
pub mod error;
pub mod lattice;
pub mod par;
pub mod perturb;
pub mod qcore;
pub mod verify;
pub mod walk;

pub use env::{DriftField, FieldDescriptor, HalfField, TorusShape, TransverseField, TransverseTorus};
pub use error::{Error, ErrorClass, Result};
pub use par::Exec;
