pub mod desk;
pub mod dsl;
pub mod error;
pub mod game;
pub mod hamiltonian;
pub mod pde;
pub mod selectors;
pub mod set_value;
pub mod tree;

pub use error::{Error, ErrorClass, Result};
