//! Exact truncation eigenstates of conditionally solvable oscillators and the
//! variational spectra they sit on.

pub mod cli;
pub mod error;
pub mod models;
pub mod moments;
pub mod quadrature;
pub mod truncation;
pub mod ttrr;
pub mod variational;

pub use error::{Error, Result};
