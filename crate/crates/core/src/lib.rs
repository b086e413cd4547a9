//! Inverse design of photonic-crystal cavities.
//!
//! The crate covers the full chain from bulk band structures of a hexagonal
//! hole lattice, through an optimal cavity mode expressed in bulk Bloch modes,
//! to the defect dielectric that supports it, plus a finite-thickness slab
//! solver and a genetic optimizer for planar hole geometries.

pub mod bulk;
pub mod cli;
pub mod config;
pub mod defect;
pub mod error;
pub mod ga;
pub mod inverter;
pub mod lattice;
pub mod linalg;
pub mod objective;
pub mod pipeline;
pub mod planar;

pub use error::{Error, Result};
