//! Conditional autoregressive generation of 3d molecular structures.
//!
//! The crate trains a distance-based autoregressive model on molecules
//! annotated with target properties, samples novel 3d structures
//! atom-by-atom from property-conditioned distributions, and analyzes the
//! samples (validity, uniqueness, fingerprints, relative energies,
//! structural statistics).

pub mod analysis;
pub mod chem;
pub mod cli;
pub mod config;
pub mod generate;
pub mod geom;
pub mod model;
pub mod nn;
pub mod rng;
pub mod toyset;
pub mod train;
pub mod traj;
