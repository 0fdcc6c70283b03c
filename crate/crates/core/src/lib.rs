//! Numerical tools for the vectorial Allen–Cahn–Hilliard energy on flat tori.
//!
//! Modules follow the pipeline: multi-well [`potential`]s, their surface
//! [`tension`]s, the phase-field energy and its critical points in
//! [`field`], sharp-interface [`cluster`]s, Modica–Baldo [`recovery`]
//! sequences, and the [`photography`] map back from low energy.

pub mod cluster;
pub mod error;
pub mod experiments;
pub mod field;
pub mod io;
pub mod photography;
pub mod potential;
pub mod recovery;
pub mod rng;
pub mod tension;

pub use error::{Error, Result};
