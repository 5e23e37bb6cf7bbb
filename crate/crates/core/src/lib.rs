//! Dense 3D reconstruction from a ring of stereo cameras.

pub mod error;
pub mod cli;
pub mod depth;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod posegraph;
pub mod registration;
pub mod spatial;
pub mod volume;

pub use error::{Error, Result};
