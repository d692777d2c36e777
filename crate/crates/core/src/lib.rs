//! Stylize user-placed primitives into furniture meshes and integrate them
//! into a captured NeRF dataset.

// `!(x > 0.0)` style checks deliberately reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod backends;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod geometry;
pub mod imaging;
pub mod integration;
pub mod jobs;
pub mod raster;
pub mod refgrid;

pub use error::{Error, Result};
