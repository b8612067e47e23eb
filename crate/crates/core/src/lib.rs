//! Random billiard in a serrated wall of isosceles triangles.
//!
//! A particle bouncing inside a pipe with triangular roughness leaves each
//! cell along one of four directions, chosen at random according to where it
//! entered. This crate provides
//!
//! - [`map`]: the four exit maps, their probabilities and the kernel row;
//! - [`skew`]: the deterministic skew-product form of the random map and its
//!   cylinder sets;
//! - [`measure`]: exact evolution of atomic measures and distances to the
//!   sine law;
//! - [`ensemble`]: seeded, thread-count independent particle ensembles;
//! - [`oracle`]: a ray tracer for the cell, used to check the kernel;
//! - [`harness`]: the command-line experiments and their file formats.

pub mod ensemble;
pub mod error;
pub mod harness;
pub mod map;
pub mod measure;
pub mod oracle;
pub mod rng;
pub mod skew;
pub mod stats;

pub use error::{Error, Result};
pub use map::{Angle, Branch, KernelRow, MapParams};
pub use measure::{AtomicMeasure, Histogram, Interval};
