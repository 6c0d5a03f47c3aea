//! Core algorithms for counting people in fixed-pole LiDAR captures.
//!
//! The crate is `no_std` (with `alloc`) and contains no IO: every stage of the
//! pipeline is a pure function over in-memory values. The `crowdcount` crate
//! layers file formats, timing and the command line on top.
//!
//! Stages, in pipeline order:
//!
//! - [`point`]: points, frames, ground removal and the region of interest.
//! - [`cluster`]: DBSCAN with a per-capture epsilon from the k-distance elbow,
//!   plus silhouette scoring.
//! - [`features`]: the 94-dimensional slice descriptor fed to the autoencoder.
//! - [`projection`]: fixed-size enlargement and the 18x18x6 three-view image
//!   fed to the CNN.
//! - [`nn`]: a small neural-network engine with Adam training.
//! - [`quant`]: post-training 8-bit affine quantization.
//! - [`sim`]: a ray-casting sensor simulator that produces labeled data.
//! - [`eval`]: metrics, clustering summaries and temperature analysis.
//! - [`pipeline`]: the end-to-end people counter.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cluster;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod pipeline;
pub mod point;
pub mod projection;
pub mod quant;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use point::{Frame, Point3, RoiConfig};
