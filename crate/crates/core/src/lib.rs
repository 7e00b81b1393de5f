//! Streaming monocular 3D semantic occupancy at desk scale.
//!
//! The crate implements the full pipeline — soft-gated 2D→3D feature
//! lifting, ray-constrained anchor refinement, a tag-managed Gaussian
//! memory pool with hybrid confidence verification, identity-initialized
//! temporal fusion, and semantic-adaptive geometric regularization —
//! verified against a procedural indoor-scene simulator with analytic
//! depth, normal, semantic, and occupancy oracles.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`geometry`]: pinhole projection, poses, rays, voxel indexing
//! - [`scene`]: procedural rooms and their analytic ground truth
//! - [`lifter`]: depth-gated deformable feature lifting
//! - [`refiner`]: ray-constrained refinement and geometric regularization
//! - [`memory`]: the streaming Gaussian pool and its lifecycle
//! - [`fusion`]: temporal fusion, the two-phase schedule, gradient checks
//! - [`eval`]: pool decoding, SC-IoU / mIoU / boundary F1, grid formats
//! - [`config`] / [`pipeline`]: JSON-driven runs, ablations, artifacts
//! - [`acceptance`]: the end-to-end verification suite behind `check`

pub mod acceptance;
pub mod config;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod lifter;
pub mod memory;
pub mod par;
pub mod pgm;
pub mod pipeline;
pub mod refiner;
pub mod scene;
