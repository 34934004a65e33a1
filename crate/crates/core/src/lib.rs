//! Reconstruction of a free-moving rigid object from a masked monocular RGB
//! sequence with unknown per-frame poses.
//!
//! The pipeline optimizes an implicit SDF representation together with a
//! per-frame pose network against a mask-guided virtual camera, converts the
//! virtual poses back to the real camera with RANSAC-EPnP, and refines
//! globally. Surfaces are extracted with marching cubes and scored with
//! trajectory and mesh metrics.

pub mod autodiff;
pub mod config;
pub mod dataio;
pub mod eval;
pub mod exec;
pub mod fields;
pub mod geometry;
pub mod meshing;
pub mod pnp;
pub mod renderer;
pub mod trainer;
