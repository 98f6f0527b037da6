//! Data-efficient 3D scene parsing at desk scale.
//!
//! The crate implements the full pseudo-label harvesting pipeline for sparse
//! point annotations on scene meshes:
//!
//! - [`scene`] - PLY mesh and label-file ingestion, validation, persistence.
//! - [`transforms`] - random viewpoint transformations and farthest point
//!   sampling.
//! - [`vb`] - the viewpoint-bottleneck self-supervised loss, its analytic
//!   gradient, a per-point MLP reference encoder with dropout, and the
//!   pretraining / fine-tuning loops.
//! - [`geometry`] - quadric decimation, normal estimation, heat-method and
//!   Dijkstra geodesics, angular distances and the combined metric.
//! - [`spectral`] - normalized affinities, a Lanczos top-k eigensolver,
//!   spectral embedding and seeded k-means.
//! - [`mixture`] - two-component gamma/beta/joint mixtures fitted by EM and
//!   the reliable-component posterior.
//! - [`pipeline`] - MC-dropout uncertainty, pseudo-label harvesting,
//!   segmentation metrics and the end-to-end stage runner.
//! - [`synth`] - synthetic meshes and scenes for tests and demos.

pub mod error;
pub mod geometry;
pub mod mixture;
pub mod pipeline;
pub mod scene;
pub mod seed;
pub mod spectral;
pub mod synth;
pub mod transforms;
pub mod vb;

pub use error::{Error, Result};
