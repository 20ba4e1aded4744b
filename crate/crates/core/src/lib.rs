//! Watertight surface reconstruction from raw point clouds.
//!
//! The pipeline builds a multi-scale sparse voxel scaffold over the input
//! cloud, attaches compactly supported tensor-product basis functions to the
//! active voxels, and solves a closed-form Galerkin system balancing normal
//! alignment, Hessian regularization and point screening. The zero level set
//! of the solved implicit field is extracted with marching cubes on the
//! exactly rasterized integration domain.

pub mod basis;
pub mod cloud;
pub mod error;
pub mod extract;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod normals;
pub mod pipeline;
pub mod prior;
pub mod quadrature;
pub mod scaffold;
pub mod solver;
pub mod spatial;

pub use cloud::{OrientedPoint, PointCloud, Transform};
pub use error::Error;
pub use mesh::TriangleMesh;

/// 3D vector in world units (dimensionless after normalization).
pub type Vec3 = nalgebra::Vector3<f64>;
/// Symmetric 3x3 matrix (Hessians, covariances).
pub type Mat3 = nalgebra::Matrix3<f64>;

pub type Result<T> = std::result::Result<T, Error>;
