//! Geometry kernels and batch pipelines for refining raw triangle meshes
//! into training-ready 3D assets: watertight reconstruction, hybrid
//! point/SDF sampling, quality filters, part decomposition, ID-mask
//! rendering, dataset bookkeeping and a mock-testable synthesis pipeline.

pub mod bvh;
pub mod dataset;
pub mod filtering;
pub mod io;
pub mod mesh;
pub mod parts;
pub mod pts;
pub mod raster;
pub mod sampling;
pub mod shapes;
pub mod synth;
pub mod watertight;
pub mod winding;

pub use mesh::{Aabb, SimilarityTransform, TriangleMesh, Vec3};
