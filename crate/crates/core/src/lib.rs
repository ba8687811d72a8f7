//! Best approximations in the reaction-diffusion norm
//! `|||v|||^2 = ||v||^2 + eps ||grad v||^2` on newest-vertex-bisection
//! meshes, and their localization to elements, pairs and minimal pairs.

pub mod approx;
pub mod dofs;
pub mod element;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod localization;
pub mod mesh;
pub mod quadrature;
pub mod sampling;
pub mod sparse;
pub mod target;
pub mod tree;

pub use approx::{BcMode, FEFunction, PatchFunction, RDContext};
pub use error::{Error, Result};
pub use mesh::{ElementId, FaceId, Mesh, MeshStats, Patch, PatchKind};
pub use target::TargetFunction;
