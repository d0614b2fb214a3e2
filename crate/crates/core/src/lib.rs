//! Magnetic helicity shape analysis on voxelized domains.
//!
//! The crate discretizes bounded domains on a uniform staggered grid and
//! provides the chain of operators needed to study the helicity
//! isoperimetric quotient: rasterization and morphological ball-condition
//! estimates (`geometry`), divergence-free tangent field spaces with
//! harmonic/zero-flux splittings (`fieldspace`), the direct-summation
//! Biot-Savart operator and helicity form (`biotsavart`), dominant-eigenvalue
//! extraction for the energy-to-helicity ratio (`spectral`), flow maps and
//! field transport (`transform`), shape-variation property checks
//! (`framework`), and a constrained shape optimizer (`optimize`).
//!
//! All kernels are deterministic for a fixed seed: parallel loops only ever
//! split work such that each output element is accumulated sequentially, so
//! results do not depend on thread count.

pub mod biotsavart;
pub mod error;
pub(crate) mod exec;
pub mod fields;
pub mod fieldspace;
pub mod framework;
pub mod geometry;
pub mod io;
pub(crate) mod math;
pub mod optimize;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
pub use fieldspace::FaceField;
pub use geometry::grid::Grid;
pub use geometry::spec::DomainSpec;
pub use geometry::voxel::VoxelDomain;
