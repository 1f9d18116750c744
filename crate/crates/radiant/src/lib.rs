//! Stationary radiative transfer coupled to the gas temperature on 3D
//! tetrahedral meshes.
//!
//! The solver works with the angular average of the radiative intensity,
//! which turns the transport problem into integral operators with
//! exponentially attenuated kernels. Those operators are discretized on the
//! P1 vertex basis of a tetrahedral mesh and compressed as hierarchical
//! matrices, so one transport sweep is a set of O(N log N) matrix-vector
//! products. Frequencies are grouped into bins of equal (quantized)
//! absorption so only one pair of compressed operators is needed per bin.
//! The temperature follows from a pointwise balance between absorbed and
//! emitted radiation, solved by a safeguarded Newton iteration inside a
//! monotone fixed-point loop.
//!
//! An independent 1D stratified-atmosphere solver built on exponential
//! integrals ([`stratified`]) provides reference profiles for validation.

pub mod absorption;
pub mod config;
pub mod hmat;
pub mod kernels;
pub mod mesh;
pub mod pipeline;
pub mod report;
pub mod rtsolve;
pub mod spectral;
pub mod stratified;
pub mod vtk;

pub use mesh::{box_mesh, load_mesh, save_mesh, slab_mesh, Mesh};
pub use spectral::{planck, planck_derivative, FrequencyGrid, SpectralTable};
pub use stratified::{expint, SlabProblem};
