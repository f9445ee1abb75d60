//! Dense 3-order tensor algebra and the TensorProjection layer.
//!
//! The crate is organised bottom-up:
//!
//! * [`matrix`] and [`tensor`] hold column-major storage types and the
//!   mode-k unfolding, folding and k-mode product.
//! * [`structure`] materializes the Kronecker, commutation and
//!   mode-permutation matrices used by the reference gradient path.
//! * [`linalg`] provides the Jacobi symmetric eigensolver, the inverse
//!   square root of an SPD matrix and both Jacobians of `M ↦ M^{-1/2}`.
//! * [`projection`] is the layer itself: orthogonalizing
//!   reparameterization, forward pass and backward pass.
//! * [`gradcheck`] is the finite-difference oracle.
//!
//! All scalars are `f64`. Storage is column-major with the first index
//! varying fastest, so `vec` of a tensor is simply its backing slice.

pub mod error;
pub mod gemm;
pub mod gradcheck;
pub mod linalg;
pub mod matrix;
pub mod projection;
pub mod structure;
pub mod tensor;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use projection::{JacobianMode, LayerGradients, ProjectionConfig, TensorProjectionLayer};
pub use tensor::{Mode, Tensor3};
