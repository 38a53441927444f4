//! Volterra-kernel algebra for convolutional networks.
//!
//! Convolutional networks with polynomial (Taylor-expanded) activations are
//! exactly Volterra operators. This crate builds and manipulates the kernels:
//!
//! - [`tensor`]: dense tensors, diagonal embedding, symmetrization, `VTEN` I/O.
//! - [`conv`]: order-n convolution, Volterra operators, flattening.
//! - [`outer`]: outer convolution and scalar-slot reduction.
//! - [`algebra`]: composing operators, layer combinators, property checks.
//! - [`netconv`]: activation expansions and network-to-operator conversion.
//! - [`hacking`]: least-squares order-one fits of black-box networks.
//! - [`perturb`]: perturbation bounds and crafted perturbations.
//! - [`rank`]: SVD, numerical rank and low-rank propagation experiments.

pub mod algebra;
pub mod conv;
pub mod error;
pub mod exec;
pub mod hacking;
pub mod linalg;
pub mod netconv;
pub mod outer;
pub mod perturb;
pub mod rank;
pub mod rng;
pub mod tensor;

pub use conv::{composed_geometry, conv_order_n, volterra_apply, Geometry, VolterraOperator};
pub use error::{Result, VolterraError};
pub use tensor::Tensor;
