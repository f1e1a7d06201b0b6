//! Verification toolkit for small multi-layer perceptrons over bit-exact
//! Q16.16 fixed-point arithmetic.
//!
//! The crate checks neuron covering methods (sign-sign, distance-sign,
//! sign-value, distance-value) against coverage thresholds, searches for
//! adversarial inputs inside a euclidean ball with a two-phase incremental
//! engine, and emits the same problem as an SMT-LIB2 bit-vector formula.
//!
//! Network, kernel and covering code is generic over [`Scalar`]; the
//! verified carrier is [`Fx`], and `f64` serves as a high-precision
//! reference.

pub mod adversarial;
pub mod covering;
pub mod dataset;
pub mod error;
pub mod fixed;
pub mod format;
pub mod kernels;
pub mod network;
pub mod pgm;
pub mod scalar;
pub mod sigmoid;
pub mod smt;

pub use error::{Error, Result};
pub use fixed::Fx;
pub use kernels::{Activation, Matrix};
pub use network::{classify, ActivationTrace, ImageVec, Layer, Network};
pub use scalar::Scalar;

/// Fixed-point network, the verified object.
pub type FxNetwork = Network<Fx>;
pub type FxImage = ImageVec<Fx>;
pub type FxTrace = ActivationTrace<Fx>;
pub type FxMatrix = Matrix<Fx>;
/// Double-precision network used as an exact-logistic reference.
pub type RealNetwork = Network<f64>;
pub type RealImage = ImageVec<f64>;
pub type RealTrace = ActivationTrace<f64>;
