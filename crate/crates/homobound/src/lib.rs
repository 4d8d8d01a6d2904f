//! Sound piecewise-linear bounds on image pixel values under single-parameter
//! camera-pose perturbations (roll, pitch, yaw, and translations over a planar
//! scene), propagated through small feedforward ReLU networks to certify
//! robustness of a classification.
//!
//! Pipeline: [`geometry`] supplies closed-form inverse homographies, preimages
//! and analytic gradients; [`imaging`] evaluates the pixel curve G(kappa) via
//! bilinear interpolation with padding; [`bounds`] fits per-subdomain linear
//! segments and soundifies them with a Lipschitz branch-and-bound certificate;
//! [`verifier`] propagates the resulting per-pixel bounds through a network.

pub mod bounds;
pub mod cli;
pub mod geometry;
pub mod imaging;
mod interval;
pub mod verifier;

pub use interval::Interval;
