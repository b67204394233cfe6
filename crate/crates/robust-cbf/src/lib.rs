//! Minimum-norm safe control for a human agent with parameter-affine
//! dynamics and ball-bounded parametric uncertainty.
//!
//! The human moves as `ẋ_A = G(x_A, x_R)·θ + f(x_A, x_R)` and the robot is
//! velocity controlled, `ẋ_R = u`. Safety is a barrier condition
//! `h(x_A) ≥ 0` of relative degree two, enforced through
//! `ḧ + α·ḣ + β·h ≥ 0`. With θ only known to lie in a ball of radius η
//! around an estimate, the safe-control QP becomes a semi-infinite program;
//! this crate assembles its coefficients ([`constraint`]), reformulates it
//! exactly as a small SDP ([`sdp`], solved by an internal log-det barrier
//! method), and cross-checks every solve against independent machinery
//! ([`oracle`]: exact trust-region subproblems, cutting planes, dual
//! bounds, ball sampling). [`sim`] closes the loop with an RK4 integrator
//! and a set-membership parameter estimator.

pub mod constraint;
pub mod error;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sdp;
pub mod sim;

pub use error::Error;
