//! Neural-network output layer with hard convex constraints.
//!
//! The layer maps an unconstrained pair `(r, s)` to
//! `p + sigmoid(s) * alpha(r) * r`, where `p` is a strictly interior point of
//! the feasible set and `alpha(r)` is the exact distance along `r` to the
//! boundary. Outputs satisfy every constraint for every finite input.
//!
//! Modules:
//!
//! - [`constraint`]: linear and convex quadratic inequality sets, ray bounds,
//!   feasibility tests, interior-point search
//! - [`equality`]: elimination of `Q x = e` by `x = R w + u`
//! - [`layer`]: the layer itself, its gradients, central projection and the
//!   boundary map
//! - [`joint`]: input-dependent constraint sets
//! - [`net`], [`adam`], [`objective`]: a small dense network, its optimizer and
//!   the losses used to train it
//! - [`schema`]: JSON documents for constraint sets

pub mod adam;
pub mod constraint;
pub mod equality;
pub mod error;
pub mod joint;
pub mod layer;
pub mod net;
pub mod objective;
pub mod schema;

pub use adam::{AdamConfig, AdamState};
pub use constraint::{
    eval_constraint, Constraint, ConstraintId, ConstraintSet, LinearConstraint,
    QuadraticConstraint, RayBound,
};
pub use equality::{EqualityReduction, EqualitySystem};
pub use error::{Error, Result};
pub use joint::{JointConstraintSet, SpecializationCache};
pub use layer::{sigmoid, sigmoid_derivative, BoundPolicy, HardLayer};
pub use net::{Activation, DenseNet, NetGradients};
pub use objective::{Objective, ObjectiveSpec, PNorm};
pub use schema::ConstraintSetSpec;
