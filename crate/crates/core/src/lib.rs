//! Geometry kernels for studying collapse at infinity of complete four-manifolds.
//!
//! Everything here is `no_std` (with `alloc`). Model metrics, Christoffel symbols and
//! curvature live in [`manifold`] and [`models`]; geodesic machinery in [`geodesics`];
//! the local pseudo-group of a lifted ball in [`pseudo_group`]; growth and decay
//! statistics in [`asymptotics`]; the Gromov–Hausdorff chart and smoothed fibration in
//! [`fibration`].
//!
//! Points are stored in fixed four-component vectors; three-dimensional models leave
//! the last slot at zero and keep the padded block of every matrix at the identity.
#![no_std]
#![allow(
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::neg_cmp_op_on_partial_ord
)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod asymptotics;
pub mod error;
pub mod exec;
pub mod fibration;
pub mod geodesics;
pub mod linalg;
pub mod manifold;
pub mod models;
pub mod ode;
pub mod pseudo_group;
pub mod zoo;

pub use error::GeomError;
pub use linalg::{M4, V4};
pub use manifold::{ChartPoint, MetricField, Model, TangentVec};

pub type Result<T> = core::result::Result<T, GeomError>;
