//! Crossing-preserving, cusp-free geodesic tracking of curvilinear structures
//! on flat (M2) and spherical (W2) images.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eikonal;
pub mod error;
pub mod grid;
pub mod io;
pub mod lifting;
pub mod manifold;
pub mod metric;
pub mod oracle;
pub mod phantom;
pub mod pipeline;
pub mod projection;
pub mod tracking;

pub use error::{Error, Result};
