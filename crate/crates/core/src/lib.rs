// NaN must fail range checks, so `!(x > 0.0)` is used on purpose; dense
// elimination loops read best with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fields;
pub mod filters;
pub mod geom3;
pub mod harness;
pub mod integrators;
pub mod reference;

pub use error::{Error, Result};
pub use geom3::{Mat3, Vec3};
