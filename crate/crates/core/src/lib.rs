//! Building abstractions, their procedural prior, point-cloud rendering, the
//! token codec with grammar-constrained decoding, datasets and metrics.

// `!(x > 0.0)` is the house style for rejecting NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod dataset;
pub mod decode;
pub mod geometry;
pub mod metrics;
pub mod prior;
pub mod render;
pub mod schema;
pub mod seed;
