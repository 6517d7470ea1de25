#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used deliberately so NaN falls into the rejection branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod analysis;
pub mod credit;
pub mod data;
pub mod error;
pub mod manifold;
pub mod nets;
pub mod numerics;
pub mod wp;

pub use error::{Error, Result};
