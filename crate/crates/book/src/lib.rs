//! The chapters of `book/` as doc modules, so `cargo test` runs every code
//! block in the book.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/projection.md")]
pub mod projection {}

#[doc = include_str!("../../../book/src/masks.md")]
pub mod masks {}

#[doc = include_str!("../../../book/src/diffusion.md")]
pub mod diffusion {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}

#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}
