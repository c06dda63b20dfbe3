//! The chapters of the book in `book/`, compiled so that `cargo test` runs
//! every listing as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/splines.md")]
pub mod splines {}

#[doc = include_str!("../../../book/src/control_tree.md")]
pub mod control_tree {}

#[doc = include_str!("../../../book/src/world.md")]
pub mod world {}

#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}

#[doc = include_str!("../../../book/src/planners.md")]
pub mod planners {}

#[doc = include_str!("../../../book/src/benchmarks.md")]
pub mod benchmarks {}
