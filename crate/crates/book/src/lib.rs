//! Doc-tests for the snippets in `book/src`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}
#[doc = include_str!("../../../book/src/tensors.md")]
pub mod tensors {}
#[doc = include_str!("../../../book/src/micro.md")]
pub mod micro {}
#[doc = include_str!("../../../book/src/macro.md")]
pub mod macro_systems {}
#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
