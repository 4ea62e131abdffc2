//! Guide listings.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/filter-loop.md")]
pub mod filter_loop {}

#[doc = include_str!("../../../book/src/likelihood.md")]
pub mod likelihood {}

#[doc = include_str!("../../../book/src/resampling.md")]
pub mod resampling {}

#[doc = include_str!("../../../book/src/distributed.md")]
pub mod distributed {}

#[doc = include_str!("../../../book/src/load-balancing.md")]
pub mod load_balancing {}

#[doc = include_str!("../../../book/src/transport.md")]
pub mod transport {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}

#[doc = include_str!("../../../book/src/memory.md")]
pub mod memory {}
