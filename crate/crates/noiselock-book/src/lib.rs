//! Compiles the chapters under `book/src` as rustdoc so that every code
//! block in the guide runs under `cargo test`. One module per chapter keeps
//! a failing snippet traceable to its file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/plant.md")]
pub mod plant {}

#[doc = include_str!("../../../book/src/error_signals.md")]
pub mod error_signals {}

#[doc = include_str!("../../../book/src/readout_chain.md")]
pub mod readout_chain {}

#[doc = include_str!("../../../book/src/stability.md")]
pub mod stability {}

#[doc = include_str!("../../../book/src/closed_loop.md")]
pub mod closed_loop {}

#[doc = include_str!("../../../book/src/configuration.md")]
pub mod configuration {}

#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}
