//! The guide in `book/` as doc tests. mdbook cannot link against workspace
//! crates, so each chapter is included here and `cargo test` runs its code
//! blocks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/vehicle-model.md")]
pub mod vehicle_model {}
#[doc = include_str!("../../../book/src/disjunctions.md")]
pub mod disjunctions {}
#[doc = include_str!("../../../book/src/alpha-method.md")]
pub mod alpha_method {}
#[doc = include_str!("../../../book/src/transcription.md")]
pub mod transcription {}
#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver {}
#[doc = include_str!("../../../book/src/rollover.md")]
pub mod rollover {}
#[doc = include_str!("../../../book/src/synthesis.md")]
pub mod synthesis {}
#[doc = include_str!("../../../book/src/closed-loop.md")]
pub mod closed_loop {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
