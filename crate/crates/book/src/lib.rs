//! Compiles every chapter of the guide as a doc comment so that
//! `cargo test --doc` runs its code listings against the current crate.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/kalman.md")]
pub mod kalman {}
#[doc = include_str!("../../../book/src/tempo-model.md")]
pub mod tempo_model {}
#[doc = include_str!("../../../book/src/particle-filter.md")]
pub mod particle_filter {}
#[doc = include_str!("../../../book/src/estimation.md")]
pub mod estimation {}
#[doc = include_str!("../../../book/src/clustering.md")]
pub mod clustering {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
