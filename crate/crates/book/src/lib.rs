//! Compiles the guide under `book/src` so that every Rust snippet in it runs
//! as a doctest. One module per chapter keeps failures traceable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/reparameterization.md")]
pub mod reparameterization {}
#[doc = include_str!("../../../book/src/bethe.md")]
pub mod bethe {}
#[doc = include_str!("../../../book/src/bp.md")]
pub mod bp {}
#[doc = include_str!("../../../book/src/stationarity.md")]
pub mod stationarity {}
#[doc = include_str!("../../../book/src/saddles.md")]
pub mod saddles {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
