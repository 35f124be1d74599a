//! Guide chapters, included so their code blocks run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/sensitivity.md")]
pub mod sensitivity {}

#[doc = include_str!("../../../book/src/similitude.md")]
pub mod similitude {}

#[doc = include_str!("../../../book/src/identification.md")]
pub mod identification {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
