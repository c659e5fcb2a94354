//! Runs the code in the guide under `book/` as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/classes.md")]
pub mod classes {}

#[doc = include_str!("../../../book/src/spectra.md")]
pub mod spectra {}

#[doc = include_str!("../../../book/src/functional.md")]
pub mod functional {}

#[doc = include_str!("../../../book/src/derivatives.md")]
pub mod derivatives {}

#[doc = include_str!("../../../book/src/extremal.md")]
pub mod extremal {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
