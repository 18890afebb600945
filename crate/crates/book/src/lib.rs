//! Compiles and runs the code samples in `book/src` as doc-tests.
//! mdbook cannot link against workspace crates, rustdoc can.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/bound.md")]
pub mod bound {}

#[doc = include_str!("../../../book/src/posteriors.md")]
pub mod posteriors {}

#[doc = include_str!("../../../book/src/curvature.md")]
pub mod curvature {}

#[doc = include_str!("../../../book/src/landscape.md")]
pub mod landscape {}

#[doc = include_str!("../../../book/src/pareto.md")]
pub mod pareto {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
