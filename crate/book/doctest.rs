// mdbook cannot test listings that use a workspace crate, so every chapter is
// pulled in as the docs of an empty module and `cargo test --doc` runs them.
// One module per chapter keeps failure names pointing at the right file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/quickstart.md")]
pub mod quickstart {}
#[doc = include_str!("src/noise.md")]
pub mod noise {}
#[doc = include_str!("src/operators.md")]
pub mod operators {}
#[doc = include_str!("src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("src/formats.md")]
pub mod formats {}
