// mdbook cannot run these listings itself, so each chapter becomes a module
// whose docs are the chapter text and `cargo test --doc -p ttg-book` runs them.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/graphs.md")]
pub mod graphs {}
#[doc = include_str!("src/reward.md")]
pub mod reward {}
#[doc = include_str!("src/search.md")]
pub mod search {}
#[doc = include_str!("src/answers.md")]
pub mod answers {}
#[doc = include_str!("src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("src/synthetic.md")]
pub mod synthetic {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
