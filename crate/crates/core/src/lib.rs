pub mod embed;
pub mod eval;
pub mod retrieve;
pub mod synthgen;
pub mod tkg;
pub mod prompt;
