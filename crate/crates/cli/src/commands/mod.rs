pub mod build;
pub mod embed_cache;
pub mod eval;
pub mod retrieve;
pub mod sweep;
pub mod synth;
