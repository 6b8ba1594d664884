//! LLM-driven heuristic generation for combinatorial optimization.

pub mod cap;
pub mod config;
pub mod error;
pub mod eval;
pub mod evolve;
pub mod gain;
pub mod heuristic;
pub mod journal;
pub mod llm;
pub mod ppp;
pub mod task;
pub mod worker;

pub use error::{Error, Result};
