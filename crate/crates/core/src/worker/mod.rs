//! Candidate execution: native builtins and subprocess workers.

mod bridge;
pub mod builtin;
pub mod protocol;

pub use bridge::{FailureKind, WorkerBridge, WorkerFailure, WorkerRegistration};
pub use builtin::{list_builtin_heuristics, BuiltinInfo, BuiltinRegistry};
pub use protocol::{HeuristicInput, HeuristicOutput, Limits, Matrix};
