//! Conventional fitness evaluation: instances, solvers and the evaluator.

pub mod aco;
pub mod constructive;
pub mod engine;
pub mod exact;
pub mod gls;
pub mod instances;
pub mod tsplib;

pub use aco::{aco_bpp_solve, aco_mkp_solve, AcoParams};
pub use constructive::constructive_tsp_solve;
pub use engine::{heuristic_input, Evaluation, Evaluator, Split};
pub use exact::exact_tsp_oracle;
pub use gls::gls_tsp_solve;
pub use instances::{generate_instances, Instance, InstanceSet};
pub use tsplib::load_tsplib;
