#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use heurgen::config::RunConfig;
use heurgen::eval::{generate_instances, Evaluator};
use heurgen::evolve::{run_search, SearchOutcome, SearchServices};
use heurgen::heuristic::{Heuristic, HeuristicId, Origin};
use heurgen::llm::{corpus, LlmGateway, MockProvider, MockScript, TemplateStore};
use heurgen::task::{SolverParams, TaskId, TaskSpec};
use heurgen::worker::builtin::builtin_source;
use heurgen::worker::WorkerBridge;

pub fn quick_params() -> SolverParams {
    SolverParams {
        gls_rounds_train: 10,
        gls_rounds_test: 20,
        aco_ants: 5,
        aco_iterations: 5,
        parallelism: 2,
        ..SolverParams::default()
    }
}

pub fn seed_for(task: TaskId) -> Heuristic {
    let name = match task {
        TaskId::GlsTsp => "kgls_badness",
        TaskId::ConstructiveTsp => "nearest_neighbor",
        TaskId::AcoBpp => "demand_ratio",
        TaskId::AcoMkp => "value_per_weight",
    };
    let src = builtin_source(name, &[], task);
    Heuristic::new(HeuristicId(0), src, format!("builtin:{name}"), Origin::Seed, vec![], 0).unwrap()
}

/// Task with small generated train and test sets under `dir`.
pub fn small_task(task: TaskId, dir: &Path, size: usize) -> TaskSpec {
    let train = dir.join("train");
    let test = dir.join("test");
    generate_instances(task, 3, size, 1, &train).unwrap();
    generate_instances(task, 2, size, 2, &test).unwrap();
    let mut spec = TaskSpec::new(task, seed_for(task), train, test);
    spec.solver_params = quick_params();
    spec
}

pub fn run_with_script(cfg: &RunConfig, task: &TaskSpec, script: MockScript, journal: &Path) -> heurgen::Result<SearchOutcome> {
    let gateway = LlmGateway::new(Box::new(MockProvider::new(script)));
    let templates = TemplateStore::default();
    let evaluator = Evaluator::new(task.task_id, task.solver_params.clone(), Arc::new(WorkerBridge::builtin_only())).unwrap();
    let services = SearchServices {
        gateway: &gateway,
        templates: &templates,
        evaluator: &evaluator,
        provider_label: "mock".into(),
    };
    run_search(cfg, task, &services, journal)
}

pub fn run_demo(cfg: &RunConfig, task: &TaskSpec, journal: &Path) -> heurgen::Result<SearchOutcome> {
    run_with_script(cfg, task, corpus::demo_script(task.task_id), journal)
}
