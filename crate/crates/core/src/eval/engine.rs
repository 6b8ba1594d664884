//! Fitness of a heuristic over an instance set.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::aco::{aco_bpp_solve, aco_mkp_solve, AcoParams};
use super::constructive::constructive_tsp_solve;
use super::gls::gls_tsp_solve;
use super::instances::{Instance, InstanceSet};
use crate::error::{Error, Result};
use crate::gain::Sense;
use crate::heuristic::{FitnessRecord, Heuristic};
use crate::task::{SolverParams, TaskId};
use crate::worker::{HeuristicInput, HeuristicOutput, Limits, Matrix, WorkerBridge};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub record: FitnessRecord,
    /// Mean raw objective; `None` on failure.
    pub raw_objective: Option<f64>,
    pub failure: Option<String>,
    /// Negative output entries clamped to zero, over all instances.
    pub clamped: usize,
    pub per_instance: Vec<f64>,
}

/// Task-shaped candidate input for one instance. Constructive TSP inputs
/// are built per step by the solver.
pub fn heuristic_input(task: TaskId, instance: &Instance) -> Result<HeuristicInput> {
    match (task, instance) {
        (TaskId::GlsTsp, Instance::Tsp(t)) => Ok(HeuristicInput::GlsTsp {
            distance: Arc::clone(&t.distance),
        }),
        (TaskId::ConstructiveTsp, Instance::Tsp(t)) => Ok(HeuristicInput::ConstructiveTsp {
            distance: Arc::clone(&t.distance),
            current: 0,
            candidates: (1..t.n()).collect(),
            start: 0,
        }),
        (TaskId::AcoBpp, Instance::Bpp(b)) => Ok(HeuristicInput::AcoBpp {
            demand: b.demands.iter().map(|&d| d as f64).collect(),
            capacity: b.capacity as f64,
        }),
        (TaskId::AcoMkp, Instance::Mkp(k)) => Ok(HeuristicInput::AcoMkp {
            prize: k.values.clone(),
            weight: Matrix::from_fn(k.m(), k.n(), |i, j| k.weights.get(i, j) / k.capacities[i]),
        }),
        _ => Err(Error::Config(format!("instance kind does not match task {task}"))),
    }
}

pub struct Evaluator {
    task: TaskId,
    sense: Sense,
    params: SolverParams,
    bridge: Arc<WorkerBridge>,
    pool: rayon::ThreadPool,
}

impl Evaluator {
    pub fn new(task: TaskId, params: SolverParams, bridge: Arc<WorkerBridge>) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.parallelism.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Evaluator {
            task,
            sense: task.sense(),
            params,
            bridge,
            pool,
        })
    }

    pub fn bridge(&self) -> &WorkerBridge {
        &self.bridge
    }

    fn limits(&self) -> Limits {
        Limits {
            wall_seconds: self.params.wall_seconds,
            memory_bytes: self.params.memory_bytes,
        }
    }

    fn aco_params(&self, index: usize) -> AcoParams {
        AcoParams {
            ants: self.params.aco_ants,
            iterations: self.params.aco_iterations,
            rho: self.params.aco_rho,
            q: self.params.aco_q,
            seed: self.params.solver_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        }
    }

    /// Raw objective of `h` on one instance, plus the clamped-entry count.
    pub fn evaluate_on_instance(
        &self,
        h: &Heuristic,
        instance: &Instance,
        index: usize,
        split: Split,
    ) -> std::result::Result<(f64, usize), String> {
        let limits = self.limits();
        let input = heuristic_input(self.task, instance).map_err(|e| e.to_string())?;
        let call = |input: &HeuristicInput| {
            self.bridge
                .execute_candidate(h, input, limits)
                .map_err(|f| f.to_string())
        };
        match (self.task, instance) {
            (TaskId::GlsTsp, Instance::Tsp(t)) => {
                let out = call(&input)?;
                let HeuristicOutput::Matrix(badness) = out.output else {
                    return Err("expected a matrix".into());
                };
                let rounds = match split {
                    Split::Train => self.params.gls_rounds_train,
                    Split::Test => self.params.gls_rounds_test,
                };
                let r = gls_tsp_solve(&t.distance, &badness, rounds, self.params.gls_alpha);
                Ok((r.length, out.clamped))
            }
            (TaskId::ConstructiveTsp, Instance::Tsp(t)) => {
                let (len, _) = constructive_tsp_solve(&t.distance, 0, |current, candidates| {
                    let q = HeuristicInput::ConstructiveTsp {
                        distance: Arc::clone(&t.distance),
                        current,
                        candidates: candidates.to_vec(),
                        start: 0,
                    };
                    match call(&q)?.output {
                        HeuristicOutput::Scores(s) => Ok(s),
                        _ => Err("expected scores".to_string()),
                    }
                })?;
                Ok((len, 0))
            }
            (TaskId::AcoBpp, Instance::Bpp(b)) => {
                let out = call(&input)?;
                let HeuristicOutput::Matrix(m) = out.output else {
                    return Err("expected a matrix".into());
                };
                let s = aco_bpp_solve(b, &m, &self.aco_params(index));
                Ok((s.bins_used() as f64, out.clamped))
            }
            (TaskId::AcoMkp, Instance::Mkp(k)) => {
                let out = call(&input)?;
                let HeuristicOutput::Vector(v) = out.output else {
                    return Err("expected a vector".into());
                };
                let s = aco_mkp_solve(k, &v, &self.aco_params(index));
                Ok((s.value, out.clamped))
            }
            _ => Err(format!("instance kind does not match task {}", self.task)),
        }
    }

    /// Mean raw objective over `set`, canonicalized. Any instance failure
    /// makes the whole record the failure sentinel.
    pub fn evaluate_heuristic(&self, h: &Heuristic, set: &InstanceSet, split: Split, iteration: u32) -> Evaluation {
        let started = Instant::now();
        let results: Vec<std::result::Result<(f64, usize), String>> = self.pool.install(|| {
            set.entries
                .par_iter()
                .enumerate()
                .map(|(i, (_, inst))| self.evaluate_on_instance(h, inst, i, split))
                .collect()
        });
        let seconds = started.elapsed().as_secs_f64();
        let mut per_instance = Vec::with_capacity(results.len());
        let mut clamped = 0;
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok((v, c)) if v.is_finite() => {
                    per_instance.push(v);
                    clamped += c;
                }
                Ok((v, _)) => return self.failure(format!("instance {}: objective {v}", set.entries[i].0), seconds, iteration),
                Err(e) => return self.failure(format!("instance {}: {e}", set.entries[i].0), seconds, iteration),
            }
        }
        if per_instance.is_empty() {
            return self.failure("empty instance set".into(), seconds, iteration);
        }
        let raw = per_instance.iter().sum::<f64>() / per_instance.len() as f64;
        Evaluation {
            record: FitnessRecord::evaluated(self.sense.canonical(raw), seconds, iteration),
            raw_objective: Some(raw),
            failure: None,
            clamped,
            per_instance,
        }
    }

    fn failure(&self, reason: String, seconds: f64, iteration: u32) -> Evaluation {
        Evaluation {
            record: FitnessRecord::failed(seconds, iteration),
            raw_objective: None,
            failure: Some(reason),
            clamped: 0,
            per_instance: Vec::new(),
        }
    }
}
