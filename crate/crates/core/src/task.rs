//! Heuristic-generation task definitions.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::Sense;
use crate::heuristic::Heuristic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    GlsTsp,
    AcoBpp,
    AcoMkp,
    ConstructiveTsp,
}

impl TaskId {
    pub const ALL: [TaskId; 4] = [
        TaskId::GlsTsp,
        TaskId::AcoBpp,
        TaskId::AcoMkp,
        TaskId::ConstructiveTsp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::GlsTsp => "gls_tsp",
            TaskId::AcoBpp => "aco_bpp",
            TaskId::AcoMkp => "aco_mkp",
            TaskId::ConstructiveTsp => "constructive_tsp",
        }
    }

    pub fn sense(self) -> Sense {
        match self {
            TaskId::AcoMkp => Sense::Maximize,
            _ => Sense::Minimize,
        }
    }

    /// Name of the function a candidate must define for this task.
    pub fn entry_function(self) -> &'static str {
        match self {
            TaskId::GlsTsp => "heuristics",
            TaskId::AcoBpp | TaskId::AcoMkp => "heuristic",
            TaskId::ConstructiveTsp => "select_next_node_score",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            TaskId::GlsTsp => {
                "guided local search on the Traveling Salesman Problem: the function scores how \
                 bad it is to include each edge in a tour, and the search penalizes the worst \
                 edges of each local optimum"
            }
            TaskId::AcoBpp => {
                "ant colony optimization on the Bin Packing Problem: the function scores how \
                 promising it is to put item i and item j in the same bin"
            }
            TaskId::AcoMkp => {
                "ant colony optimization on the Multiple Knapsack Problem: the function scores \
                 how desirable it is to include each item in the solution"
            }
            TaskId::ConstructiveTsp => {
                "constructive Traveling Salesman Problem solving: starting from a node, the \
                 function scores each unvisited candidate and the lowest score is visited next"
            }
        }
    }

    pub fn default_signature(self) -> &'static str {
        match self {
            TaskId::GlsTsp => {
                "def heuristics(distance_matrix: np.ndarray) -> np.ndarray\n\
                 # returns an n x n non-negative badness matrix"
            }
            TaskId::AcoBpp => {
                "def heuristic(demand: np.ndarray, capacity: int) -> np.ndarray\n\
                 # returns an n x n matrix; entry [i][j] is how promising it is to put item i \
                 and item j in the same bin"
            }
            TaskId::AcoMkp => {
                "def heuristic(prize: np.ndarray, weight: np.ndarray) -> np.ndarray\n\
                 # prize has shape (n,), weight has shape (m, n); returns a length-n \
                 non-negative desirability vector"
            }
            TaskId::ConstructiveTsp => {
                "def select_next_node_score(current_node: int, candidate_nodes: np.ndarray, \
                 distance_matrix: np.ndarray, start_node: int) -> np.ndarray\n\
                 # returns one score per candidate; the lowest score is visited next"
            }
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown task id `{s}`")))
    }
}

/// Engine parameters. Every value here is journaled with the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub gls_rounds_train: usize,
    pub gls_rounds_test: usize,
    pub gls_alpha: f64,
    pub aco_ants: usize,
    pub aco_iterations: usize,
    pub aco_rho: f64,
    pub aco_q: f64,
    pub solver_seed: u64,
    pub wall_seconds: f64,
    pub memory_bytes: u64,
    pub parallelism: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            gls_rounds_train: 200,
            gls_rounds_test: 1000,
            gls_alpha: 0.1,
            aco_ants: 20,
            aco_iterations: 50,
            aco_rho: 0.1,
            aco_q: 1.0,
            solver_seed: 0,
            wall_seconds: 10.0,
            memory_bytes: 512 * 1024 * 1024,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub sense: Sense,
    pub seed: Heuristic,
    pub train_instances: PathBuf,
    pub test_instances: PathBuf,
    pub candidate_signature: String,
    pub solver_params: SolverParams,
    /// Runtime tag assigned to LLM-emitted sources that carry no builtin directive.
    pub default_runtime: String,
}

impl TaskSpec {
    pub fn new(
        task_id: TaskId,
        seed: Heuristic,
        train_instances: impl Into<PathBuf>,
        test_instances: impl Into<PathBuf>,
    ) -> Self {
        TaskSpec {
            task_id,
            sense: task_id.sense(),
            seed,
            train_instances: train_instances.into(),
            test_instances: test_instances.into(),
            candidate_signature: task_id.default_signature().to_string(),
            solver_params: SolverParams::default(),
            default_runtime: "python".to_string(),
        }
    }

    /// Train and test sets must not share instance identifiers.
    pub fn check_disjoint(&self) -> Result<()> {
        let train = instance_ids(&self.train_instances)?;
        let test = instance_ids(&self.test_instances)?;
        let shared: Vec<_> = train.intersection(&test).cloned().collect();
        if !shared.is_empty() || same_dir(&self.train_instances, &self.test_instances) {
            return Err(Error::Config(format!(
                "train and test instance sets overlap: {shared:?}"
            )));
        }
        Ok(())
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Identifiers (file stems) of the instance files in a directory.
pub fn instance_ids(dir: &Path) -> Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = BTreeSet::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.insert(stem.to_string());
            }
        }
    }
    Ok(ids)
}
