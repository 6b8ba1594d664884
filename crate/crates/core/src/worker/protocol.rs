//! Line-delimited JSON protocol between the bridge and external workers.
//!
//! On start a worker writes one capability line:
//!
//! ```text
//! {"capabilities":["gls_tsp","aco_bpp","aco_mkp","constructive_tsp"]}
//! ```
//!
//! Each request is one line and receives exactly one response line echoing
//! its `request_id`. Matrices are row-major flat arrays with explicit
//! dimensions. See `docs/worker-protocol.md` for payload shapes per task.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::task::TaskId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_consistent(&self) -> bool {
        self.data.len() == self.rows * self.cols
    }
}

/// Task-shaped numeric input handed to a candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum HeuristicInput {
    GlsTsp {
        distance: Arc<Matrix>,
    },
    AcoBpp {
        demand: Vec<f64>,
        capacity: f64,
    },
    /// Weights are `m x n`, pre-divided by each constraint's capacity.
    AcoMkp {
        prize: Vec<f64>,
        weight: Matrix,
    },
    ConstructiveTsp {
        distance: Arc<Matrix>,
        current: usize,
        candidates: Vec<usize>,
        start: usize,
    },
}

impl HeuristicInput {
    pub fn task_id(&self) -> TaskId {
        match self {
            HeuristicInput::GlsTsp { .. } => TaskId::GlsTsp,
            HeuristicInput::AcoBpp { .. } => TaskId::AcoBpp,
            HeuristicInput::AcoMkp { .. } => TaskId::AcoMkp,
            HeuristicInput::ConstructiveTsp { .. } => TaskId::ConstructiveTsp,
        }
    }

    /// Decodes a flat payload object; the shape is selected by `task`.
    pub fn decode(task: TaskId, payload: Value) -> serde_json::Result<Self> {
        #[derive(Deserialize)]
        struct Gls {
            distance: Matrix,
        }
        #[derive(Deserialize)]
        struct Bpp {
            demand: Vec<f64>,
            capacity: f64,
        }
        #[derive(Deserialize)]
        struct Mkp {
            prize: Vec<f64>,
            weight: Matrix,
        }
        #[derive(Deserialize)]
        struct Ctsp {
            distance: Matrix,
            current: usize,
            candidates: Vec<usize>,
            start: usize,
        }
        Ok(match task {
            TaskId::GlsTsp => {
                let g: Gls = serde_json::from_value(payload)?;
                HeuristicInput::GlsTsp {
                    distance: Arc::new(g.distance),
                }
            }
            TaskId::AcoBpp => {
                let b: Bpp = serde_json::from_value(payload)?;
                HeuristicInput::AcoBpp {
                    demand: b.demand,
                    capacity: b.capacity,
                }
            }
            TaskId::AcoMkp => {
                let m: Mkp = serde_json::from_value(payload)?;
                HeuristicInput::AcoMkp {
                    prize: m.prize,
                    weight: m.weight,
                }
            }
            TaskId::ConstructiveTsp => {
                let c: Ctsp = serde_json::from_value(payload)?;
                HeuristicInput::ConstructiveTsp {
                    distance: Arc::new(c.distance),
                    current: c.current,
                    candidates: c.candidates,
                    start: c.start,
                }
            }
        })
    }

    /// Number of items (nodes) the output must be shaped for.
    pub fn size(&self) -> usize {
        match self {
            HeuristicInput::GlsTsp { distance } => distance.rows,
            HeuristicInput::AcoBpp { demand, .. } => demand.len(),
            HeuristicInput::AcoMkp { prize, .. } => prize.len(),
            HeuristicInput::ConstructiveTsp { candidates, .. } => candidates.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicOutput {
    Matrix(Matrix),
    Vector(Vec<f64>),
    Scores(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeChecked {
    pub output: HeuristicOutput,
    /// Number of negative entries clamped to zero.
    pub clamped: usize,
}

impl HeuristicOutput {
    /// Verifies shape and finiteness against the input; clamps negative
    /// matrix/vector entries to zero. Scores are left as-is.
    pub fn check(self, input: &HeuristicInput) -> Result<ShapeChecked, String> {
        let n = input.size();
        let (values, clamp) = match (&self, input) {
            (HeuristicOutput::Matrix(m), HeuristicInput::GlsTsp { .. })
            | (HeuristicOutput::Matrix(m), HeuristicInput::AcoBpp { .. }) => {
                if m.rows != n || m.cols != n || !m.is_consistent() {
                    return Err(format!(
                        "expected {n}x{n} matrix, got {}x{} with {} entries",
                        m.rows,
                        m.cols,
                        m.data.len()
                    ));
                }
                (&m.data, true)
            }
            (HeuristicOutput::Vector(v), HeuristicInput::AcoMkp { .. }) => {
                if v.len() != n {
                    return Err(format!("expected vector of length {n}, got {}", v.len()));
                }
                (v, true)
            }
            (HeuristicOutput::Scores(v), HeuristicInput::ConstructiveTsp { .. }) => {
                if v.len() != n {
                    return Err(format!("expected {n} scores, got {}", v.len()));
                }
                (v, false)
            }
            _ => {
                return Err(format!(
                    "output kind does not match task {}",
                    input.task_id()
                ))
            }
        };
        if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
            return Err(format!("non-finite entry {bad}"));
        }
        let negatives = if clamp {
            values.iter().filter(|&&x| x < 0.0).count()
        } else {
            0
        };
        let mut output = self;
        if negatives > 0 {
            match &mut output {
                HeuristicOutput::Matrix(m) => m.data.iter_mut().for_each(|x| *x = x.max(0.0)),
                HeuristicOutput::Vector(v) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
                HeuristicOutput::Scores(_) => {}
            }
        }
        Ok(ShapeChecked {
            output,
            clamped: negatives,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub wall_seconds: f64,
    pub memory_bytes: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            wall_seconds: 10.0,
            memory_bytes: 512 * 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkerRequest<'a> {
    pub request_id: String,
    pub task_id: TaskId,
    pub entry_function: &'static str,
    pub source: &'a str,
    pub payload: &'a HeuristicInput,
    pub limits: Limits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerStatus {
    Ok,
    Error,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerResponse {
    pub request_id: String,
    pub status: WorkerStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<HeuristicOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub capabilities: Vec<TaskId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn negative_entries_clamped() {
        let input = HeuristicInput::AcoMkp {
            prize: vec![1.0, 2.0],
            weight: Matrix::zeros(1, 2),
        };
        let c = HeuristicOutput::Vector(vec![-1.0, 2.0]).check(&input).unwrap();
        assert_eq!(c.clamped, 1);
        assert_eq!(c.output, HeuristicOutput::Vector(vec![0.0, 2.0]));
    }

    #[test]
    fn shape_and_finiteness_enforced() {
        let input = HeuristicInput::GlsTsp {
            distance: Arc::new(Matrix::zeros(3, 3)),
        };
        assert!(HeuristicOutput::Matrix(Matrix::zeros(2, 2)).check(&input).is_err());
        assert!(HeuristicOutput::Vector(vec![0.0; 3]).check(&input).is_err());
        let mut m = Matrix::zeros(3, 3);
        m.set(1, 1, f64::NAN);
        assert!(HeuristicOutput::Matrix(m).check(&input).is_err());
    }

    #[test]
    fn scores_keep_sign() {
        let input = HeuristicInput::ConstructiveTsp {
            distance: Arc::new(Matrix::zeros(3, 3)),
            current: 0,
            candidates: vec![1, 2],
            start: 0,
        };
        let c = HeuristicOutput::Scores(vec![-1.0, 1.0]).check(&input).unwrap();
        assert_eq!(c.clamped, 0);
        assert_eq!(c.output, HeuristicOutput::Scores(vec![-1.0, 1.0]));
    }

    proptest! {
        #[test]
        fn payload_numbers_roundtrip(data in proptest::collection::vec(-1e6f64..1e6, 9)) {
            let input = HeuristicInput::GlsTsp {
                distance: Arc::new(Matrix { rows: 3, cols: 3, data: data.clone() }),
            };
            let line = serde_json::to_string(&input).unwrap();
            let back = HeuristicInput::decode(TaskId::GlsTsp, serde_json::from_str(&line).unwrap()).unwrap();
            prop_assert_eq!(back, input);
        }
    }
}
