//! Append-only run journal: one JSON event per line.
//!
//! ```text
//! {"seq":0,"timestamp":1700000000000,"iteration":0,"kind":"run_started","payload":{...}}
//! ```
//!
//! `timestamp` and every `eval_seconds` field are wall-clock dependent and
//! masked when journals are compared.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cap::{CoreComponentSet, SearchDirection};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::heuristic::{Heuristic, HeuristicId};
use crate::llm::{ExchangeUsage, UsageTotals};
use crate::ppp::{ExampleSet, Prediction};
use crate::task::TaskSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEvent {
    pub seq: u64,
    pub timestamp: u64,
    pub iteration: u32,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum EventPayload {
    RunStarted {
        config: RunConfig,
        config_digest: String,
        task: TaskSpec,
        provider: String,
        horizon: u32,
    },
    PopulationInitialized {
        population: Vec<HeuristicId>,
        dropped: usize,
        exchanges: Vec<ExchangeUsage>,
    },
    ParentsSelected {
        probabilities: Vec<(HeuristicId, f64)>,
        uniform: bool,
        pairs: Vec<(HeuristicId, HeuristicId)>,
        /// Pairs that could not be made distinct and became mutations.
        degraded: usize,
    },
    ComponentsAbstracted {
        set: CoreComponentSet,
        exchanges: Vec<ExchangeUsage>,
    },
    DirectionProduced {
        batch_index: usize,
        direction: SearchDirection,
        exchanges: Vec<ExchangeUsage>,
    },
    OffspringCreated {
        batch_index: usize,
        heuristic: Option<Heuristic>,
        dropped: Option<String>,
        exchanges: Vec<ExchangeUsage>,
    },
    PredictionMade {
        examples: ExampleSet,
        predictions: Vec<Prediction>,
        warnings: Vec<String>,
        exchanges: Vec<ExchangeUsage>,
    },
    FitnessDecided {
        lb: f64,
        ub: f64,
        quota: usize,
        predictions: Vec<Prediction>,
        note: Option<String>,
    },
    EvaluationPerformed {
        batch_index: usize,
        heuristic: Heuristic,
        /// Mean raw objective; absent on failure.
        raw_objective: Option<f64>,
        failure: Option<String>,
        clamped: usize,
    },
    PopulationUpdated {
        checkpoint: Checkpoint,
    },
    BestUpdated {
        heuristic: Heuristic,
    },
    RunFinished {
        summary: RunSummary,
    },
    Error {
        message: String,
        recoverable: bool,
    },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::RunStarted { .. } => "run_started",
            EventPayload::PopulationInitialized { .. } => "population_initialized",
            EventPayload::ParentsSelected { .. } => "parents_selected",
            EventPayload::ComponentsAbstracted { .. } => "components_abstracted",
            EventPayload::DirectionProduced { .. } => "direction_produced",
            EventPayload::OffspringCreated { .. } => "offspring_created",
            EventPayload::PredictionMade { .. } => "prediction_made",
            EventPayload::FitnessDecided { .. } => "fitness_decided",
            EventPayload::EvaluationPerformed { .. } => "evaluation_performed",
            EventPayload::PopulationUpdated { .. } => "population_updated",
            EventPayload::BestUpdated { .. } => "best_updated",
            EventPayload::RunFinished { .. } => "run_finished",
            EventPayload::Error { .. } => "error",
        }
    }

    /// LLM exchanges recorded by this event.
    pub fn exchanges(&self) -> &[ExchangeUsage] {
        match self {
            EventPayload::PopulationInitialized { exchanges, .. }
            | EventPayload::ComponentsAbstracted { exchanges, .. }
            | EventPayload::DirectionProduced { exchanges, .. }
            | EventPayload::OffspringCreated { exchanges, .. }
            | EventPayload::PredictionMade { exchanges, .. } => exchanges,
            _ => &[],
        }
    }
}

/// Search state persisted at the end of every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Last completed iteration (0 after initialization).
    pub iteration: u32,
    pub next_iteration: u32,
    pub evaluations_used: usize,
    pub next_id: u64,
    pub population: Vec<Heuristic>,
    pub best: Heuristic,
    pub state_digest: String,
}

impl Checkpoint {
    pub fn new(
        iteration: u32,
        next_iteration: u32,
        evaluations_used: usize,
        next_id: u64,
        population: Vec<Heuristic>,
        best: Heuristic,
        history: &[Heuristic],
    ) -> Self {
        let mut c = Checkpoint {
            iteration,
            next_iteration,
            evaluations_used,
            next_id,
            population,
            best,
            state_digest: String::new(),
        };
        c.state_digest = c.compute_digest(history);
        c
    }

    /// sha256 over the checkpoint and the evaluated history, timing zeroed.
    pub fn compute_digest(&self, history: &[Heuristic]) -> String {
        #[derive(Serialize)]
        struct Snapshot {
            iteration: u32,
            next_iteration: u32,
            evaluations_used: usize,
            next_id: u64,
            population: Vec<Heuristic>,
            best: Heuristic,
            history: Vec<Heuristic>,
        }
        let zero = |hs: &[Heuristic]| -> Vec<Heuristic> {
            hs.iter().cloned().map(zero_timing).collect()
        };
        let snap = Snapshot {
            iteration: self.iteration,
            next_iteration: self.next_iteration,
            evaluations_used: self.evaluations_used,
            next_id: self.next_id,
            population: zero(&self.population),
            best: zero_timing(self.best.clone()),
            history: zero(history),
        };
        let text = serde_json::to_string(&snap).expect("snapshot serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn zero_timing(mut h: Heuristic) -> Heuristic {
    if let Some(f) = h.fitness.as_mut() {
        f.eval_seconds = 0.0;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub best: Heuristic,
    pub seed_train_raw: f64,
    pub best_train_raw: f64,
    pub seed_test_raw: Option<f64>,
    pub best_test_raw: Option<f64>,
    pub train_gain: Option<f64>,
    pub test_gain: Option<f64>,
    pub evaluations_used: usize,
    pub predictions_accepted: usize,
    pub iterations_completed: u32,
    pub usage: UsageTotals,
    pub state_digest: String,
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Single-owner writer. Every append is flushed before returning.
pub struct JournalWriter {
    path: PathBuf,
    file: File,
    last_seq: Option<u64>,
}

impl JournalWriter {
    /// Creates (or truncates) a journal file.
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(JournalWriter {
            path: path.to_path_buf(),
            file,
            last_seq: None,
        })
    }

    /// Opens an existing journal for appending after `last_seq`.
    pub fn append_to(path: &Path, last_seq: Option<u64>) -> Result<Self> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(JournalWriter {
            path: path.to_path_buf(),
            file,
            last_seq,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.last_seq.map_or(0, |s| s + 1)
    }

    pub fn append(&mut self, event: &JournalEvent) -> Result<()> {
        if event.seq != self.next_seq() {
            return Err(Error::JournalCorrupt {
                path: self.path.clone(),
                reason: format!("expected seq {}, got {}", self.next_seq(), event.seq),
            });
        }
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        self.last_seq = Some(event.seq);
        Ok(())
    }

    /// Stamps `payload` with the next seq and the current time, then appends.
    pub fn emit(&mut self, iteration: u32, payload: EventPayload) -> Result<JournalEvent> {
        let event = JournalEvent {
            seq: self.next_seq(),
            timestamp: now_millis(),
            iteration,
            payload,
        };
        self.append(&event)?;
        Ok(event)
    }
}

/// Parsed journal, possibly with a discarded partial tail.
#[derive(Debug, Clone)]
pub struct JournalLog {
    pub events: Vec<JournalEvent>,
    /// Byte length of the complete prefix.
    pub valid_len: u64,
    pub truncated: bool,
}

pub fn read_journal(path: &Path) -> Result<JournalLog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut valid_len = 0u64;
    let mut truncated = false;
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        let complete = buf.ends_with('\n');
        match serde_json::from_str::<JournalEvent>(buf.trim_end()) {
            Ok(event) if complete => {
                let expected = events.last().map_or(0, |e: &JournalEvent| e.seq + 1);
                if event.seq != expected {
                    return Err(Error::JournalCorrupt {
                        path: path.to_path_buf(),
                        reason: format!("expected seq {expected}, found {}", event.seq),
                    });
                }
                if let Some(prev) = events.last() {
                    if event.iteration < prev.iteration {
                        return Err(Error::JournalCorrupt {
                            path: path.to_path_buf(),
                            reason: format!("seq {} goes back to iteration {}", event.seq, event.iteration),
                        });
                    }
                }
                valid_len += n as u64;
                events.push(event);
            }
            _ => {
                // Only the final line may be incomplete.
                let mut rest = String::new();
                reader.read_line(&mut rest).map_err(|e| Error::io(path, e))?;
                if !rest.is_empty() {
                    return Err(Error::JournalCorrupt {
                        path: path.to_path_buf(),
                        reason: format!("unparsable event after seq {:?}", events.last().map(|e| e.seq)),
                    });
                }
                truncated = true;
                break;
            }
        }
    }
    if truncated {
        log::warn!("{}: discarded incomplete final event", path.display());
    }
    Ok(JournalLog {
        events,
        valid_len,
        truncated,
    })
}

/// Where a resumed run continues.
#[derive(Debug, Clone, PartialEq)]
pub struct ResumeCursor {
    /// Seq of the last event kept.
    pub last_seq: u64,
    pub next_iteration: u32,
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayedRun {
    pub config: RunConfig,
    pub task: TaskSpec,
    pub provider: String,
    pub horizon: u32,
    pub checkpoint: Option<Checkpoint>,
    /// Evaluated heuristics up to the last checkpoint, in journal order.
    pub history: Vec<Heuristic>,
    pub best: Option<Heuristic>,
    pub summary: Option<RunSummary>,
    pub cursor: ResumeCursor,
    pub truncated: bool,
    /// Events up to and including the cursor.
    pub events: Vec<JournalEvent>,
}

/// Rebuilds run state; every checkpoint digest is re-verified.
pub fn journal_replay(path: &Path) -> Result<ReplayedRun> {
    let log = read_journal(path)?;
    replay_events(path, log.events, log.truncated)
}

fn replay_events(path: &Path, events: Vec<JournalEvent>, truncated: bool) -> Result<ReplayedRun> {
    let corrupt = |reason: String| Error::JournalCorrupt {
        path: path.to_path_buf(),
        reason,
    };
    let Some(first) = events.first() else {
        return Err(Error::NoRunStarted(path.to_path_buf()));
    };
    let EventPayload::RunStarted {
        config,
        config_digest,
        task,
        provider,
        horizon,
    } = &first.payload
    else {
        return Err(Error::NoRunStarted(path.to_path_buf()));
    };
    let (config, task, provider, horizon) = (config.clone(), task.clone(), provider.clone(), *horizon);
    if &config.digest() != config_digest {
        return Err(corrupt("config digest mismatch".into()));
    }

    let mut history: Vec<Heuristic> = Vec::new();
    let mut checkpoint: Option<Checkpoint> = None;
    let mut keep = 1usize;
    let mut history_at_checkpoint = 0usize;
    let mut summary = None;
    let mut last_best: Option<Heuristic> = None;
    let mut best_at_checkpoint = None;
    for (i, event) in events.iter().enumerate().skip(1) {
        match &event.payload {
            EventPayload::RunStarted { .. } => {
                return Err(corrupt(format!("second run_started at seq {}", event.seq)))
            }
            EventPayload::EvaluationPerformed { heuristic, .. } => history.push(heuristic.clone()),
            EventPayload::BestUpdated { heuristic } => last_best = Some(heuristic.clone()),
            EventPayload::PopulationUpdated { checkpoint: c } => {
                let digest = c.compute_digest(&history);
                if digest != c.state_digest {
                    return Err(corrupt(format!("state digest mismatch at seq {}", event.seq)));
                }
                checkpoint = Some(c.clone());
                keep = i + 1;
                history_at_checkpoint = history.len();
                best_at_checkpoint = last_best.clone();
            }
            EventPayload::RunFinished { summary: s } => {
                if let Some(c) = &checkpoint {
                    if s.state_digest != c.state_digest {
                        return Err(corrupt("run_finished digest differs from last checkpoint".into()));
                    }
                }
                summary = Some(s.clone());
                keep = i + 1;
            }
            _ => {}
        }
    }
    history.truncate(history_at_checkpoint);
    let mut events = events;
    events.truncate(keep);
    let cursor = ResumeCursor {
        last_seq: events.last().map_or(0, |e| e.seq),
        next_iteration: checkpoint.as_ref().map_or(0, |c| c.next_iteration),
        finished: summary.is_some(),
    };
    let best = checkpoint.as_ref().map(|c| c.best.clone()).or(best_at_checkpoint);
    Ok(ReplayedRun {
        config,
        task,
        provider,
        horizon,
        checkpoint,
        history,
        best,
        summary,
        cursor,
        truncated,
        events,
    })
}

/// Rewrites `events` as a fresh journal at `path`.
pub fn rewrite_journal(path: &Path, events: &[JournalEvent]) -> Result<()> {
    let mut w = JournalWriter::create(path)?;
    for e in events {
        w.append(e)?;
    }
    Ok(())
}

/// Removes `timestamp` and `eval_seconds` keys at every depth.
pub fn mask_value(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timestamp");
            map.remove("eval_seconds");
            map.values_mut().for_each(mask_value);
        }
        Value::Array(items) => items.iter_mut().for_each(mask_value),
        _ => {}
    }
}

/// Journal lines with timing fields masked, for byte comparison.
pub fn masked_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l)?;
            mask_value(&mut v);
            Ok(serde_json::to_string(&v)?)
        })
        .collect()
}
