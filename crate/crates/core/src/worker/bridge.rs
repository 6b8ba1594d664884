use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::builtin::{parse_directive, BuiltinRegistry, BUILTIN_PREFIX};
use super::protocol::{
    Capabilities, HeuristicInput, HeuristicOutput, Limits, ShapeChecked, WorkerRequest,
    WorkerResponse, WorkerStatus,
};
use crate::error::{Error, Result};
use crate::heuristic::Heuristic;
use crate::task::TaskId;

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Timeout,
    Error,
    Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerFailure {
    pub kind: FailureKind,
    pub diagnostic: String,
}

impl WorkerFailure {
    fn error(diagnostic: impl Into<String>) -> Self {
        WorkerFailure {
            kind: FailureKind::Error,
            diagnostic: diagnostic.into(),
        }
    }
}

impl std::fmt::Display for WorkerFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            FailureKind::Timeout => "timeout",
            FailureKind::Error => "error",
            FailureKind::Config => "configuration error",
        };
        write!(f, "{kind}: {}", self.diagnostic)
    }
}

/// Maps runtime tags to the command line that spawns their worker.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerRegistration {
    #[serde(default)]
    pub workers: BTreeMap<String, Vec<String>>,
}

impl WorkerRegistration {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::WorkerConfig(format!("{}: {e}", path.display())))
    }
}

struct WorkerProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    capabilities: Vec<TaskId>,
}

impl WorkerProcess {
    fn spawn(command: &[String], memory_bytes: u64) -> std::result::Result<Self, String> {
        let (program, args) = command.split_first().ok_or("empty worker command")?;
        let mut cmd = Command::new(program);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        #[cfg(unix)]
        if memory_bytes > 0 {
            use std::os::unix::process::CommandExt;
            // SAFETY: setrlimit is async-signal-safe and touches no parent state.
            unsafe {
                cmd.pre_exec(move || {
                    let lim = libc::rlimit {
                        rlim_cur: memory_bytes as libc::rlim_t,
                        rlim_max: memory_bytes as libc::rlim_t,
                    };
                    if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                        return Err(std::io::Error::last_os_error());
                    }
                    Ok(())
                });
            }
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| format!("cannot spawn {program}: {e}"))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut proc = WorkerProcess {
            child,
            stdin,
            lines: rx,
            capabilities: Vec::new(),
        };
        let first = match proc.lines.recv_timeout(HANDSHAKE_TIMEOUT) {
            Ok(line) => line,
            Err(_) => {
                proc.kill();
                return Err(format!("{program}: no capability line"));
            }
        };
        match serde_json::from_str::<Capabilities>(&first) {
            Ok(c) => proc.capabilities = c.capabilities,
            Err(e) => {
                proc.kill();
                return Err(format!("{program}: malformed capability line: {e}"));
            }
        }
        Ok(proc)
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn roundtrip(&mut self, line: &str, wall: Duration) -> std::result::Result<String, WorkerFailure> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| WorkerFailure::error(format!("worker stdin closed: {e}")))?;
        match self.lines.recv_timeout(wall) {
            Ok(resp) => Ok(resp),
            Err(RecvTimeoutError::Timeout) => Err(WorkerFailure {
                kind: FailureKind::Timeout,
                diagnostic: format!("no response within {:.1}s", wall.as_secs_f64()),
            }),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.wait().ok();
                Err(WorkerFailure::error(format!("worker exited ({status:?})")))
            }
        }
    }
}

impl Drop for WorkerProcess {
    fn drop(&mut self) {
        self.kill();
    }
}

/// Up to `slots.len()` persistent processes for one runtime tag.
struct WorkerPool {
    command: Vec<String>,
    memory_bytes: u64,
    slots: Vec<Mutex<Option<WorkerProcess>>>,
}

impl WorkerPool {
    fn new(command: Vec<String>, size: usize, memory_bytes: u64) -> Self {
        WorkerPool {
            command,
            memory_bytes,
            slots: (0..size.max(1)).map(|_| Mutex::new(None)).collect(),
        }
    }

    fn request(
        &self,
        hint: usize,
        task: TaskId,
        request_id: &str,
        line: &str,
        wall: Duration,
    ) -> std::result::Result<HeuristicOutput, WorkerFailure> {
        let mut guard = self
            .slots
            .iter()
            .find_map(|s| s.try_lock().ok())
            .unwrap_or_else(|| self.slots[hint % self.slots.len()].lock().unwrap());
        if guard.is_none() {
            *guard = Some(
                WorkerProcess::spawn(&self.command, self.memory_bytes).map_err(WorkerFailure::error)?,
            );
        }
        let proc = guard.as_mut().unwrap();
        if !proc.capabilities.contains(&task) {
            return Err(WorkerFailure {
                kind: FailureKind::Config,
                diagnostic: format!("worker does not support {task}"),
            });
        }
        let resp = match proc.roundtrip(line, wall) {
            Ok(resp) => resp,
            Err(f) => {
                // Timed out or dead: the next request gets a fresh process.
                *guard = None;
                return Err(f);
            }
        };
        let resp: WorkerResponse = match serde_json::from_str(&resp) {
            Ok(r) => r,
            Err(e) => {
                *guard = None;
                return Err(WorkerFailure::error(format!("malformed response: {e}")));
            }
        };
        if resp.request_id != request_id {
            *guard = None;
            return Err(WorkerFailure::error(format!(
                "response id {} does not match request {request_id}",
                resp.request_id
            )));
        }
        match (resp.status, resp.payload) {
            (WorkerStatus::Ok, Some(p)) => Ok(p),
            (WorkerStatus::Ok, None) => Err(WorkerFailure::error("ok response without payload")),
            (WorkerStatus::Timeout, _) => Err(WorkerFailure {
                kind: FailureKind::Timeout,
                diagnostic: resp.diagnostic.unwrap_or_default(),
            }),
            (WorkerStatus::Error, _) => Err(WorkerFailure::error(
                resp.diagnostic.unwrap_or_else(|| "unspecified worker error".into()),
            )),
        }
    }
}

/// Executes candidate sources: builtins natively, everything else through
/// registered subprocess workers.
pub struct WorkerBridge {
    builtins: BuiltinRegistry,
    pools: BTreeMap<String, WorkerPool>,
    next_request: AtomicU64,
}

impl WorkerBridge {
    pub fn builtin_only() -> Self {
        WorkerBridge {
            builtins: BuiltinRegistry::standard(),
            pools: BTreeMap::new(),
            next_request: AtomicU64::new(0),
        }
    }

    pub fn new(registration: &WorkerRegistration, parallelism: usize, memory_bytes: u64) -> Result<Self> {
        let mut bridge = Self::builtin_only();
        for (tag, command) in &registration.workers {
            if tag.starts_with(BUILTIN_PREFIX) {
                return Err(Error::WorkerConfig(format!("tag `{tag}` is reserved")));
            }
            if command.is_empty() {
                return Err(Error::WorkerConfig(format!("tag `{tag}` has an empty command")));
            }
            bridge.pools.insert(
                tag.clone(),
                WorkerPool::new(command.clone(), parallelism, memory_bytes),
            );
        }
        Ok(bridge)
    }

    pub fn builtins(&self) -> &BuiltinRegistry {
        &self.builtins
    }

    pub fn supports(&self, runtime_tag: &str) -> bool {
        match runtime_tag.strip_prefix(BUILTIN_PREFIX) {
            Some(name) => self.builtins.get(name).is_some(),
            None => self.pools.contains_key(runtime_tag),
        }
    }

    /// Runs one candidate on one payload and shape-checks the result.
    pub fn execute_candidate(
        &self,
        h: &Heuristic,
        input: &HeuristicInput,
        limits: Limits,
    ) -> std::result::Result<ShapeChecked, WorkerFailure> {
        let task = input.task_id();
        let output = if let Some(name) = h.runtime_tag.strip_prefix(BUILTIN_PREFIX) {
            let builtin = self.builtins.get(name).ok_or_else(|| WorkerFailure {
                kind: FailureKind::Config,
                diagnostic: format!("unknown builtin `{name}`"),
            })?;
            let params = parse_directive(&h.source).map(|(_, p)| p).unwrap_or_default();
            builtin.call(input, &params).map_err(WorkerFailure::error)?
        } else {
            let pool = self.pools.get(&h.runtime_tag).ok_or_else(|| WorkerFailure {
                kind: FailureKind::Config,
                diagnostic: format!("no worker registered for runtime tag `{}`", h.runtime_tag),
            })?;
            let n = self.next_request.fetch_add(1, Ordering::Relaxed);
            let request_id = format!("r{n}");
            let request = WorkerRequest {
                request_id: request_id.clone(),
                task_id: task,
                entry_function: task.entry_function(),
                source: &h.source,
                payload: input,
                limits,
            };
            let line = serde_json::to_string(&request)
                .map_err(|e| WorkerFailure::error(format!("cannot encode request: {e}")))?;
            let wall = Duration::from_secs_f64(limits.wall_seconds.max(0.001));
            pool.request(n as usize, task, &request_id, &line, wall)?
        };
        output.check(input).map_err(WorkerFailure::error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristic::{HeuristicId, Origin};
    use crate::worker::protocol::Matrix;
    use std::sync::Arc;

    #[test]
    fn builtin_runs_natively() {
        let bridge = WorkerBridge::builtin_only();
        let h = Heuristic::new(HeuristicId(0), "# builtin: kgls_badness", "builtin:kgls_badness", Origin::Seed, vec![], 0).unwrap();
        let d = Matrix::from_fn(3, 3, |i, j| (i as f64 - j as f64).abs());
        let input = HeuristicInput::GlsTsp {
            distance: Arc::new(d.clone()),
        };
        let out = bridge.execute_candidate(&h, &input, Limits::default()).unwrap();
        assert_eq!(out.output, HeuristicOutput::Matrix(d));
    }

    #[test]
    fn unknown_tag_is_config_failure() {
        let bridge = WorkerBridge::builtin_only();
        let h = Heuristic::new(HeuristicId(0), "x", "ruby", Origin::Seed, vec![], 0).unwrap();
        let input = HeuristicInput::AcoBpp {
            demand: vec![1.0],
            capacity: 2.0,
        };
        let err = bridge.execute_candidate(&h, &input, Limits::default()).unwrap_err();
        assert_eq!(err.kind, FailureKind::Config);
        assert!(!bridge.supports("ruby"));
        assert!(bridge.supports("builtin:uniform_promise"));
    }

    #[test]
    fn reserved_tag_rejected() {
        let mut reg = WorkerRegistration::default();
        reg.workers.insert("builtin:x".into(), vec!["true".into()]);
        assert!(WorkerBridge::new(&reg, 1, 0).is_err());
    }
}
