//! Protocol-conformant worker used by tests and demos.
//!
//! Sources select behavior with a directive line:
//!
//! ```text
//! # builtin: <name> [k=v ...]   run a native builtin
//! # stub: echo                  return the task's natural input as output
//! # stub: slow <seconds>        echo after sleeping
//! # stub: loop                  never answer
//! # stub: crash                 exit immediately
//! # stub: garbage               answer with a non-JSON line
//! # stub: wrong_id              answer with a different request id
//! # stub: error                 answer with status error
//! ```
//!
//! `--capabilities gls_tsp,aco_bpp` restricts the advertised tasks.

use std::io::{BufRead, Write};
use std::time::Duration;

use serde_json::{json, Value};

use heurgen::task::TaskId;
use heurgen::worker::builtin::parse_directive;
use heurgen::worker::{BuiltinRegistry, HeuristicInput, HeuristicOutput, Matrix};

fn capabilities() -> Vec<TaskId> {
    let args: Vec<String> = std::env::args().collect();
    match args.iter().position(|a| a == "--capabilities") {
        Some(i) => args
            .get(i + 1)
            .map(|list| {
                list.split(',')
                    .filter_map(|t| serde_json::from_value(Value::String(t.trim().into())).ok())
                    .collect()
            })
            .unwrap_or_default(),
        None => TaskId::ALL.to_vec(),
    }
}

fn echo(input: &HeuristicInput) -> HeuristicOutput {
    match input {
        HeuristicInput::GlsTsp { distance } => HeuristicOutput::Matrix((**distance).clone()),
        HeuristicInput::AcoBpp { demand, .. } => {
            let n = demand.len();
            HeuristicOutput::Matrix(Matrix::from_fn(n, n, |i, j| demand[i] * demand[j]))
        }
        HeuristicInput::AcoMkp { prize, .. } => HeuristicOutput::Vector(prize.clone()),
        HeuristicInput::ConstructiveTsp {
            distance,
            current,
            candidates,
            ..
        } => HeuristicOutput::Scores(candidates.iter().map(|&c| distance.get(*current, c)).collect()),
    }
}

fn stub_directive(source: &str) -> Option<(String, Option<f64>)> {
    let line = source.lines().map(str::trim).find_map(|l| l.strip_prefix("# stub:"))?;
    let mut parts = line.split_whitespace();
    let name = parts.next()?.to_string();
    Some((name, parts.next().and_then(|x| x.parse().ok())))
}

fn error(id: &str, diagnostic: impl Into<String>) -> Value {
    json!({"request_id": id, "status": "error", "diagnostic": diagnostic.into()})
}

fn ok(id: &str, output: HeuristicOutput) -> Value {
    json!({"request_id": id, "status": "ok", "payload": output})
}

fn handle(line: &str, registry: &BuiltinRegistry, caps: &[TaskId], out: &mut impl Write) -> std::io::Result<()> {
    let request: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return writeln!(out, "{}", error("unknown", format!("malformed request: {e}"))),
    };
    let id = request
        .get("request_id")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let task: Option<TaskId> = request
        .get("task_id")
        .and_then(|t| serde_json::from_value(t.clone()).ok());
    let source = request.get("source").and_then(Value::as_str).unwrap_or("");
    let Some(task) = task else {
        return writeln!(out, "{}", error(&id, "missing or unknown task_id"));
    };
    if !caps.contains(&task) {
        return writeln!(out, "{}", error(&id, format!("unsupported task {task}")));
    }
    let input = match HeuristicInput::decode(task, request.get("payload").cloned().unwrap_or(Value::Null)) {
        Ok(i) => i,
        Err(e) => return writeln!(out, "{}", error(&id, format!("bad payload: {e}"))),
    };

    let response = if let Some((name, params)) = parse_directive(source) {
        match registry.get(&name) {
            Some(b) => match b.call(&input, &params) {
                Ok(o) => ok(&id, o),
                Err(e) => error(&id, e),
            },
            None => error(&id, format!("unknown builtin {name}")),
        }
    } else {
        match stub_directive(source) {
            Some((mode, arg)) => match mode.as_str() {
                "echo" => ok(&id, echo(&input)),
                "slow" => {
                    std::thread::sleep(Duration::from_secs_f64(arg.unwrap_or(1.0)));
                    ok(&id, echo(&input))
                }
                "loop" => loop {
                    std::thread::sleep(Duration::from_secs(3600));
                },
                "crash" => std::process::exit(3),
                "garbage" => return writeln!(out, "this is not json"),
                "wrong_id" => ok(&format!("{id}-other"), echo(&input)),
                "error" => error(&id, "requested failure"),
                other => error(&id, format!("unknown stub mode {other}")),
            },
            None => error(&id, "source has no builtin or stub directive"),
        }
    };
    writeln!(out, "{response}")
}

fn main() {
    let caps = capabilities();
    let registry = BuiltinRegistry::standard();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(out, "{}", json!({ "capabilities": caps }));
    let _ = out.flush();
    for line in std::io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if handle(&line, &registry, &caps, &mut out).and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}
