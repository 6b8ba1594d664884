mod common;

use std::sync::Arc;

use common::*;
use heurgen::config::RunConfig;
use heurgen::eval::Evaluator;
use heurgen::evolve::{resume_search, SearchServices};
use heurgen::journal::{journal_replay, read_journal, rewrite_journal, EventPayload};
use heurgen::llm::{corpus, LlmGateway, MockProvider, TemplateStore};
use heurgen::task::TaskId;
use heurgen::worker::WorkerBridge;

fn resume(journal: &std::path::Path) -> heurgen::Result<heurgen::evolve::SearchOutcome> {
    let replay = journal_replay(journal)?;
    let gateway = LlmGateway::new(Box::new(MockProvider::new(corpus::demo_script(replay.task.task_id))));
    let templates = TemplateStore::default();
    let evaluator = Evaluator::new(
        replay.task.task_id,
        replay.task.solver_params.clone(),
        Arc::new(WorkerBridge::builtin_only()),
    )?;
    let services = SearchServices {
        gateway: &gateway,
        templates: &templates,
        evaluator: &evaluator,
        provider_label: "mock".into(),
    };
    resume_search(&services, journal)
}

fn config() -> RunConfig {
    RunConfig {
        population_size: 5,
        max_evaluations: 20,
        ..RunConfig::default()
    }
}

#[test]
fn resume_after_mid_iteration_cut_finishes() {
    let dir = tempfile::tempdir().unwrap();
    let task = small_task(TaskId::AcoMkp, dir.path(), 15);
    let journal = dir.path().join("run.jsonl");
    run_demo(&config(), &task, &journal).unwrap();
    let full = read_journal(&journal).unwrap().events;

    // Cut inside iteration 2 and leave half a line behind.
    let cut = full
        .iter()
        .position(|e| e.iteration == 2 && e.payload.kind() == "offspring_created")
        .unwrap();
    rewrite_journal(&journal, &full[..=cut]).unwrap();
    let mut text = std::fs::read_to_string(&journal).unwrap();
    text.push_str("{\"seq\":99,\"timest");
    std::fs::write(&journal, text).unwrap();

    let replay = journal_replay(&journal).unwrap();
    assert!(replay.truncated);
    assert_eq!(replay.cursor.next_iteration, 2);
    let kept = replay.events.len();

    let out = resume(&journal).unwrap();
    assert!(!out.already_finished);
    assert!(out.summary.evaluations_used <= 20);
    let after = read_journal(&journal).unwrap();
    assert!(!after.truncated);
    // Events up to the checkpoint are preserved verbatim.
    assert_eq!(&after.events[..kept], &full[..kept]);
    assert!(after.events.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    assert!(matches!(after.events.last().unwrap().payload, EventPayload::RunFinished { .. }));

    let again = resume(&journal).unwrap();
    assert!(again.already_finished);
    assert_eq!(again.summary, out.summary);
}

#[test]
fn resume_before_first_checkpoint_reinitializes() {
    let dir = tempfile::tempdir().unwrap();
    let task = small_task(TaskId::AcoMkp, dir.path(), 15);
    let journal = dir.path().join("run.jsonl");
    run_demo(&config(), &task, &journal).unwrap();
    let full = read_journal(&journal).unwrap().events;
    rewrite_journal(&journal, &full[..3]).unwrap();
    let out = resume(&journal).unwrap();
    let events = read_journal(&journal).unwrap().events;
    let seeds = events
        .iter()
        .filter(|e| matches!(&e.payload, EventPayload::EvaluationPerformed { heuristic, .. } if heuristic.id.0 == 0))
        .count();
    assert_eq!(seeds, 1);
    assert_eq!(out.summary.evaluations_used, journal_replay(&journal).unwrap().history.len());
}

#[test]
fn replayed_state_matches_writer_state() {
    let dir = tempfile::tempdir().unwrap();
    let task = small_task(TaskId::AcoBpp, dir.path(), 30);
    let journal = dir.path().join("run.jsonl");
    let out = run_demo(&config(), &task, &journal).unwrap();
    let replay = journal_replay(&journal).unwrap();
    let c = replay.checkpoint.unwrap();
    assert_eq!(c.state_digest, out.summary.state_digest);
    assert_eq!(c.best, out.summary.best);
    assert_eq!(c.evaluations_used, out.summary.evaluations_used);
    assert_eq!(replay.history.len(), out.summary.evaluations_used);
    assert_eq!(heurgen::llm::usage_totals(&replay.events), out.summary.usage);
}
