//! Canned mock responses that drive complete runs offline. Every code
//! response is a builtin directive, so no worker process is needed.

use super::mock::{MockEntry, MockScript};
use crate::task::TaskId;
use crate::worker::builtin::builtin_source;

const MAX_TARGETS: usize = 32;

/// Distinct builtin variants for `task`, in a fixed order. Parameters
/// sweep a grid of twentieths so every value prints exactly.
pub fn variant_sources(task: TaskId) -> Vec<String> {
    let mut out = Vec::new();
    let mut push = |name: &str, params: &[(&str, f64)]| out.push(builtin_source(name, params, task));
    let grid = |lo: u32, hi: u32| (lo..=hi).map(|i| i as f64 / 20.0);
    match task {
        TaskId::GlsTsp => {
            for k in [3.0, 5.0, 8.0, 10.0] {
                for w in [0.5, 1.0, 2.0] {
                    push("knn_badness", &[("k", k), ("weight", w)]);
                }
            }
            for p in grid(5, 60) {
                push("normalized_badness", &[("power", p)]);
            }
            for f in grid(1, 8) {
                push("relative_badness", &[("floor", f)]);
            }
        }
        TaskId::ConstructiveTsp => {
            for w in grid(1, 60) {
                push("lookahead", &[("weight", w)]);
            }
            push("constant_score", &[]);
        }
        TaskId::AcoBpp => {
            for th in grid(1, 19) {
                push("complementarity_decay", &[("threshold", th)]);
            }
            for p in grid(5, 80) {
                push("fill_ratio", &[("power", p)]);
            }
            push("uniform_promise", &[]);
        }
        TaskId::AcoMkp => {
            for p in grid(5, 80) {
                push("value_per_max_weight", &[("power", p)]);
            }
            push("value_only", &[]);
        }
    }
    out
}

fn fenced(source: &str) -> String {
    format!("```python\n{source}\n```")
}

/// Unnumbered prediction lines for up to 32 targets (surplus lines are
/// ignored positionally), confidences alternating between `high` and
/// `low`, all with the same score.
pub fn prediction_response(high: f64, low: f64, score: f64) -> String {
    (1..=MAX_TARGETS)
        .map(|i| {
            let phi = if i % 2 == 1 { high } else { low };
            format!("score={score} confidence={phi}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A script that answers every prompt template of a run for `task`.
pub fn demo_script(task: TaskId) -> MockScript {
    let sources = variant_sources(task);
    let (init, derived): (Vec<_>, Vec<_>) = sources.iter().enumerate().partition(|(i, _)| i % 2 == 0);
    let mut entries = Vec::new();
    for (_, s) in &init {
        entries.push(MockEntry::substring("initial population", fenced(s)));
    }
    for text in [
        "- weight candidate elements by their cost relative to neighbors\n- sparsify unpromising choices",
        "- normalize the measure before combining terms\n- use a tunable exponent to sharpen contrasts",
    ] {
        entries.push(MockEntry::substring("abstract the core components", text));
    }
    for text in [
        "Increase the exponent on the dominant term.",
        "Tighten the neighborhood used to judge promising elements.",
        "Use a smaller threshold so fewer elements are ruled out.",
    ] {
        entries.push(MockEntry::substring("Based on these core components", text));
        entries.push(MockEntry::substring("Reflect on the relative performance", text));
    }
    for (_, s) in &derived {
        entries.push(MockEntry::substring("primary exemplar", fenced(s)));
    }
    for (_, s) in derived.iter().rev() {
        entries.push(MockEntry::substring("mutated version of the historically best heuristic", fenced(s)));
    }
    entries.push(MockEntry::substring(
        "Predict the performance score",
        prediction_response(0.95, 0.2, 1e9),
    ));
    MockScript::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::extract_code_block;
    use crate::ppp::parse_predictions;
    use crate::worker::builtin::{parse_directive, BuiltinRegistry};

    #[test]
    fn every_variant_names_a_builtin_of_its_task() {
        let reg = BuiltinRegistry::standard();
        for task in TaskId::ALL {
            let v = variant_sources(task);
            assert!(v.len() >= 40, "{task}");
            let mut uniq = v.clone();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), v.len());
            for s in v {
                let (name, _) = parse_directive(&s).unwrap();
                assert_eq!(reg.get(&name).unwrap().task, task);
            }
        }
    }

    #[test]
    fn predictions_alternate() {
        let (p, w) = parse_predictions(&prediction_response(0.95, 0.2, 5.0), 3);
        assert!(w.is_empty());
        assert_eq!(p, vec![Some((5.0, 0.95)), Some((5.0, 0.2)), Some((5.0, 0.95))]);
    }

    #[test]
    fn script_code_blocks_extract() {
        let script = demo_script(TaskId::AcoBpp);
        let codes = script
            .entries
            .iter()
            .filter(|e| e.pattern == "primary exemplar")
            .filter(|e| extract_code_block(&e.response).is_some())
            .count();
        assert_eq!(codes, variant_sources(TaskId::AcoBpp).len() / 2);
    }

    #[test]
    fn corpus_carries_the_sparsified_complementarity_heuristic() {
        let src = builtin_source("complementarity_decay", &[("threshold", 0.5)], TaskId::AcoBpp);
        assert!(variant_sources(TaskId::AcoBpp).contains(&src));
    }
}
