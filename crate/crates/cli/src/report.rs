//! Text and CSV renderings of journals and analysis inputs. Numbers are
//! written with fixed precision and `.` decimals regardless of locale.

use std::collections::BTreeMap;
use std::fmt::Write;

use anyhow::{bail, Result};

use heurgen::cap::{information_gain, parse_partitions, shannon_entropy};
use heurgen::heuristic::HeuristicId;
use heurgen::journal::{EventPayload, JournalEvent, RunSummary};
use heurgen::llm::UsageTotals;
use heurgen::ppp::{pearson, prediction_accuracy, Decision};

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |g| format!("{:.2}%", g * 100.0))
}

pub fn usage_line(u: &UsageTotals) -> String {
    format!(
        "tokens: context={} generation={} calls={}",
        u.context_tokens, u.generation_tokens, u.call_count
    )
}

/// Seed/best/gain table for train and test, plus counters.
pub fn summary_table(s: &RunSummary) -> String {
    let mut out = String::new();
    writeln!(out, "{:<6} {:>16} {:>16} {:>10}", "split", "seed", "best", "gain").unwrap();
    writeln!(
        out,
        "{:<6} {:>16} {:>16} {:>10}",
        "train",
        opt(Some(s.seed_train_raw), 6),
        opt(Some(s.best_train_raw), 6),
        pct(s.train_gain)
    )
    .unwrap();
    writeln!(
        out,
        "{:<6} {:>16} {:>16} {:>10}",
        "test",
        opt(s.seed_test_raw, 6),
        opt(s.best_test_raw, 6),
        pct(s.test_gain)
    )
    .unwrap();
    writeln!(
        out,
        "evaluations={} iterations={} predictions_accepted={}",
        s.evaluations_used, s.iterations_completed, s.predictions_accepted
    )
    .unwrap();
    writeln!(out, "{}", usage_line(&s.usage)).unwrap();
    out
}

/// One row per conventional evaluation with the best-so-far canonical
/// fitness. Failed evaluations leave `fitness` empty.
pub fn curve_csv(events: &[JournalEvent]) -> String {
    let mut out = String::from("evaluation,iteration,heuristic,fitness,best_so_far\n");
    let mut best: Option<f64> = None;
    let mut n = 0;
    for e in events {
        let EventPayload::EvaluationPerformed { heuristic, .. } = &e.payload else {
            continue;
        };
        n += 1;
        let fitness = heuristic.is_anchor().then(|| heuristic.value());
        if let Some(f) = fitness {
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
        let field = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(out, "{n},{},{},{},{}", e.iteration, heuristic.id, field(fitness), field(best)).unwrap();
    }
    out
}

#[derive(Debug, Default, PartialEq)]
pub struct Calibration {
    pub pairs: usize,
    pub accuracy: Option<f64>,
    pub pearson: Option<f64>,
    pub decisions: BTreeMap<String, usize>,
    pub unparsed: usize,
}

fn decision_label(d: Option<Decision>) -> &'static str {
    match d {
        Some(Decision::AcceptedBand1) => "band1",
        Some(Decision::AcceptedBand2) => "band2",
        Some(Decision::AcceptedBand3) => "band3",
        Some(Decision::AcceptedUnstratified) => "unstratified",
        Some(Decision::Reevaluate) | None => "reevaluate",
    }
}

/// Compares predictions with the conventional evaluations that followed
/// them. Accuracy uses the bounds of each prediction's own iteration.
pub fn calibrate(events: &[JournalEvent]) -> Result<Calibration> {
    let delta = events
        .iter()
        .find_map(|e| match &e.payload {
            EventPayload::RunStarted { config, .. } => Some(config.delta),
            _ => None,
        })
        .unwrap_or(0.1);
    let truth: BTreeMap<HeuristicId, f64> = events
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::EvaluationPerformed { heuristic, .. } if heuristic.is_anchor() => {
                Some((heuristic.id, heuristic.value()))
            }
            _ => None,
        })
        .collect();
    let mut cal = Calibration::default();
    let mut all_pairs = Vec::new();
    let mut hits = 0.0;
    for e in events {
        let EventPayload::FitnessDecided { lb, ub, predictions, .. } = &e.payload else {
            continue;
        };
        let mut group = Vec::new();
        for p in predictions {
            *cal.decisions.entry(decision_label(p.decision).to_string()).or_default() += 1;
            if !p.parsed {
                cal.unparsed += 1;
                continue;
            }
            if let Some(&t) = truth.get(&p.heuristic_id) {
                group.push((p.xi, t));
            }
        }
        if !group.is_empty() {
            hits += prediction_accuracy(&group, delta, *lb, *ub)? * group.len() as f64;
            all_pairs.extend(group);
        }
    }
    cal.pairs = all_pairs.len();
    if cal.pairs > 0 {
        cal.accuracy = Some(hits / cal.pairs as f64);
    }
    cal.pearson = pearson(&all_pairs);
    Ok(cal)
}

pub fn calibration_text(c: &Calibration) -> String {
    let mut out = String::new();
    writeln!(out, "pairs,{}", c.pairs).unwrap();
    writeln!(out, "accuracy,{}", opt(c.accuracy, 6)).unwrap();
    writeln!(out, "pearson,{}", opt(c.pearson, 6)).unwrap();
    writeln!(out, "unparsed,{}", c.unparsed).unwrap();
    for label in ["band1", "band2", "band3", "unstratified", "reevaluate"] {
        writeln!(out, "{label},{}", c.decisions.get(label).copied().unwrap_or(0)).unwrap();
    }
    out
}

/// CSV of entropy and gain per partition line.
pub fn ig_table(text: &str) -> Result<String> {
    let parts = parse_partitions(text)?;
    if parts.is_empty() {
        bail!("no partitions in input");
    }
    let mut out = String::from("k,entropy,information_gain,max_gain,within_bound\n");
    for p in parts {
        let h = shannon_entropy(&p.probabilities)?;
        let ig = information_gain(&p)?;
        let ok = (0.0..=p.max_gain() + 1e-12).contains(&ig);
        writeln!(out, "{},{h:.12},{ig:.12},{:.12},{ok}", p.k, p.max_gain()).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use heurgen::heuristic::{FitnessRecord, Heuristic, Origin};
    use heurgen::ppp::Prediction;

    fn ev(iteration: u32, payload: EventPayload) -> JournalEvent {
        JournalEvent {
            seq: 0,
            timestamp: 0,
            iteration,
            payload,
        }
    }

    fn evaluated(id: u64, fitness: Option<f64>) -> JournalEvent {
        let h = Heuristic::new(HeuristicId(id), format!("# {id}"), "python", Origin::Init, vec![], 0).unwrap();
        let record = match fitness {
            Some(v) => FitnessRecord::evaluated(v, 0.0, 0),
            None => FitnessRecord::failed(0.0, 0),
        };
        ev(
            1,
            EventPayload::EvaluationPerformed {
                batch_index: 0,
                heuristic: h.with_fitness(record),
                raw_objective: fitness,
                failure: None,
                clamped: 0,
            },
        )
    }

    #[test]
    fn curve_tracks_running_minimum() {
        let events = [evaluated(1, None), evaluated(2, Some(5.0)), evaluated(3, Some(7.0)), evaluated(4, Some(2.5))];
        let csv = curve_csv(&events);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "1,1,h0001,,");
        assert_eq!(lines[3], "3,1,h0003,7.000000,5.000000");
        assert_eq!(lines[4], "4,1,h0004,2.500000,2.500000");
    }

    #[test]
    fn calibration_counts_bands_and_strict_hits() {
        let mut p1 = Prediction::new(HeuristicId(1), 14.5, 0.95);
        p1.decision = Some(Decision::AcceptedBand1);
        let mut p2 = Prediction::new(HeuristicId(2), 14.0, 0.5);
        p2.decision = Some(Decision::Reevaluate);
        let mut p3 = Prediction::new(HeuristicId(3), 12.0, 0.5);
        p3.decision = Some(Decision::Reevaluate);
        let mut p4 = Prediction::unparsed(HeuristicId(4));
        p4.decision = Some(Decision::Reevaluate);
        let events = [
            ev(
                1,
                EventPayload::FitnessDecided {
                    lb: 10.0,
                    ub: 20.0,
                    quota: 1,
                    predictions: vec![p1, p2, p3, p4],
                    note: None,
                },
            ),
            // tolerance 0.1 * 10 = 1: |14 - 15| is not a hit, |12 - 12.5| is.
            evaluated(2, Some(15.0)),
            evaluated(3, Some(12.5)),
        ];
        let c = calibrate(&events).unwrap();
        assert_eq!(c.pairs, 2);
        assert_eq!(c.accuracy, Some(0.5));
        assert_eq!(c.unparsed, 1);
        assert_eq!(c.decisions["band1"], 1);
        assert_eq!(c.decisions["reevaluate"], 3);
        let text = calibration_text(&c);
        assert!(text.contains("accuracy,0.500000"));
        assert!(text.contains("band3,0"));
    }

    #[test]
    fn ig_table_reports_uniform_maximum() {
        let csv = ig_table("# k p0..pk\n4 0.2 0.2 0.2 0.2 0.2\n1 1 0\n").unwrap();
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        let ln5: f64 = rows[0][2].parse().unwrap();
        assert!((ln5 - 5f64.ln()).abs() < 1e-11);
        assert_eq!(rows[1][2], "0.000000000000");
        assert!(rows.iter().all(|r| r[4] == "true"));
    }

    #[test]
    fn ig_table_rejects_bad_rows() {
        assert!(ig_table("2 0.5 0.6 0.1\n").is_err());
        assert!(ig_table("\n").is_err());
    }
}
