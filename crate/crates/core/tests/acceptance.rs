//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without network or external workers.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::*;
use heurgen::cap::{information_gain, DirectionPartition};
use heurgen::config::{ExemplarMode, RunConfig};
use heurgen::eval::exact::brute_force_tsp;
use heurgen::eval::{aco_bpp_solve, aco_mkp_solve, exact_tsp_oracle, gls_tsp_solve, heuristic_input, AcoParams, Instance};
use heurgen::eval::instances::{random_instance, TspInstance};
use heurgen::evolve::{rank_selection_probabilities, sample_individuals};
use heurgen::gain::compute_gain;
use heurgen::heuristic::{FitnessRecord, Heuristic, HeuristicId, Origin};
use heurgen::journal::{masked_lines, read_journal, EventPayload, JournalEvent};
use heurgen::ppp::{acceptance_quota, decide_fitness, prediction_accuracy, select_examples, Decision, Prediction};
use heurgen::task::TaskId;
use heurgen::worker::{BuiltinRegistry, HeuristicOutput, Matrix};
use heurgen::worker::builtin::parse_directive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);
/// (id, (xi, phi) or unparsed, expected decision)
type Case = (u64, Option<(f64, f64)>, Decision);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn evaluated(id: u64, value: f64) -> Heuristic {
    Heuristic::new(HeuristicId(id), format!("# h{id}"), "python", Origin::Init, vec![], 0)
        .unwrap()
        .with_fitness(FitnessRecord::evaluated(value, 0.0, 0))
}

fn rank_selection() -> Outcome {
    let pop = vec![evaluated(1, 5.0), evaluated(2, 9.0), evaluated(3, 12.0)];
    let p = rank_selection_probabilities(&pop).map_err(|e| e.to_string())?;
    let expected = [15.0 / 37.0, 12.0 / 37.0, 10.0 / 37.0];
    for (i, ((_, got), want)) in p.iter().zip(expected).enumerate() {
        check((got - want).abs() <= 1e-12, || format!("p[{i}] = {got}, expected {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20240501);
    let draws = 100_000;
    let ids = sample_individuals(&pop, draws, true, &mut rng).map_err(|e| e.to_string())?;
    let mut freq = [0usize; 3];
    for id in ids {
        freq[id.0 as usize - 1] += 1;
    }
    let mut worst = 0.0f64;
    for (f, want) in freq.iter().zip(expected) {
        let got = *f as f64 / draws as f64;
        worst = worst.max((got - want).abs());
    }
    check(worst <= 0.01, || format!("Monte Carlo deviation {worst:.4}"))?;
    Ok(format!("exact to 1e-12; max Monte Carlo deviation {worst:.4} over 1e5 draws"))
}

/// Independent entropy: -ln(prod p^p).
fn entropy_oracle(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x.powf(x)).product::<f64>().ln()
}

fn information_gain_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_oracle_err = 0.0f64;
    for case in 0..1000 {
        let k = rng.gen_range(1..=10);
        let mut raw: Vec<f64> = (0..=k)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() })
            .collect();
        if raw.iter().all(|&x| x == 0.0) {
            raw[0] = 1.0;
        }
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let part = DirectionPartition::new(k, p.clone()).map_err(|e| format!("case {case}: {e}"))?;
        let ig = information_gain(&part).map_err(|e| format!("case {case}: {e}"))?;
        let bound = ((k + 1) as f64).ln();
        check((0.0..=bound + 1e-12).contains(&ig), || format!("case {case}: IG {ig} outside [0, ln({})]", k + 1))?;
        max_oracle_err = max_oracle_err.max((ig - entropy_oracle(&p)).abs());
    }
    check(max_oracle_err < 1e-9, || format!("entropy oracle disagreement {max_oracle_err}"))?;
    for k in 1..=10 {
        let ig = information_gain(&DirectionPartition::uniform(k).unwrap()).unwrap();
        let want = ((k + 1) as f64).ln();
        check((ig - want).abs() <= 1e-12, || format!("uniform k={k}: {ig} vs ln({})", k + 1))?;
        let mut p = vec![0.0; k + 1];
        p[0] = 1.0;
        let ig0 = information_gain(&DirectionPartition::new(k, p).unwrap()).unwrap();
        check(ig0 == 0.0, || format!("degenerate k={k}: {ig0}"))?;
    }
    // The stated maximum for k = 4: ln 5.
    let k4 = information_gain(&DirectionPartition::new(4, vec![0.2; 5]).unwrap()).unwrap();
    check((k4 - 5f64.ln()).abs() <= 1e-12, || format!("k=4 uniform {k4}"))?;
    Ok(format!("1000 partitions within bounds; oracle error {max_oracle_err:.1e}"))
}

fn decision_table() -> Outcome {
    // delta = 0.25, lb = 0, ub = 4: band edges 0.75 / 0.5 / 0.25 and the
    // band-3 threshold 0 + 3 * 0.25 * 4 = 3 are exact in binary.
    use Decision::*;
    let cases: [Case; 12] = [
        (1, Some((0.5, 1.0)), AcceptedBand1),
        (2, Some((3.9, 0.75)), AcceptedBand1),
        (3, Some((1.0, 0.74)), AcceptedBand2),
        (4, Some((2.0, 0.74)), Reevaluate), // ties h3 on phi, loses on id
        (5, Some((1.0, 0.5)), Reevaluate),  // band 2, outside the quota
        (6, Some((3.0, 0.49)), Reevaluate), // xi equals the threshold
        (7, Some((3.5, 0.49)), AcceptedBand3),
        (8, Some((4.0, 0.25)), AcceptedBand3),
        (9, Some((2.9, 0.25)), Reevaluate),
        (10, Some((100.0, 0.24)), Reevaluate),
        (11, Some((-5.0, 0.0)), Reevaluate),
        (12, None, Reevaluate),
    ];
    let preds: Vec<Prediction> = cases
        .iter()
        .map(|(id, p, _)| match p {
            Some((xi, phi)) => Prediction::new(HeuristicId(*id), *xi, *phi),
            None => Prediction::unparsed(HeuristicId(*id)),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for round in 0..5 {
        let mut input = preds.clone();
        if round > 0 {
            input.shuffle(&mut rng);
        }
        let (out, note) = decide_fitness(&input, 0.25, 0.0, 4.0, 1, true);
        check(note.is_none(), || format!("unexpected note {note:?}"))?;
        for p in &out {
            let want = cases.iter().find(|c| c.0 == p.heuristic_id.0).unwrap().2;
            check(p.decision == Some(want), || {
                format!("h{} decided {:?}, expected {want:?}", p.heuristic_id.0, p.decision)
            })?;
        }
    }
    Ok("12 cases match, order-independent over 5 permutations".into())
}

fn quota_schedule() -> Outcome {
    let got: Vec<usize> = (0..6).map(|t| acceptance_quota(t, 0.5, 0.8, 10)).collect();
    check(got == [5, 4, 3, 2, 2, 1], || format!("m_0..5 = {got:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let alpha = rng.gen_range(0.01..0.99);
        let beta = rng.gen_range(0.01..0.99);
        let n = rng.gen_range(1..50);
        let seq: Vec<usize> = (0..30).map(|t| acceptance_quota(t, alpha, beta, n)).collect();
        check(seq.windows(2).all(|w| w[1] <= w[0]), || format!("not monotone for {alpha} {beta} {n}: {seq:?}"))?;
    }
    Ok(format!("m_0..5 = {got:?}; monotone over 1000 random (alpha, beta)"))
}

fn exemplar_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for case in 0..500 {
        let len = rng.gen_range(2..40);
        let history: Vec<Heuristic> = (0..len)
            .map(|i| {
                let h = evaluated(i as u64, 0.0);
                match rng.gen_range(0..10) {
                    0 => h.with_fitness(FitnessRecord::failed(0.0, 0)),
                    // Coarse values make duplicate fitness common.
                    _ => h.with_fitness(FitnessRecord::evaluated(rng.gen_range(0..12) as f64, 0.0, 0)),
                }
            })
            .collect();
        let population: Vec<Heuristic> = history.choose_multiple(&mut rng, len.min(10)).cloned().collect();
        let parents: Vec<&Heuristic> = population.choose_multiple(&mut rng, population.len().min(6)).collect();
        let n_e = rng.gen_range(2..8);
        let anchors: Vec<&Heuristic> = history.iter().filter(|h| h.is_anchor()).collect();
        let best = anchors.iter().map(|h| h.value()).fold(f64::INFINITY, f64::min);
        let worst = anchors.iter().map(|h| h.value()).fold(f64::NEG_INFINITY, f64::max);
        for mode in [ExemplarMode::Exemplar, ExemplarMode::ExemplarU] {
            let r = select_examples(&history, &parents, &population, n_e, mode, 1, &mut rng);
            if anchors.len() < 2 || best == worst {
                check(r.is_err(), || format!("case {case}: expected degenerate-history error"))?;
                continue;
            }
            let set = r.map_err(|e| format!("case {case}: {e}"))?;
            let values: Vec<f64> = set.members.iter().map(|m| m.fitness).collect();
            check(values.contains(&best) && values.contains(&worst), || {
                format!("case {case} {mode:?}: best {best} / worst {worst} missing from {values:?}")
            })?;
            check(set.members.len() <= n_e, || format!("case {case}: {} > N_e {n_e}", set.members.len()))?;
            check(values.iter().all(|v| *v != f64::MAX), || format!("case {case}: sentinel in examples"))?;
            if mode == ExemplarMode::Exemplar {
                let mut v = values.clone();
                v.sort_by(f64::total_cmp);
                v.dedup();
                check(v.len() == values.len(), || format!("case {case}: repeated fitness {values:?}"))?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} example sets over 500 histories"))
}

fn random_tsp(n: usize, rng: &mut ChaCha8Rng) -> TspInstance {
    TspInstance::from_coords((0..n).map(|_| [rng.gen(), rng.gen()]).collect())
}

fn solver_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut gap_sum = 0.0;
    for i in 0..30 {
        let t = random_tsp(12, &mut rng);
        let sub = Matrix::from_fn(8, 8, |a, b| t.distance.get(a, b));
        let hk8 = exact_tsp_oracle(&sub).unwrap();
        let bf8 = brute_force_tsp(&sub);
        check((hk8 - bf8).abs() <= 1e-9, || format!("instance {i}: Held-Karp {hk8} vs brute force {bf8}"))?;
        let opt = exact_tsp_oracle(&t.distance).unwrap();
        let gls = gls_tsp_solve(&t.distance, &t.distance, 200, 0.1);
        check(gls.length >= opt - 1e-9, || format!("instance {i}: GLS {} below optimum {opt}", gls.length))?;
        gap_sum += gls.length / opt - 1.0;
    }
    let gap = gap_sum / 30.0;
    check(gap <= 0.02, || format!("mean GLS gap {:.4}%", gap * 100.0))?;

    let reg = BuiltinRegistry::standard();
    let measure = |name: &str, task: TaskId, inst: &Instance| {
        let (n, p) = parse_directive(&format!("# builtin: {name}")).unwrap();
        reg.get(&n).unwrap().call(&heuristic_input(task, inst).unwrap(), &p).unwrap()
    };
    for i in 0..50 {
        let n = rng.gen_range(10..80);
        let inst = random_instance(TaskId::AcoBpp, n, &mut rng);
        let Instance::Bpp(b) = &inst else { unreachable!() };
        let HeuristicOutput::Matrix(m) = measure("complementarity_decay", TaskId::AcoBpp, &inst) else {
            unreachable!()
        };
        let s = aco_bpp_solve(b, &m, &AcoParams { seed: i, ..AcoParams::default() });
        check(s.is_feasible(b), || format!("BPP instance {i} infeasible"))?;
        let volume: u32 = b.demands.iter().sum();
        check(s.bins_used() >= volume.div_ceil(b.capacity) as usize, || format!("BPP instance {i} below volume bound"))?;
    }
    for i in 0..50 {
        let n = rng.gen_range(10..80);
        let inst = random_instance(TaskId::AcoMkp, n, &mut rng);
        let Instance::Mkp(k) = &inst else { unreachable!() };
        let HeuristicOutput::Vector(v) = measure("value_per_weight", TaskId::AcoMkp, &inst) else {
            unreachable!()
        };
        let s = aco_mkp_solve(k, &v, &AcoParams { seed: i, ..AcoParams::default() });
        check(s.is_feasible(k), || format!("MKP instance {i} infeasible"))?;
    }
    Ok(format!(
        "HK = brute force on 30 subsets; mean GLS gap {:.3}%; 50 BPP + 50 MKP feasible",
        gap * 100.0
    ))
}

fn e2e_config(ppp: bool) -> RunConfig {
    RunConfig {
        population_size: 15,
        max_evaluations: 40,
        ppp_enabled: ppp,
        rng_seed: 42,
        ..RunConfig::default()
    }
}

fn e2e_task(dir: &std::path::Path) -> heurgen::task::TaskSpec {
    small_task(TaskId::AcoBpp, dir, 80)
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let task = e2e_task(dir.path());
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let out = run_demo(&e2e_config(false), &task, &a).map_err(|e| e.to_string())?;
    run_demo(&e2e_config(false), &task, &b).map_err(|e| e.to_string())?;
    let (la, lb) = (masked_lines(&a).unwrap(), masked_lines(&b).unwrap());
    check(la == lb, || "masked journals differ".into())?;
    let events = read_journal(&a).unwrap().events;
    let bests: Vec<f64> = events
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::BestUpdated { heuristic } => Some(heuristic.value()),
            _ => None,
        })
        .collect();
    check(bests.windows(2).all(|w| w[1] <= w[0]), || format!("best-so-far not monotone: {bests:?}"))?;
    let evals = events.iter().filter(|e| e.payload.kind() == "evaluation_performed").count();
    check(evals <= 40, || format!("{evals} evaluations"))?;
    let s = out.summary.seed_train_raw;
    let self_gain = compute_gain(s, s, task.sense).map_err(|e| e.to_string())?;
    check(self_gain == 0.0, || format!("seed self-gain {self_gain}"))?;
    Ok(format!(
        "{} identical masked lines; {evals} evaluations; best {:.4} -> {:.4}",
        la.len(),
        bests.first().unwrap(),
        bests.last().unwrap()
    ))
}

/// Per-iteration (offspring, conventional evaluations) for iterations >= 1.
fn cohorts(events: &[JournalEvent]) -> BTreeMap<u32, (usize, usize)> {
    let mut out: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for e in events.iter().filter(|e| e.iteration > 0) {
        match &e.payload {
            EventPayload::OffspringCreated { heuristic: Some(_), dropped: None, .. } => out.entry(e.iteration).or_default().0 += 1,
            EventPayload::EvaluationPerformed { .. } => out.entry(e.iteration).or_default().1 += 1,
            _ => {}
        }
    }
    out.retain(|_, c| c.0 > 0);
    out
}

fn mean_ratio(c: &BTreeMap<u32, (usize, usize)>) -> f64 {
    c.values().map(|&(o, e)| e as f64 / o as f64).sum::<f64>() / c.len() as f64
}

fn ppp_resource_property() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let task = e2e_task(dir.path());
    let plain = dir.path().join("plain.jsonl");
    let ppp = dir.path().join("ppp.jsonl");
    run_demo(&e2e_config(false), &task, &plain).map_err(|e| e.to_string())?;
    run_demo(&e2e_config(true), &task, &ppp).map_err(|e| e.to_string())?;
    let plain_ev = read_journal(&plain).unwrap().events;
    let ppp_ev = read_journal(&ppp).unwrap().events;
    let predicted = ppp_ev.iter().filter(|e| e.payload.kind() == "fitness_decided").count();
    check(predicted > 0, || "prediction never ran".into())?;
    let (cp, cq) = (cohorts(&plain_ev), cohorts(&ppp_ev));
    check(!cp.is_empty() && !cq.is_empty(), || "no offspring cohorts".into())?;
    let (rp, rq) = (mean_ratio(&cp), mean_ratio(&cq));
    check(rq < rp, || format!("evaluations per offspring: with prediction {rq:.3}, without {rp:.3}"))?;
    for (t, &(o, e)) in &cq {
        let ran = ppp_ev
            .iter()
            .any(|x| x.iteration == *t && x.payload.kind() == "fitness_decided");
        check(!ran || e < o, || format!("iteration {t}: {e} evaluations for {o} offspring"))?;
    }
    Ok(format!(
        "evaluations per offspring {rq:.3} with prediction vs {rp:.3} without ({predicted} predicted cohorts)"
    ))
}

fn accuracy_fixture() -> Outcome {
    // delta = 0.1, lb = 10, ub = 20: tolerance 1.0, strict.
    let pairs = [
        (14.0, 14.5),   // 0.5    hit
        (14.0, 15.0),   // 1.0    miss (not strictly below)
        (10.0, 10.0),   // 0      hit
        (20.0, 19.01),  // 0.99   hit
        (12.0, 13.5),   // 1.5    miss
        (15.0, 14.2),   // 0.8    hit
        (11.0, 9.5),    // 1.5    miss
        (18.0, 18.999), // 0.999  hit
        (16.0, 17.0),   // 1.0    miss
        (13.0, 12.0001), // 0.9999 hit
    ];
    let hand_count = 6;
    let acc = prediction_accuracy(&pairs, 0.1, 10.0, 20.0).map_err(|e| e.to_string())?;
    check(acc == hand_count as f64 / 10.0, || format!("accuracy {acc}, hand count {hand_count}/10"))?;
    Ok(format!("{acc} = {hand_count}/10"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("rank selection probabilities", rank_selection, Duration::from_secs(5)),
        ("information gain bounds", information_gain_bounds, Duration::from_secs(5)),
        ("confidence stratification table", decision_table, Duration::MAX),
        ("acceptance quota schedule", quota_schedule, Duration::MAX),
        ("example selection properties", exemplar_properties, Duration::from_secs(10)),
        ("solver correctness", solver_correctness, Duration::from_secs(300)),
        ("end-to-end determinism", end_to_end_determinism, Duration::from_secs(120)),
        ("prediction saves evaluations", ppp_resource_property, Duration::MAX),
        ("prediction accuracy fixture", accuracy_fixture, Duration::MAX),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let started = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = started.elapsed();
        let result = match result {
            Ok(_) if elapsed > limit => Err(format!("took {elapsed:.1?}, limit {limit:.0?}")),
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
