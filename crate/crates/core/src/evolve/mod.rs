//! Rank-based parent selection, crossover and elitist mutation operators,
//! (mu + lambda) population update, and the search loop.

mod search;

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cap::SearchDirection;
use crate::error::{Error, Result};
use crate::heuristic::{by_fitness_then_id, Heuristic, HeuristicId, Origin};
use crate::llm::{extract_code_block, format_fitness, Bindings, ExchangeUsage, Prompter};
use crate::worker::builtin::runtime_tag_for;

pub use search::{resume_search, run_search, SearchOutcome, SearchServices};

const CODE_REASKS: usize = 2;

/// Population members ordered by canonical fitness, then id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<Heuristic>,
    pub capacity: usize,
    pub iteration: u32,
}

impl Population {
    pub fn new(members: Vec<Heuristic>, capacity: usize, iteration: u32) -> Self {
        Population {
            members: update_population(&[], &members, capacity),
            capacity,
            iteration,
        }
    }

    /// Top-`k` members with conventionally evaluated, finite fitness.
    pub fn elites(&self, k: usize) -> Vec<&Heuristic> {
        self.members.iter().filter(|h| h.is_anchor()).take(k).collect()
    }
}

/// `p_i = (1/(rank_i + N)) / sum_j 1/(rank_j + N)`, rank 1 = best, ties
/// broken by lower id. Output follows rank order.
pub fn rank_selection_probabilities(population: &[Heuristic]) -> Result<Vec<(HeuristicId, f64)>> {
    if population.is_empty() {
        return Err(Error::Precondition("rank selection over an empty population".into()));
    }
    let n = population.len() as f64;
    let mut ranked: Vec<&Heuristic> = population.iter().collect();
    ranked.sort_by(|a, b| by_fitness_then_id(a, b));
    let weights: Vec<f64> = (1..=ranked.len()).map(|r| 1.0 / (r as f64 + n)).collect();
    let total: f64 = weights.iter().sum();
    Ok(ranked
        .iter()
        .zip(weights)
        .map(|(h, w)| (h.id, w / total))
        .collect())
}

fn selection_weights(population: &[Heuristic], rank_enabled: bool) -> Result<Vec<(HeuristicId, f64)>> {
    if rank_enabled {
        rank_selection_probabilities(population)
    } else if population.is_empty() {
        Err(Error::Precondition("selection over an empty population".into()))
    } else {
        let p = 1.0 / population.len() as f64;
        let mut ids: Vec<HeuristicId> = population.iter().map(|h| h.id).collect();
        ids.sort();
        Ok(ids.into_iter().map(|id| (id, p)).collect())
    }
}

/// `count` independent draws (with replacement).
pub fn sample_individuals(
    population: &[Heuristic],
    count: usize,
    rank_enabled: bool,
    rng: &mut impl Rng,
) -> Result<Vec<HeuristicId>> {
    let probs = selection_weights(population, rank_enabled)?;
    let dist = WeightedIndex::new(probs.iter().map(|p| p.1))
        .map_err(|e| Error::Precondition(format!("selection weights: {e}")))?;
    Ok((0..count).map(|_| probs[dist.sample(rng)].0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentSelection {
    pub probabilities: Vec<(HeuristicId, f64)>,
    pub pairs: Vec<(HeuristicId, HeuristicId)>,
    /// Single parents of pairs that could not be made distinct.
    pub degraded: Vec<HeuristicId>,
}

impl ParentSelection {
    /// Distinct parent ids in first-drawn order.
    pub fn parent_ids(&self) -> Vec<HeuristicId> {
        let mut seen = HashSet::new();
        self.pairs
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .chain(self.degraded.iter().copied())
            .filter(|id| seen.insert(*id))
            .collect()
    }
}

/// `pairs` parent pairs; the second parent is drawn from the same
/// distribution restricted to members other than the first.
pub fn sample_parents(
    population: &[Heuristic],
    pairs: usize,
    rank_enabled: bool,
    rng: &mut impl Rng,
) -> Result<ParentSelection> {
    let probabilities = selection_weights(population, rank_enabled)?;
    let dist = WeightedIndex::new(probabilities.iter().map(|p| p.1))
        .map_err(|e| Error::Precondition(format!("selection weights: {e}")))?;
    let mut out = ParentSelection {
        probabilities: probabilities.clone(),
        pairs: Vec::with_capacity(pairs),
        degraded: Vec::new(),
    };
    for _ in 0..pairs {
        let i = dist.sample(rng);
        if probabilities.len() < 2 {
            out.degraded.push(probabilities[i].0);
            continue;
        }
        let rest = WeightedIndex::new(
            probabilities
                .iter()
                .enumerate()
                .map(|(j, p)| if j == i { 0.0 } else { p.1 }),
        )
        .map_err(|e| Error::Precondition(format!("selection weights: {e}")))?;
        let j = rest.sample(rng);
        out.pairs.push((probabilities[i].0, probabilities[j].0));
    }
    Ok(out)
}

/// Union, literal-source dedupe (the earlier-evaluated copy wins), then
/// truncation to the `capacity` best.
pub fn update_population(members: &[Heuristic], offspring: &[Heuristic], capacity: usize) -> Vec<Heuristic> {
    let mut seen = HashSet::new();
    let mut all: Vec<Heuristic> = members
        .iter()
        .chain(offspring)
        .filter(|h| h.fitness.is_some() && seen.insert(h.source.as_str()))
        .cloned()
        .collect();
    all.sort_by(by_fitness_then_id);
    all.truncate(capacity);
    all
}

/// Identity of a new heuristic: id, iteration and the runtime assigned to
/// sources without a builtin directive.
#[derive(Debug, Clone, Copy)]
pub struct Birth<'a> {
    pub id: HeuristicId,
    pub iteration: u32,
    pub default_runtime: &'a str,
}

#[derive(Debug, Clone)]
pub struct Offspring {
    pub heuristic: Option<Heuristic>,
    pub exchanges: Vec<ExchangeUsage>,
}

fn derive(
    prompter: &Prompter<'_>,
    template: &str,
    bindings: Bindings<'_>,
    temperature: f64,
    birth: Birth<'_>,
    origin: Origin,
    parent_ids: Vec<HeuristicId>,
) -> Result<Offspring> {
    let mut exchanges = Vec::new();
    for _ in 0..=CODE_REASKS {
        let ex = prompter.ask(template, bindings.clone(), temperature)?;
        exchanges.push(ExchangeUsage::from(&ex));
        if let Some(code) = extract_code_block(&ex.response) {
            let tag = runtime_tag_for(&code, birth.default_runtime);
            let h = Heuristic::new(birth.id, code, tag, origin, parent_ids, birth.iteration)?;
            return Ok(Offspring {
                heuristic: Some(h),
                exchanges,
            });
        }
    }
    Ok(Offspring {
        heuristic: None,
        exchanges,
    })
}

/// The better parent is the primary exemplar of the prompt.
pub fn crossover_offspring(
    prompter: &Prompter<'_>,
    a: &Heuristic,
    b: &Heuristic,
    direction: &SearchDirection,
    temperature: f64,
    birth: Birth<'_>,
) -> Result<Offspring> {
    if a.id == b.id {
        return Err(Error::Precondition(format!("crossover of {} with itself", a.id)));
    }
    if a.fitness.is_none() || b.fitness.is_none() {
        return Err(Error::Precondition("crossover parents need fitness".into()));
    }
    let (better, worse) = if by_fitness_then_id(a, b).is_le() { (a, b) } else { (b, a) };
    let mut bind = Bindings::new();
    bind.insert("better_fitness", format_fitness(better.value()));
    bind.insert("better_source", better.source.clone());
    bind.insert("worse_fitness", format_fitness(worse.value()));
    bind.insert("worse_source", worse.source.clone());
    bind.insert("direction", direction.text.clone());
    derive(prompter, "crossover", bind, temperature, birth, Origin::Crossover, vec![better.id, worse.id])
}

pub fn elitist_mutation_offspring(
    prompter: &Prompter<'_>,
    best: &Heuristic,
    direction: &SearchDirection,
    temperature: f64,
    birth: Birth<'_>,
) -> Result<Offspring> {
    let mut bind = Bindings::new();
    bind.insert("best_fitness", format_fitness(best.value()));
    bind.insert("best_source", best.source.clone());
    bind.insert("direction", direction.text.clone());
    derive(prompter, "elitist_mutation", bind, temperature, birth, Origin::Mutation, vec![best.id])
}

pub fn init_offspring(prompter: &Prompter<'_>, seed: &Heuristic, temperature: f64, birth: Birth<'_>) -> Result<Offspring> {
    let mut bind = Bindings::new();
    bind.insert("seed_source", seed.source.clone());
    derive(prompter, "population_init", bind, temperature, birth, Origin::Init, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cap::OperatorKind;
    use crate::heuristic::FitnessRecord;
    use crate::llm::{LlmGateway, MockEntry, MockProvider, MockScript, TemplateStore};
    use crate::task::{TaskId, TaskSpec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn h(id: u64, f: f64) -> Heuristic {
        Heuristic::new(HeuristicId(id), format!("def heuristics(d):\n    return d * {id}"), "python", Origin::Init, vec![], 0)
            .unwrap()
            .with_fitness(FitnessRecord::evaluated(f, 0.0, 0))
    }

    #[test]
    fn three_member_probabilities() {
        let pop = vec![h(2, 9.0), h(1, 5.0), h(3, 12.0)];
        let p = rank_selection_probabilities(&pop).unwrap();
        let expected = [(1, 15.0 / 37.0), (2, 12.0 / 37.0), (3, 10.0 / 37.0)];
        for ((id, pr), (eid, ep)) in p.iter().zip(expected) {
            assert_eq!(id.0, eid);
            assert!((pr - ep).abs() < 1e-12);
        }
        assert_eq!(rank_selection_probabilities(&pop[..1]).unwrap()[0].1, 1.0);
        assert!(rank_selection_probabilities(&[]).is_err());
    }

    #[test]
    fn ties_rank_by_lower_id() {
        let p = rank_selection_probabilities(&[h(7, 1.0), h(4, 1.0)]).unwrap();
        assert_eq!(p[0].0, HeuristicId(4));
    }

    #[test]
    fn seeded_parent_sequence_repeats() {
        let pop: Vec<Heuristic> = (0..6).map(|i| h(i, i as f64)).collect();
        let a = sample_parents(&pop, 7, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_parents(&pop, 7, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.pairs.iter().all(|(x, y)| x != y));
    }

    #[test]
    fn single_member_pairs_degrade() {
        let s = sample_parents(&[h(0, 1.0)], 3, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(s.pairs.is_empty());
        assert_eq!(s.degraded, vec![HeuristicId(0); 3]);
    }

    #[test]
    fn update_truncates_and_dedupes() {
        let pop: Vec<Heuristic> = (0..3).map(|i| h(i, i as f64)).collect();
        let better = h(9, 0.5);
        let next = update_population(&pop, std::slice::from_ref(&better), 3);
        assert_eq!(next.iter().map(|x| x.id.0).collect::<Vec<_>>(), vec![0, 9, 1]);

        let mut copy = h(10, -5.0);
        copy.source = pop[1].source.clone();
        assert_eq!(update_population(&pop, &[copy], 3), pop);

        let failed = h(11, 0.0).with_fitness(FitnessRecord::failed(0.0, 1));
        assert_eq!(update_population(&pop, &[failed], 3), pop);
    }

    fn prompter_fixture(entries: Vec<MockEntry>) -> (LlmGateway, TemplateStore, TaskSpec) {
        (
            LlmGateway::new(Box::new(MockProvider::new(MockScript::new(entries)))),
            TemplateStore::default(),
            TaskSpec::new(TaskId::GlsTsp, h(0, 1.0), "a", "b"),
        )
    }

    fn direction(text: &str) -> SearchDirection {
        SearchDirection {
            text: text.into(),
            produced_for: OperatorKind::Crossover,
            component_set_ref: None,
            source_kind: None,
            fallback: false,
        }
    }

    #[test]
    fn crossover_marks_better_parent_primary() {
        let (gw, t, task) = prompter_fixture(vec![MockEntry::any("```python\ndef heuristics(d):\n    return d\n```")]);
        let p = Prompter::new(&gw, &t, &task);
        let a = h(1, 12.0);
        let b = h(2, 9.0);
        let birth = Birth { id: HeuristicId(5), iteration: 1, default_runtime: "python" };
        let o = crossover_offspring(&p, &a, &b, &direction("go"), 1.0, birth).unwrap();
        let child = o.heuristic.unwrap();
        assert_eq!(child.parent_ids, vec![HeuristicId(2), HeuristicId(1)]);
        assert!(crossover_offspring(&p, &a, &a, &direction("go"), 1.0, birth).is_err());
        // The prompt itself names the fitness-9 parent as primary exemplar.
        let messages = t
            .render("crossover", &{
                let mut b2 = p.task_bindings();
                b2.insert("better_fitness", format_fitness(9.0));
                b2.insert("better_source", b.source.clone());
                b2.insert("worse_fitness", format_fitness(12.0));
                b2.insert("worse_source", a.source.clone());
                b2.insert("direction", "go".into());
                b2
            })
            .unwrap();
        let user = &messages.last().unwrap().text;
        let primary = user.find("primary exemplar] (fitness 9.000000").unwrap();
        assert!(user[primary..].find(&b.source).unwrap() < user[primary..].find(&a.source).unwrap());
    }

    #[test]
    fn missing_code_block_drops_after_reasks() {
        let (gw, t, task) = prompter_fixture(vec![MockEntry::any("sorry, no code")]);
        let p = Prompter::new(&gw, &t, &task);
        let birth = Birth { id: HeuristicId(5), iteration: 1, default_runtime: "python" };
        let o = elitist_mutation_offspring(&p, &h(1, 3.0), &direction("d"), 1.0, birth).unwrap();
        assert!(o.heuristic.is_none());
        assert_eq!(o.exchanges.len(), 3);
    }

    #[test]
    fn builtin_directive_sets_runtime() {
        let (gw, t, task) = prompter_fixture(vec![MockEntry::any("```python\n# builtin: knn_badness k=3\n```")]);
        let p = Prompter::new(&gw, &t, &task);
        let birth = Birth { id: HeuristicId(5), iteration: 0, default_runtime: "python" };
        let o = init_offspring(&p, &h(0, 1.0), 1.3, birth).unwrap();
        assert_eq!(o.heuristic.unwrap().runtime_tag, "builtin:knn_badness");
    }

    proptest! {
        #[test]
        fn probabilities_normalized_and_shift_invariant(
            values in proptest::collection::vec(-1e3f64..1e3, 1..30),
            shift in -1e3f64..1e3,
        ) {
            let pop: Vec<Heuristic> = values.iter().enumerate().map(|(i, &v)| h(i as u64, v)).collect();
            let shifted: Vec<Heuristic> = values.iter().enumerate().map(|(i, &v)| h(i as u64, v + shift)).collect();
            let p = rank_selection_probabilities(&pop).unwrap();
            let q = rank_selection_probabilities(&shifted).unwrap();
            let sum: f64 = p.iter().map(|x| x.1).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.windows(2).all(|w| w[1].1 < w[0].1));
            // Shifting can merge near-equal values through rounding; compare
            // only when the ordering is preserved exactly.
            let order = |hs: &[Heuristic]| {
                let mut v: Vec<&Heuristic> = hs.iter().collect();
                v.sort_by(|a, b| by_fitness_then_id(a, b));
                v.iter().map(|h| h.id).collect::<Vec<_>>()
            };
            if order(&pop) == order(&shifted) {
                prop_assert_eq!(p, q);
            }
        }

        #[test]
        fn population_bounded_and_unique(
            a in proptest::collection::vec(0u8..20, 0..20),
            b in proptest::collection::vec(0u8..20, 0..20),
            cap in 1usize..15,
        ) {
            let mk = |i: usize, s: u8| {
                let mut x = h(i as u64, s as f64);
                x.source = format!("src {s}");
                x
            };
            let members: Vec<Heuristic> = a.iter().enumerate().map(|(i, &s)| mk(i, s)).collect();
            let off: Vec<Heuristic> = b.iter().enumerate().map(|(i, &s)| mk(100 + i, s)).collect();
            let next = update_population(&members, &off, cap);
            prop_assert!(next.len() <= cap);
            let mut srcs: Vec<&str> = next.iter().map(|h| h.source.as_str()).collect();
            srcs.sort();
            srcs.dedup();
            prop_assert_eq!(srcs.len(), next.len());
        }
    }
}
