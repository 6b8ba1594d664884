//! The generational loop: initialization, per-iteration derivation,
//! optional prediction, evaluation, update and checkpointing.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    crossover_offspring, elitist_mutation_offspring, init_offspring, sample_parents, update_population, Birth,
};
use crate::cap::{
    abstract_core_components, component_source_for_iteration, performance_context, produce_search_direction,
    ComponentSource, CoreComponentSet, OperatorKind,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{Evaluator, InstanceSet, Split};
use crate::gain::compute_gain;
use crate::heuristic::{by_fitness_then_id, FitnessRecord, Heuristic, HeuristicId, Origin};
use crate::journal::{
    journal_replay, rewrite_journal, Checkpoint, EventPayload, JournalWriter, ReplayedRun, RunSummary,
};
use crate::llm::{usage_totals, ExchangeUsage, LlmGateway, Prompter, TemplateStore, UsageTotals};
use crate::ppp::{acceptance_quota, decide_fitness, predict_batch, select_examples};
use crate::task::TaskSpec;

/// Collaborators of a run. The evaluator must be built for the run's task.
pub struct SearchServices<'a> {
    pub gateway: &'a LlmGateway,
    pub templates: &'a TemplateStore,
    pub evaluator: &'a Evaluator,
    /// Recorded in `run_started`, e.g. `mock` or `live:gpt-4o-mini`.
    pub provider_label: String,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub summary: RunSummary,
    pub journal: PathBuf,
    /// The journal already held a finished run; nothing was executed.
    pub already_finished: bool,
}

enum Job {
    Crossover(HeuristicId, HeuristicId),
    Mutation(HeuristicId),
}

struct Run<'a> {
    cfg: RunConfig,
    task: TaskSpec,
    services: &'a SearchServices<'a>,
    writer: JournalWriter,
    usage: UsageTotals,
    train: InstanceSet,
    horizon: u32,
    population: Vec<Heuristic>,
    history: Vec<Heuristic>,
    best: Option<Heuristic>,
    evaluations_used: usize,
    next_id: u64,
    predictions_accepted: usize,
    iterations_completed: u32,
    checkpoint_digest: String,
}

/// Runs a fresh search, journaling to `journal` (overwritten).
pub fn run_search(cfg: &RunConfig, task: &TaskSpec, services: &SearchServices<'_>, journal: &Path) -> Result<SearchOutcome> {
    let cfg = crate::config::validate_config(cfg.clone())?;
    let train = InstanceSet::load(task.task_id, &task.train_instances)?;
    let mut run = Run::new(cfg, task.clone(), services, JournalWriter::create(journal)?, train);
    run.emit(
        0,
        EventPayload::RunStarted {
            config: run.cfg.clone(),
            config_digest: run.cfg.digest(),
            task: run.task.clone(),
            provider: services.provider_label.clone(),
            horizon: run.horizon,
        },
    )?;
    run.initialize()?;
    run.search()
}

/// Continues the run journaled at `journal` from its last checkpoint. Any
/// partial iteration after that checkpoint is discarded and redone.
pub fn resume_search(services: &SearchServices<'_>, journal: &Path) -> Result<SearchOutcome> {
    let replay = journal_replay(journal)?;
    if let Some(summary) = replay.summary {
        return Ok(SearchOutcome {
            summary,
            journal: journal.to_path_buf(),
            already_finished: true,
        });
    }
    rewrite_journal(journal, &replay.events)?;
    let writer = JournalWriter::append_to(journal, Some(replay.cursor.last_seq))?;
    let train = InstanceSet::load(replay.task.task_id, &replay.task.train_instances)?;
    let mut run = Run::new(replay.config.clone(), replay.task.clone(), services, writer, train);
    run.horizon = replay.horizon;
    run.usage = usage_totals(&replay.events);
    match replay.checkpoint.clone() {
        None => run.initialize()?,
        Some(c) => run.restore(&replay, c),
    }
    run.search()
}

fn iteration_rng(seed: u64, t: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

impl<'a> Run<'a> {
    fn new(cfg: RunConfig, task: TaskSpec, services: &'a SearchServices<'a>, writer: JournalWriter, train: InstanceSet) -> Self {
        let horizon = cfg.iteration_horizon();
        Run {
            cfg,
            task,
            services,
            writer,
            usage: UsageTotals::default(),
            train,
            horizon,
            population: Vec::new(),
            history: Vec::new(),
            best: None,
            evaluations_used: 0,
            next_id: 0,
            predictions_accepted: 0,
            iterations_completed: 0,
            checkpoint_digest: String::new(),
        }
    }

    fn restore(&mut self, replay: &ReplayedRun, c: Checkpoint) {
        self.population = c.population;
        self.best = Some(c.best);
        self.evaluations_used = c.evaluations_used;
        self.next_id = c.next_id;
        self.iterations_completed = c.iteration;
        self.checkpoint_digest = c.state_digest;
        self.history = replay.history.clone();
        self.predictions_accepted = replay
            .events
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::FitnessDecided { predictions, .. } => Some(
                    predictions
                        .iter()
                        .filter(|p| p.decision.is_some_and(|d| d.is_accepted()))
                        .count(),
                ),
                _ => None,
            })
            .sum();
    }

    fn prompter(&self) -> Prompter<'_> {
        Prompter::new(self.services.gateway, self.services.templates, &self.task)
    }

    fn emit(&mut self, iteration: u32, payload: EventPayload) -> Result<()> {
        for x in payload.exchanges() {
            self.usage.add(x);
        }
        self.writer.emit(iteration, payload)?;
        Ok(())
    }

    /// Journals a failed LLM interaction before propagating it.
    fn llm<T>(&mut self, iteration: u32, r: Result<T>) -> Result<T> {
        if let Err(e) = &r {
            self.emit(
                iteration,
                EventPayload::Error {
                    message: format!("aborting at iteration {iteration}: {e}"),
                    recoverable: true,
                },
            )?;
        }
        r
    }

    fn evaluate(&mut self, h: Heuristic, batch_index: usize, iteration: u32) -> Result<Heuristic> {
        let ev = self
            .services
            .evaluator
            .evaluate_heuristic(&h, &self.train, Split::Train, iteration);
        let h = h.with_fitness(ev.record);
        self.evaluations_used += 1;
        if let Some(reason) = &ev.failure {
            log::warn!("{} failed: {reason}", h.id);
        }
        self.emit(
            iteration,
            EventPayload::EvaluationPerformed {
                batch_index,
                heuristic: h.clone(),
                raw_objective: ev.raw_objective,
                failure: ev.failure,
                clamped: ev.clamped,
            },
        )?;
        self.history.push(h.clone());
        Ok(h)
    }

    fn take_id(&mut self) -> HeuristicId {
        let id = HeuristicId(self.next_id);
        self.next_id += 1;
        id
    }

    fn known_sources(&self) -> HashSet<String> {
        self.history
            .iter()
            .chain(&self.population)
            .map(|h| h.source.clone())
            .collect()
    }

    fn checkpoint(&mut self, iteration: u32) -> Result<()> {
        let c = Checkpoint::new(
            iteration,
            iteration + 1,
            self.evaluations_used,
            self.next_id,
            self.population.clone(),
            self.best.clone().expect("best set after initialization"),
            &self.history,
        );
        self.checkpoint_digest = c.state_digest.clone();
        self.iterations_completed = iteration;
        self.emit(iteration, EventPayload::PopulationUpdated { checkpoint: c })
    }

    /// Updates `x_best` from newly evaluated heuristics.
    fn offer_best(&mut self, candidates: &[Heuristic], iteration: u32) -> Result<()> {
        let incoming = candidates
            .iter()
            .filter(|h| h.is_anchor())
            .min_by(|a, b| by_fitness_then_id(a, b));
        let Some(c) = incoming else { return Ok(()) };
        if self.best.as_ref().is_none_or(|b| c.value() < b.value()) {
            self.best = Some(c.clone());
            self.emit(iteration, EventPayload::BestUpdated { heuristic: c.clone() })?;
        }
        Ok(())
    }

    fn initialize(&mut self) -> Result<()> {
        self.history.clear();
        self.population.clear();
        self.evaluations_used = 0;
        self.next_id = 0;
        let mut seed = self.task.seed.clone();
        seed.id = self.take_id();
        seed.origin = Origin::Seed;
        seed.parent_ids.clear();
        seed.iteration_born = 0;
        seed.fitness = None;
        let seed = self.evaluate(seed, 0, 0)?;
        if !seed.is_anchor() {
            let message = "seed heuristic failed on the training set".to_string();
            self.emit(
                0,
                EventPayload::Error {
                    message: message.clone(),
                    recoverable: false,
                },
            )?;
            return Err(Error::Aborted(message));
        }

        let slots = self.cfg.population_size.min(self.cfg.max_evaluations) - 1;
        let temperature = self.cfg.temperature + self.cfg.init_temperature_boost;
        let mut seen: HashSet<String> = HashSet::from([seed.source.clone()]);
        let mut exchanges: Vec<ExchangeUsage> = Vec::new();
        let mut created = Vec::new();
        let mut dropped = 0;
        for _ in 0..slots {
            let birth = Birth {
                id: HeuristicId(self.next_id),
                iteration: 0,
                default_runtime: &self.task.default_runtime,
            };
            let r = init_offspring(&self.prompter(), &seed, temperature, birth);
            let off = match r {
                Ok(o) => o,
                Err(e) => {
                    self.emit(
                        0,
                        EventPayload::PopulationInitialized {
                            population: vec![],
                            dropped,
                            exchanges: std::mem::take(&mut exchanges),
                        },
                    )?;
                    return self.llm(0, Err(e));
                }
            };
            exchanges.extend(off.exchanges);
            match off.heuristic {
                Some(h) if seen.insert(h.source.clone()) => {
                    self.next_id += 1;
                    created.push(h);
                }
                _ => dropped += 1,
            }
        }
        let mut members = vec![seed];
        for (i, h) in created.into_iter().enumerate() {
            members.push(self.evaluate(h, i + 1, 0)?);
        }
        self.population = update_population(&[], &members, self.cfg.population_size);
        self.emit(
            0,
            EventPayload::PopulationInitialized {
                population: self.population.iter().map(|h| h.id).collect(),
                dropped,
                exchanges,
            },
        )?;
        self.best = None;
        self.offer_best(&members, 0)?;
        self.checkpoint(0)
    }

    fn search(mut self) -> Result<SearchOutcome> {
        let mut t = self.iterations_completed + 1;
        while t <= self.horizon && self.evaluations_used < self.cfg.max_evaluations {
            self.iterate(t)?;
            t += 1;
        }
        self.finish()
    }

    fn member(&self, id: HeuristicId) -> Heuristic {
        self.population
            .iter()
            .find(|h| h.id == id)
            .cloned()
            .expect("selected parent is a population member")
    }

    fn iterate(&mut self, t: u32) -> Result<()> {
        let cfg = self.cfg.clone();
        let mut rng = iteration_rng(cfg.rng_seed, t);
        let selection = sample_parents(&self.population, cfg.crossover_pairs(), cfg.rank_selection_enabled, &mut rng)?;
        self.emit(
            t,
            EventPayload::ParentsSelected {
                probabilities: selection.probabilities.clone(),
                uniform: !cfg.rank_selection_enabled,
                pairs: selection.pairs.clone(),
                degraded: selection.degraded.len(),
            },
        )?;
        let parents: Vec<Heuristic> = selection.parent_ids().into_iter().map(|id| self.member(id)).collect();

        let components = if cfg.cap_enabled {
            Some(self.abstract_components(t, &parents)?)
        } else {
            None
        };

        let mut jobs: Vec<Job> = selection.pairs.iter().map(|&(a, b)| Job::Crossover(a, b)).collect();
        jobs.extend(selection.degraded.iter().map(|&id| Job::Mutation(id)));
        let best_id = self.best.as_ref().expect("best set").id;
        jobs.extend((0..cfg.mutation_count()).map(|_| Job::Mutation(best_id)));

        let mut known = self.known_sources();
        let mut offspring: Vec<(usize, Heuristic)> = Vec::new();
        for (batch_index, job) in jobs.iter().enumerate() {
            if let Some(h) = self.derive(t, batch_index, job, components.as_ref(), &mut known)? {
                offspring.push((batch_index, h));
            }
        }

        let mut accepted: Vec<Heuristic> = Vec::new();
        let mut pending: Vec<(usize, Heuristic)> = offspring.clone();
        if cfg.ppp_enabled && !offspring.is_empty() {
            pending = self.predict(t, &parents, offspring, &mut accepted, &mut rng)?;
        }

        let mut evaluated = Vec::new();
        for (batch_index, h) in pending {
            if self.evaluations_used >= cfg.max_evaluations {
                self.emit(
                    t,
                    EventPayload::Error {
                        message: format!("evaluation budget exhausted; {} discarded", h.id),
                        recoverable: true,
                    },
                )?;
                continue;
            }
            evaluated.push(self.evaluate(h, batch_index, t)?);
        }

        let incoming: Vec<Heuristic> = accepted.into_iter().chain(evaluated.iter().cloned()).collect();
        self.population = update_population(&self.population, &incoming, cfg.population_size);
        self.offer_best(&evaluated, t)?;
        self.checkpoint(t)
    }

    fn abstract_components(&mut self, t: u32, parents: &[Heuristic]) -> Result<CoreComponentSet> {
        let kind = component_source_for_iteration(t, self.horizon, self.cfg.lambda_frac);
        let mut elites: Vec<&Heuristic> = match kind {
            ComponentSource::Elite => self
                .population
                .iter()
                .filter(|h| h.is_anchor())
                .take(self.cfg.elite_k)
                .collect(),
            ComponentSource::Parent => parents.iter().collect(),
        };
        let best = self.best.clone().expect("best set");
        if elites.is_empty() {
            elites.push(&best);
        }
        let r = abstract_core_components(&self.prompter(), &elites, kind, t, self.cfg.temperature);
        let (set, exchanges) = self.llm(t, r)?;
        self.emit(
            t,
            EventPayload::ComponentsAbstracted {
                set: set.clone(),
                exchanges,
            },
        )?;
        Ok(set)
    }

    fn derive(
        &mut self,
        t: u32,
        batch_index: usize,
        job: &Job,
        components: Option<&CoreComponentSet>,
        known: &mut HashSet<String>,
    ) -> Result<Option<Heuristic>> {
        let temperature = self.cfg.temperature;
        let operands: Vec<Heuristic> = match *job {
            Job::Crossover(a, b) => vec![self.member(a), self.member(b)],
            Job::Mutation(id) => match self.best.as_ref().filter(|b| b.id == id) {
                Some(b) => vec![b.clone()],
                None => vec![self.member(id)],
            },
        };
        let refs: Vec<&Heuristic> = operands.iter().collect();
        let operator = match job {
            Job::Crossover(..) => OperatorKind::Crossover,
            Job::Mutation(_) => OperatorKind::Mutation,
        };
        let r = produce_search_direction(&self.prompter(), components, operator, &performance_context(&refs), temperature);
        let (direction, exchanges) = self.llm(t, r)?;
        self.emit(
            t,
            EventPayload::DirectionProduced {
                batch_index,
                direction: direction.clone(),
                exchanges,
            },
        )?;

        let birth = Birth {
            id: HeuristicId(self.next_id),
            iteration: t,
            default_runtime: &self.task.default_runtime,
        };
        let r = match job {
            Job::Crossover(..) => crossover_offspring(&self.prompter(), &operands[0], &operands[1], &direction, temperature, birth),
            Job::Mutation(_) => elitist_mutation_offspring(&self.prompter(), &operands[0], &direction, temperature, birth),
        };
        let off = self.llm(t, r)?;
        let (heuristic, dropped) = match off.heuristic {
            None => (None, Some("no code block in response".to_string())),
            Some(h) => {
                self.take_id();
                if known.insert(h.source.clone()) {
                    (Some(h), None)
                } else {
                    let reason = format!("{}: source duplicates an existing heuristic", h.id);
                    (Some(h), Some(reason))
                }
            }
        };
        self.emit(
            t,
            EventPayload::OffspringCreated {
                batch_index,
                heuristic: heuristic.clone(),
                dropped: dropped.clone(),
                exchanges: off.exchanges,
            },
        )?;
        Ok(if dropped.is_none() { heuristic } else { None })
    }

    /// Predicts the cohort; accepted offspring move to `accepted`, the
    /// rest are returned for conventional evaluation.
    fn predict(
        &mut self,
        t: u32,
        parents: &[Heuristic],
        offspring: Vec<(usize, Heuristic)>,
        accepted: &mut Vec<Heuristic>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(usize, Heuristic)>> {
        let parent_refs: Vec<&Heuristic> = parents.iter().collect();
        let examples = match select_examples(
            &self.history,
            &parent_refs,
            &self.population,
            self.cfg.n_examples,
            self.cfg.exemplar_mode,
            t,
            rng,
        ) {
            Ok(e) => e,
            Err(e) => {
                self.emit(
                    t,
                    EventPayload::Error {
                        message: format!("prediction skipped: {e}"),
                        recoverable: true,
                    },
                )?;
                return Ok(offspring);
            }
        };
        let pool: Vec<Heuristic> = self.history.iter().chain(&self.population).cloned().collect();
        let example_refs = examples.resolve(&pool);
        let targets: Vec<&Heuristic> = offspring.iter().map(|(_, h)| h).collect();
        let r = predict_batch(&self.prompter(), &targets, &example_refs, self.cfg.temperature);
        let batch = self.llm(t, r)?;
        let (lb, ub) = (examples.lb, examples.ub);
        self.emit(
            t,
            EventPayload::PredictionMade {
                examples,
                predictions: batch.predictions.clone(),
                warnings: batch.warnings,
                exchanges: batch.exchanges,
            },
        )?;
        // Quota decay counts search iterations from zero.
        let quota = acceptance_quota(t - 1, self.cfg.alpha, self.cfg.beta, offspring.len());
        let (decided, note) = decide_fitness(&batch.predictions, self.cfg.delta, lb, ub, quota, self.cfg.cons_enabled);
        self.emit(
            t,
            EventPayload::FitnessDecided {
                lb,
                ub,
                quota,
                predictions: decided.clone(),
                note,
            },
        )?;
        let mut rest = Vec::new();
        for ((batch_index, h), p) in offspring.into_iter().zip(decided) {
            if p.decision.is_some_and(|d| d.is_accepted()) {
                self.predictions_accepted += 1;
                accepted.push(h.with_fitness(FitnessRecord::predicted(p.xi, p.phi, t)));
            } else {
                rest.push((batch_index, h));
            }
        }
        Ok(rest)
    }

    fn finish(mut self) -> Result<SearchOutcome> {
        let sense = self.task.sense;
        let best = self.best.clone().expect("best set");
        let seed = self.history.first().cloned().expect("seed evaluated");
        let seed_train_raw = sense.raw(seed.value());
        let best_train_raw = sense.raw(best.value());

        let (seed_test_raw, best_test_raw) = match self.load_test_set() {
            Some(test) => {
                let evaluator = self.services.evaluator;
                let it = self.iterations_completed;
                let s = evaluator.evaluate_heuristic(&seed, &test, Split::Test, it).raw_objective;
                let b = if best.id == seed.id {
                    s
                } else {
                    evaluator.evaluate_heuristic(&best, &test, Split::Test, it).raw_objective
                };
                (s, b)
            }
            None => (None, None),
        };
        let gain = |s: Option<f64>, b: Option<f64>| compute_gain(s?, b?, sense).ok();
        let summary = RunSummary {
            best,
            seed_train_raw,
            best_train_raw,
            seed_test_raw,
            best_test_raw,
            train_gain: gain(Some(seed_train_raw), Some(best_train_raw)),
            test_gain: gain(seed_test_raw, best_test_raw),
            evaluations_used: self.evaluations_used,
            predictions_accepted: self.predictions_accepted,
            iterations_completed: self.iterations_completed,
            usage: self.usage,
            state_digest: self.checkpoint_digest.clone(),
        };
        self.emit(
            self.iterations_completed,
            EventPayload::RunFinished {
                summary: summary.clone(),
            },
        )?;
        Ok(SearchOutcome {
            summary,
            journal: self.writer.path().to_path_buf(),
            already_finished: false,
        })
    }

    fn load_test_set(&self) -> Option<InstanceSet> {
        let dir = &self.task.test_instances;
        if !dir.is_dir() {
            log::info!("no test instances at {}; skipping test scoring", dir.display());
            return None;
        }
        match InstanceSet::load(self.task.task_id, dir) {
            Ok(set) if !set.is_empty() => Some(set),
            Ok(_) => None,
            Err(e) => {
                log::warn!("test instances unusable: {e}");
                None
            }
        }
    }
}
