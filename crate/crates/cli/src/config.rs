//! The run file: `[run]`, `[task]`, `[provider]` and `[workers]` tables.
//! Relative paths resolve against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use heurgen::config::{validate_config, RunConfig};
use heurgen::eval::{generate_instances, Evaluator};
use heurgen::heuristic::{Heuristic, HeuristicId, Origin};
use heurgen::llm::{
    corpus, CacheMode, ChatProvider, LiveProvider, LiveSettings, LlmGateway, MockProvider, MockScript, ReplayCache,
    TemplateStore,
};
use heurgen::task::{SolverParams, TaskId, TaskSpec};
use heurgen::worker::builtin::{builtin_source, runtime_tag_for};
use heurgen::worker::{WorkerBridge, WorkerRegistration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
    Mock,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
            Mode::Mock => "mock",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunConfig,
    pub task: TaskSection,
    #[serde(default)]
    pub provider: ProviderSection,
    /// runtime tag -> command line
    #[serde(default)]
    pub workers: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub task_id: Option<TaskId>,
    pub train_instances: PathBuf,
    /// Test scoring is skipped when this directory does not exist.
    pub test_instances: PathBuf,
    /// Name of a builtin used as the seed heuristic.
    pub seed_builtin: Option<String>,
    /// File holding the seed heuristic source; wins over `seed_builtin`.
    pub seed_source: Option<PathBuf>,
    pub default_runtime: Option<String>,
    pub candidate_signature: Option<String>,
    #[serde(default)]
    pub solver: SolverParams,
    /// Generate missing instance directories before the run.
    pub generate: Option<GenerateSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub train: usize,
    #[serde(default)]
    pub test: usize,
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub mode: Option<Mode>,
    /// Mock script file, or `demo` for the builtin corpus of the task.
    pub script: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub live: Option<LiveSettings>,
}

/// A fully resolved run file.
pub struct Loaded {
    pub base: PathBuf,
    pub file: FileConfig,
}

pub fn default_seed_builtin(task: TaskId) -> &'static str {
    match task {
        TaskId::GlsTsp => "kgls_badness",
        TaskId::ConstructiveTsp => "nearest_neighbor",
        TaskId::AcoBpp => "uniform_promise",
        TaskId::AcoMkp => "value_per_weight",
    }
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = std::path::absolute(path)?
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Loaded { base, file })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn run_config(&self, seed: Option<u64>) -> Result<RunConfig> {
        let mut cfg = self.file.run.clone();
        if let Some(s) = seed {
            cfg.rng_seed = s;
        }
        Ok(validate_config(cfg)?)
    }

    pub fn task_spec(&self, task_override: Option<TaskId>) -> Result<TaskSpec> {
        let t = &self.file.task;
        let Some(task_id) = task_override.or(t.task_id) else {
            bail!("no task: set [task] task_id or pass --task");
        };
        let (source, tag_default) = match (&t.seed_source, &t.seed_builtin) {
            (Some(p), _) => {
                let p = self.resolve(p);
                let src = std::fs::read_to_string(&p).with_context(|| format!("reading seed {}", p.display()))?;
                (src, t.default_runtime.clone().unwrap_or_else(|| "python".into()))
            }
            (None, name) => {
                let name = name.as_deref().unwrap_or(default_seed_builtin(task_id));
                (builtin_source(name, &[], task_id), String::new())
            }
        };
        let tag = runtime_tag_for(&source, &tag_default);
        let seed = Heuristic::new(HeuristicId(0), source, tag, Origin::Seed, vec![], 0)?;
        let train = self.resolve(&t.train_instances);
        let test = self.resolve(&t.test_instances);
        let mut spec = TaskSpec::new(task_id, seed, train, test);
        spec.solver_params = t.solver.clone();
        if let Some(rt) = &t.default_runtime {
            spec.default_runtime = rt.clone();
        }
        if let Some(sig) = &t.candidate_signature {
            spec.candidate_signature = sig.clone();
        }
        Ok(spec)
    }

    /// Creates the configured instance directories that do not exist yet.
    pub fn ensure_instances(&self, task: &TaskSpec) -> Result<()> {
        let Some(g) = &self.file.task.generate else {
            return Ok(());
        };
        if !task.train_instances.exists() {
            generate_instances(task.task_id, g.train, g.size, g.seed, &task.train_instances)?;
        }
        if g.test > 0 && !task.test_instances.exists() {
            generate_instances(task.task_id, g.test, g.size, g.seed + 1, &task.test_instances)?;
        }
        if task.test_instances.is_dir() {
            task.check_disjoint()?;
        }
        Ok(())
    }

    pub fn mode(&self, flag: Option<Mode>) -> Mode {
        flag.or(self.file.provider.mode).unwrap_or(Mode::Mock)
    }

    pub fn cache_dir(&self) -> Result<PathBuf> {
        match &self.file.provider.cache_dir {
            Some(p) => Ok(self.resolve(p)),
            None => bail!("[provider] cache_dir is required for record and replay modes"),
        }
    }

    fn script(&self, task: TaskId) -> Result<MockScript> {
        match self.file.provider.script.as_deref() {
            None | Some("demo") => Ok(corpus::demo_script(task)),
            Some(p) => Ok(MockScript::load(&self.resolve(Path::new(p)))?),
        }
    }

    fn live(&self) -> Result<LiveProvider> {
        match &self.file.provider.live {
            Some(settings) => Ok(LiveProvider::new(settings.clone())),
            None => bail!("a live provider needs a [provider.live] table with base_url and model"),
        }
    }

    /// Record mode wraps the mock script when one is configured, else the live provider.
    pub fn provider(&self, mode: Mode, task: TaskId) -> Result<Box<dyn ChatProvider>> {
        Ok(match mode {
            Mode::Mock => Box::new(MockProvider::new(self.script(task)?)),
            Mode::Live => Box::new(self.live()?),
            Mode::Replay => Box::new(ReplayCache::new(self.cache_dir()?, CacheMode::Strict)?),
            Mode::Record => {
                let inner: Box<dyn ChatProvider> = if self.file.provider.script.is_some() {
                    Box::new(MockProvider::new(self.script(task)?))
                } else {
                    Box::new(self.live()?)
                };
                Box::new(ReplayCache::new(self.cache_dir()?, CacheMode::Record(inner))?)
            }
        })
    }

    pub fn templates(&self) -> Result<TemplateStore> {
        Ok(match &self.file.provider.templates {
            Some(dir) => TemplateStore::with_overrides(&self.resolve(dir))?,
            None => TemplateStore::default(),
        })
    }

    pub fn workers(&self) -> WorkerRegistration {
        WorkerRegistration {
            workers: self.file.workers.clone(),
        }
    }
}

/// Gateway, templates and evaluator for one task.
pub struct Services {
    pub gateway: LlmGateway,
    pub templates: TemplateStore,
    pub evaluator: Evaluator,
}

pub fn evaluator(workers: &WorkerRegistration, task: TaskId, params: &SolverParams) -> Result<Evaluator> {
    let bridge = if workers.workers.is_empty() {
        WorkerBridge::builtin_only()
    } else {
        WorkerBridge::new(workers, params.parallelism, params.memory_bytes)?
    };
    Ok(Evaluator::new(task, params.clone(), Arc::new(bridge))?)
}

pub fn services(
    provider: Box<dyn ChatProvider>,
    templates: TemplateStore,
    workers: &WorkerRegistration,
    task: &TaskSpec,
) -> Result<Services> {
    Ok(Services {
        gateway: LlmGateway::new(provider),
        templates,
        evaluator: evaluator(workers, task.task_id, &task.solver_params)?,
    })
}
