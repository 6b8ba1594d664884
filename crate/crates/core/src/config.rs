//! Search hyperparameters.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExemplarMode {
    /// Boundary heuristics plus best distinct-fitness parents.
    Exemplar,
    /// As `Exemplar` but duplicate fitness values are allowed.
    ExemplarU,
    /// Uniform draws from the current population.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub population_size: usize,
    pub max_evaluations: usize,
    pub elite_k: usize,
    pub lambda_frac: f64,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_examples: usize,
    pub temperature: f64,
    pub init_temperature_boost: f64,
    pub ppp_enabled: bool,
    pub cap_enabled: bool,
    pub rank_selection_enabled: bool,
    pub cons_enabled: bool,
    pub exemplar_mode: ExemplarMode,
    pub rng_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            population_size: 15,
            max_evaluations: 100,
            elite_k: 5,
            lambda_frac: 0.7,
            crossover_rate: 1.0,
            mutation_rate: 0.5,
            delta: 0.1,
            alpha: 0.5,
            beta: 0.8,
            n_examples: 5,
            temperature: 1.0,
            init_temperature_boost: 0.3,
            ppp_enabled: false,
            cap_enabled: true,
            rank_selection_enabled: true,
            cons_enabled: true,
            exemplar_mode: ExemplarMode::Exemplar,
            rng_seed: 0,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Checks every range invariant and returns the config unchanged.
pub fn validate_config(cfg: RunConfig) -> Result<RunConfig> {
    if cfg.population_size < 2 {
        return Err(Error::Config(format!(
            "population_size must be >= 2, got {}",
            cfg.population_size
        )));
    }
    if cfg.max_evaluations < 1 {
        return Err(Error::Config("max_evaluations must be >= 1".into()));
    }
    if cfg.elite_k < 1 {
        return Err(Error::Config("elite_k must be >= 1".into()));
    }
    if cfg.elite_k > cfg.population_size {
        return Err(Error::Config(format!(
            "elite_k exceeds population_size ({} > {})",
            cfg.elite_k, cfg.population_size
        )));
    }
    unit("lambda_frac", cfg.lambda_frac)?;
    unit("crossover_rate", cfg.crossover_rate)?;
    unit("mutation_rate", cfg.mutation_rate)?;
    if !(0.0..=1.0 / 3.0).contains(&cfg.delta) {
        return Err(Error::Config(format!(
            "delta must lie in [0, 1/3], got {}",
            cfg.delta
        )));
    }
    open_unit("alpha", cfg.alpha)?;
    open_unit("beta", cfg.beta)?;
    if cfg.n_examples < 2 {
        return Err(Error::Config(format!(
            "n_examples must be >= 2, got {}",
            cfg.n_examples
        )));
    }
    if !cfg.temperature.is_finite() || !cfg.init_temperature_boost.is_finite() {
        return Err(Error::Config("temperature must be finite".into()));
    }
    Ok(cfg)
}

impl RunConfig {
    /// Parent pairs per iteration: `floor(N * crossover_rate / 2)`.
    pub fn crossover_pairs(&self) -> usize {
        (self.population_size as f64 * self.crossover_rate / 2.0).floor() as usize
    }

    /// Elitist-mutation derivations per iteration.
    pub fn mutation_count(&self) -> usize {
        (self.crossover_pairs() as f64 * self.mutation_rate).floor() as usize
    }

    pub fn offspring_per_iteration(&self) -> usize {
        self.crossover_pairs() + self.mutation_count()
    }

    /// Iteration horizon derived from the evaluation budget, fixed at start.
    pub fn iteration_horizon(&self) -> u32 {
        let per_iter = self.offspring_per_iteration();
        let remaining = self.max_evaluations.saturating_sub(self.population_size);
        if per_iter == 0 {
            return 0;
        }
        remaining.div_ceil(per_iter) as u32
    }

    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
