//! Candidate heuristics and their fitness records.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitness assigned to candidates that crash, time out or emit invalid output.
pub const FAILURE_SENTINEL: f64 = f64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HeuristicId(pub u64);

impl fmt::Display for HeuristicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{:04}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Init,
    Crossover,
    Mutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessKind {
    Evaluated,
    Predicted,
}

/// Canonical (minimization) fitness value with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub value: f64,
    pub kind: FitnessKind,
    pub confidence: f64,
    pub eval_seconds: f64,
    pub iteration: u32,
}

impl FitnessRecord {
    pub fn evaluated(value: f64, eval_seconds: f64, iteration: u32) -> Self {
        FitnessRecord {
            value,
            kind: FitnessKind::Evaluated,
            confidence: 1.0,
            eval_seconds: eval_seconds.max(0.0),
            iteration,
        }
    }

    pub fn failed(eval_seconds: f64, iteration: u32) -> Self {
        Self::evaluated(FAILURE_SENTINEL, eval_seconds, iteration)
    }

    pub fn predicted(xi: f64, phi: f64, iteration: u32) -> Self {
        FitnessRecord {
            value: xi,
            kind: FitnessKind::Predicted,
            confidence: phi.clamp(0.0, 1.0),
            eval_seconds: 0.0,
            iteration,
        }
    }

    pub fn is_failure(&self) -> bool {
        self.value == FAILURE_SENTINEL
    }

    pub fn is_evaluated(&self) -> bool {
        self.kind == FitnessKind::Evaluated
    }

    /// Evaluated and not the failure sentinel.
    pub fn is_anchor(&self) -> bool {
        self.is_evaluated() && !self.is_failure() && self.value.is_finite()
    }
}

/// One candidate program of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heuristic {
    pub id: HeuristicId,
    pub source: String,
    pub runtime_tag: String,
    pub origin: Origin,
    pub parent_ids: Vec<HeuristicId>,
    pub iteration_born: u32,
    pub fitness: Option<FitnessRecord>,
}

impl Heuristic {
    pub fn new(
        id: HeuristicId,
        source: impl Into<String>,
        runtime_tag: impl Into<String>,
        origin: Origin,
        parent_ids: Vec<HeuristicId>,
        iteration_born: u32,
    ) -> Result<Self> {
        let h = Heuristic {
            id,
            source: source.into(),
            runtime_tag: runtime_tag.into(),
            origin,
            parent_ids,
            iteration_born,
            fitness: None,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source.trim().is_empty() {
            return Err(Error::Precondition(format!("{}: empty source", self.id)));
        }
        let ok = match self.origin {
            Origin::Seed | Origin::Init => self.parent_ids.is_empty(),
            Origin::Mutation => self.parent_ids.len() == 1,
            Origin::Crossover => {
                self.parent_ids.len() == 2 && self.parent_ids[0] != self.parent_ids[1]
            }
        };
        if !ok {
            return Err(Error::Precondition(format!(
                "{}: origin {:?} incompatible with parents {:?}",
                self.id, self.origin, self.parent_ids
            )));
        }
        Ok(())
    }

    pub fn with_fitness(mut self, fitness: FitnessRecord) -> Self {
        self.fitness = Some(fitness);
        self
    }

    /// Canonical fitness value, or the sentinel when unset.
    pub fn value(&self) -> f64 {
        self.fitness.as_ref().map_or(FAILURE_SENTINEL, |f| f.value)
    }

    pub fn is_anchor(&self) -> bool {
        self.fitness.as_ref().is_some_and(FitnessRecord::is_anchor)
    }
}

/// Orders by canonical fitness, then by id.
pub fn by_fitness_then_id(a: &Heuristic, b: &Heuristic) -> std::cmp::Ordering {
    a.value().total_cmp(&b.value()).then(a.id.cmp(&b.id))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_parent_arity() {
        let id = HeuristicId(1);
        assert!(Heuristic::new(id, "x", "builtin:a", Origin::Seed, vec![], 0).is_ok());
        assert!(Heuristic::new(id, "x", "t", Origin::Seed, vec![HeuristicId(0)], 0).is_err());
        assert!(Heuristic::new(id, "x", "t", Origin::Mutation, vec![HeuristicId(0)], 1).is_ok());
        assert!(Heuristic::new(id, "x", "t", Origin::Crossover, vec![HeuristicId(0)], 1).is_err());
        assert!(Heuristic::new(
            id,
            "x",
            "t",
            Origin::Crossover,
            vec![HeuristicId(0), HeuristicId(0)],
            1
        )
        .is_err());
        assert!(Heuristic::new(id, "  \n", "t", Origin::Init, vec![], 0).is_err());
    }

    #[test]
    fn sentinel_roundtrips_through_json() {
        let rec = FitnessRecord::failed(0.5, 3);
        let text = serde_json::to_string(&rec).unwrap();
        let back: FitnessRecord = serde_json::from_str(&text).unwrap();
        assert!(back.is_failure());
        assert!(!back.is_anchor());
    }

    #[test]
    fn evaluated_confidence_is_one() {
        assert_eq!(FitnessRecord::evaluated(3.0, 0.0, 0).confidence, 1.0);
        assert_eq!(FitnessRecord::predicted(3.0, 1.4, 0).confidence, 1.0);
    }
}
