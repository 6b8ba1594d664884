use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// Maps a raw objective onto the canonical minimization scale.
    pub fn canonical(self, raw: f64) -> f64 {
        match self {
            Sense::Minimize => raw,
            Sense::Maximize => -raw,
        }
    }

    pub fn raw(self, canonical: f64) -> f64 {
        self.canonical(canonical)
    }
}

/// Relative improvement of `candidate_perf` over `seed_perf`; positive means better.
///
/// For a positive seed this is `1 - c/s` (minimize) or `c/s - 1` (maximize).
/// Dividing by `|s|` keeps the sign meaningful for negative seeds too.
pub fn compute_gain(seed_perf: f64, candidate_perf: f64, sense: Sense) -> Result<f64> {
    if seed_perf == 0.0 {
        return Err(Error::UndefinedGain);
    }
    let improvement = match sense {
        Sense::Minimize => seed_perf - candidate_perf,
        Sense::Maximize => candidate_perf - seed_perf,
    };
    Ok(improvement / seed_perf.abs())
}
