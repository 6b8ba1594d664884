//! Core abstraction prompting: components of elite heuristics, search
//! directions built on them, the elite/parent schedule, and entropy
//! analytics over direction partitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristic::{Heuristic, HeuristicId};
use crate::llm::{format_fitness, Bindings, ExchangeUsage, Prompter};

pub const MAX_COMPONENTS: usize = 12;
const REASKS: usize = 2;
pub const FALLBACK_DIRECTION: &str = "improve upon the better parent";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentSource {
    Elite,
    Parent,
}

impl ComponentSource {
    fn label(self) -> &'static str {
        match self {
            ComponentSource::Elite => "elite",
            ComponentSource::Parent => "parent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreComponentSet {
    pub iteration: u32,
    pub source_kind: ComponentSource,
    pub components: Vec<String>,
    pub source_heuristic_ids: Vec<HeuristicId>,
    /// Components are first lines of the sources, not an LLM abstraction.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Crossover,
    Mutation,
}

impl OperatorKind {
    fn label(self) -> &'static str {
        match self {
            OperatorKind::Crossover => "crossover",
            OperatorKind::Mutation => "mutation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDirection {
    pub text: String,
    pub produced_for: OperatorKind,
    /// Iteration of the component set used; `None` without CAP.
    pub component_set_ref: Option<u32>,
    pub source_kind: Option<ComponentSource>,
    pub fallback: bool,
}

/// Elite iff `t <= lambda * T`.
pub fn component_source_for_iteration(t: u32, horizon: u32, lambda: f64) -> ComponentSource {
    if t as f64 <= lambda * horizon as f64 + 1e-9 {
        ComponentSource::Elite
    } else {
        ComponentSource::Parent
    }
}

fn strip_marker(line: &str) -> Option<&str> {
    let line = line.trim();
    if let Some(rest) = line.strip_prefix(['-', '*', '+', '•']) {
        return Some(rest.trim());
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(['.', ')', ':']) {
            return Some(rest.trim());
        }
    }
    None
}

/// Bulleted or numbered lines, markers removed; at most [`MAX_COMPONENTS`].
pub fn parse_components(response: &str) -> Vec<String> {
    response
        .lines()
        .filter_map(strip_marker)
        .map(|s| s.trim_matches(['*', '`']).trim().to_string())
        .filter(|s| !s.is_empty())
        .take(MAX_COMPONENTS)
        .collect()
}

fn first_line(source: &str) -> String {
    source
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or_default()
        .to_string()
}

pub fn format_heuristics(hs: &[&Heuristic]) -> String {
    hs.iter()
        .enumerate()
        .map(|(i, h)| {
            format!(
                "[Heuristic {}] (fitness {})\n```python\n{}\n```",
                i + 1,
                format_fitness(h.value()),
                h.source
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One zero-shot abstraction call, re-asked up to twice on an empty parse.
pub fn abstract_core_components(
    prompter: &Prompter<'_>,
    elites: &[&Heuristic],
    source_kind: ComponentSource,
    iteration: u32,
    temperature: f64,
) -> Result<(CoreComponentSet, Vec<ExchangeUsage>)> {
    if elites.is_empty() {
        return Err(Error::Precondition("abstract_core_components: no elites".into()));
    }
    let ids = elites.iter().map(|h| h.id).collect();
    let mut exchanges = Vec::new();
    for _ in 0..=REASKS {
        let mut b = Bindings::new();
        b.insert("count", elites.len().to_string());
        b.insert("source_kind", source_kind.label().to_string());
        b.insert("heuristics", format_heuristics(elites));
        let ex = prompter.ask("cap_abstraction", b, temperature)?;
        exchanges.push(ExchangeUsage::from(&ex));
        let components = parse_components(&ex.response);
        if !components.is_empty() {
            return Ok((
                CoreComponentSet {
                    iteration,
                    source_kind,
                    components,
                    source_heuristic_ids: ids,
                    degraded: false,
                },
                exchanges,
            ));
        }
    }
    let mut components: Vec<String> = elites
        .iter()
        .map(|h| first_line(&h.source))
        .filter(|l| !l.is_empty())
        .collect();
    components.dedup();
    components.truncate(MAX_COMPONENTS);
    Ok((
        CoreComponentSet {
            iteration,
            source_kind,
            components,
            source_heuristic_ids: ids,
            degraded: true,
        },
        exchanges,
    ))
}

/// Relative-performance context for a direction prompt.
pub fn performance_context(operands: &[&Heuristic]) -> String {
    operands
        .iter()
        .map(|h| format!("- {} with fitness {}", h.id, format_fitness(h.value())))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One direction per offspring. Without components the reflection
/// template is used.
pub fn produce_search_direction(
    prompter: &Prompter<'_>,
    components: Option<&CoreComponentSet>,
    operator: OperatorKind,
    performance_context: &str,
    temperature: f64,
) -> Result<(SearchDirection, Vec<ExchangeUsage>)> {
    let mut exchanges = Vec::new();
    let (template, listed) = match components {
        Some(set) => (
            "cap_direction",
            set.components
                .iter()
                .map(|c| format!("- {c}"))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        None => ("reflection_direction", String::new()),
    };
    let mut text = None;
    for _ in 0..=REASKS {
        let mut b = Bindings::new();
        b.insert("operator", operator.label().to_string());
        b.insert("performance_context", performance_context.to_string());
        if components.is_some() {
            b.insert("components", listed.clone());
        }
        let ex = prompter.ask(template, b, temperature)?;
        exchanges.push(ExchangeUsage::from(&ex));
        let t = ex.response.trim();
        if !t.is_empty() {
            text = Some(t.to_string());
            break;
        }
    }
    let fallback = text.is_none();
    Ok((
        SearchDirection {
            text: text.unwrap_or_else(|| FALLBACK_DIRECTION.to_string()),
            produced_for: operator,
            component_set_ref: components.map(|c| c.iteration),
            source_kind: components.map(|c| c.source_kind),
            fallback,
        },
        exchanges,
    ))
}

const SUM_TOL: f64 = 1e-9;

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn shannon_entropy(probs: &[f64]) -> Result<f64> {
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidPartition(format!("probability {p} is not a finite non-negative value")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::NotNormalized(sum));
    }
    let sum_p_ln_p: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
    // Subtracting from zero keeps a degenerate partition at +0 rather than -0.
    Ok(0.0 - sum_p_ln_p)
}

/// Probabilities `p_0..p_k` of a direction landing in the unrelated set
/// (index 0) or in the region of component `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionPartition {
    pub k: usize,
    pub probabilities: Vec<f64>,
}

impl DirectionPartition {
    pub fn new(k: usize, probabilities: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPartition("k must be >= 1".into()));
        }
        if probabilities.len() != k + 1 {
            return Err(Error::InvalidPartition(format!(
                "k = {k} needs {} probabilities, got {}",
                k + 1,
                probabilities.len()
            )));
        }
        shannon_entropy(&probabilities)?;
        Ok(DirectionPartition { k, probabilities })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(k, vec![1.0 / (k as f64 + 1.0); k + 1])
    }

    pub fn max_gain(&self) -> f64 {
        (self.k as f64 + 1.0).ln()
    }
}

pub fn information_gain(partition: &DirectionPartition) -> Result<f64> {
    if partition.probabilities.len() != partition.k + 1 {
        return Err(Error::InvalidPartition("length does not match k".into()));
    }
    let ig = shannon_entropy(&partition.probabilities)?;
    if !(0.0..=partition.max_gain() + 1e-12).contains(&ig) {
        return Err(Error::InvalidPartition(format!(
            "gain {ig} outside [0, ln({})]",
            partition.k + 1
        )));
    }
    Ok(ig)
}

/// Reads `k p_0 .. p_k` per non-empty line; `#` starts a comment.
pub fn parse_partitions(text: &str) -> Result<Vec<DirectionPartition>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let bad = |what: &str| Error::InvalidPartition(format!("line {}: {what}", no + 1));
        let k: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("expected integer k"))?;
        let probs = toks
            .map(|t| t.parse::<f64>().map_err(|_| bad(&format!("bad probability `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(DirectionPartition::new(k, probs).map_err(|e| bad(&e.to_string()))?);
    }
    Ok(out)
}
