//! Natively implemented heuristics for trusted seeds and mock-run stand-ins.
//!
//! A source selects a builtin with a directive line, optionally followed by
//! numeric parameters:
//!
//! ```text
//! # builtin: complementarity_decay threshold=0.5
//! ```

use std::collections::BTreeMap;

use serde::Serialize;

use super::protocol::{HeuristicInput, HeuristicOutput, Matrix};
use crate::error::{Error, Result};
use crate::task::TaskId;

pub const BUILTIN_PREFIX: &str = "builtin:";
const DIRECTIVE: &str = "# builtin:";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params(BTreeMap<String, f64>);

impl Params {
    pub fn get(&self, key: &str, default: f64) -> f64 {
        self.0.get(key).copied().unwrap_or(default)
    }
}

/// Finds the first `# builtin: <name> [k=v ...]` line in a source.
pub fn parse_directive(source: &str) -> Option<(String, Params)> {
    let line = source
        .lines()
        .map(str::trim)
        .find_map(|l| l.strip_prefix(DIRECTIVE))?;
    let mut parts = line.split_whitespace();
    let name = parts.next()?.to_string();
    let params = parts
        .filter_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            Some((k.to_string(), v.parse().ok()?))
        })
        .collect();
    Some((name, Params(params)))
}

/// Runtime tag for a source: its builtin directive if present, else `default`.
pub fn runtime_tag_for(source: &str, default: &str) -> String {
    match parse_directive(source) {
        Some((name, _)) => format!("{BUILTIN_PREFIX}{name}"),
        None => default.to_string(),
    }
}

/// Source text for a builtin, in the form LLM-emitted candidates take.
pub fn builtin_source(name: &str, params: &[(&str, f64)], task: TaskId) -> String {
    let mut directive = format!("{DIRECTIVE} {name}");
    for (k, v) in params {
        directive.push_str(&format!(" {k}={v}"));
    }
    format!(
        "{directive}\ndef {}(*args):\n    ...  # native implementation `{name}`",
        task.entry_function()
    )
}

type BuiltinFn = fn(&HeuristicInput, &Params) -> std::result::Result<HeuristicOutput, String>;

#[derive(Clone)]
pub struct Builtin {
    pub name: &'static str,
    pub task: TaskId,
    pub description: &'static str,
    func: BuiltinFn,
}

impl Builtin {
    pub fn call(
        &self,
        input: &HeuristicInput,
        params: &Params,
    ) -> std::result::Result<HeuristicOutput, String> {
        if input.task_id() != self.task {
            return Err(format!(
                "builtin `{}` serves {}, not {}",
                self.name,
                self.task,
                input.task_id()
            ));
        }
        (self.func)(input, params)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BuiltinInfo {
    pub name: String,
    pub task_id: TaskId,
    pub description: String,
}

#[derive(Clone, Default)]
pub struct BuiltinRegistry {
    entries: BTreeMap<&'static str, Builtin>,
}

impl BuiltinRegistry {
    pub fn register(&mut self, builtin: Builtin) -> Result<()> {
        if self.entries.contains_key(builtin.name) {
            return Err(Error::DuplicateBuiltin(builtin.name.to_string()));
        }
        self.entries.insert(builtin.name, builtin);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Builtin> {
        self.entries.get(name)
    }

    pub fn list(&self) -> Vec<BuiltinInfo> {
        self.entries
            .values()
            .map(|b| BuiltinInfo {
                name: b.name.to_string(),
                task_id: b.task,
                description: b.description.to_string(),
            })
            .collect()
    }

    pub fn standard() -> Self {
        let mut reg = BuiltinRegistry::default();
        for b in standard_builtins() {
            reg.register(b).expect("standard builtin names are unique");
        }
        reg
    }
}

/// Sorted listing of the standard registry.
pub fn list_builtin_heuristics() -> Vec<BuiltinInfo> {
    BuiltinRegistry::standard().list()
}

fn builtin(name: &'static str, task: TaskId, description: &'static str, func: BuiltinFn) -> Builtin {
    Builtin {
        name,
        task,
        description,
        func,
    }
}

fn standard_builtins() -> Vec<Builtin> {
    vec![
        builtin(
            "kgls_badness",
            TaskId::GlsTsp,
            "distance-proportional edge badness",
            kgls_badness,
        ),
        builtin(
            "normalized_badness",
            TaskId::GlsTsp,
            "distance relative to the mean edge length, raised to `power`",
            normalized_badness,
        ),
        builtin(
            "relative_badness",
            TaskId::GlsTsp,
            "distance minus each node's nearest-neighbor distance, plus `floor` times the mean",
            relative_badness,
        ),
        builtin(
            "knn_badness",
            TaskId::GlsTsp,
            "distance inflated by `weight` for edges outside the `k` nearest neighbors",
            knn_badness,
        ),
        builtin(
            "nearest_neighbor",
            TaskId::ConstructiveTsp,
            "score = distance from the current node",
            nearest_neighbor,
        ),
        builtin(
            "constant_score",
            TaskId::ConstructiveTsp,
            "every candidate scores zero (visits nodes in index order)",
            constant_score,
        ),
        builtin(
            "lookahead",
            TaskId::ConstructiveTsp,
            "distance plus `weight` times the candidate's distance to its nearest other candidate",
            lookahead,
        ),
        builtin(
            "uniform_promise",
            TaskId::AcoBpp,
            "every item pair is equally promising",
            uniform_promise,
        ),
        builtin(
            "demand_ratio",
            TaskId::AcoBpp,
            "squared demand ratio of j times slack of i",
            demand_ratio,
        ),
        builtin(
            "complementarity_decay",
            TaskId::AcoBpp,
            "normalized demand product with exponentially decayed complementarity, sparsified below `threshold`",
            complementarity_decay,
        ),
        builtin(
            "fill_ratio",
            TaskId::AcoBpp,
            "joint fill of the bin by the pair raised to `power`; zero if the pair overflows",
            fill_ratio,
        ),
        builtin(
            "value_per_weight",
            TaskId::AcoMkp,
            "prize over total normalized weight",
            value_per_weight,
        ),
        builtin(
            "value_only",
            TaskId::AcoMkp,
            "prize alone",
            value_only,
        ),
        builtin(
            "value_per_max_weight",
            TaskId::AcoMkp,
            "prize over the largest normalized weight, raised to `power`",
            value_per_max_weight,
        ),
    ]
}

fn distance(input: &HeuristicInput) -> std::result::Result<&Matrix, String> {
    match input {
        HeuristicInput::GlsTsp { distance } | HeuristicInput::ConstructiveTsp { distance, .. } => {
            Ok(distance)
        }
        _ => Err("expected a distance matrix".into()),
    }
}

fn mean_off_diagonal(d: &Matrix) -> f64 {
    let n = d.rows;
    if n < 2 {
        return 1.0;
    }
    let total: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| d.get(i, j))
        .sum();
    let mean = total / (n * (n - 1)) as f64;
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}

fn kgls_badness(input: &HeuristicInput, _: &Params) -> std::result::Result<HeuristicOutput, String> {
    Ok(HeuristicOutput::Matrix(distance(input)?.clone()))
}

fn normalized_badness(input: &HeuristicInput, p: &Params) -> std::result::Result<HeuristicOutput, String> {
    let d = distance(input)?;
    let mean = mean_off_diagonal(d);
    let power = p.get("power", 1.0);
    Ok(HeuristicOutput::Matrix(Matrix::from_fn(d.rows, d.cols, |i, j| {
        (d.get(i, j) / mean).powf(power)
    })))
}

fn relative_badness(input: &HeuristicInput, p: &Params) -> std::result::Result<HeuristicOutput, String> {
    let d = distance(input)?;
    let n = d.rows;
    let mean = mean_off_diagonal(d);
    let floor = p.get("floor", 0.1) * mean;
    let nearest: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| d.get(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(HeuristicOutput::Matrix(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let base = nearest[i].min(nearest[j]);
            (d.get(i, j) - base).max(0.0) + floor
        }
    })))
}

fn knn_badness(input: &HeuristicInput, p: &Params) -> std::result::Result<HeuristicOutput, String> {
    let d = distance(input)?;
    let n = d.rows;
    let k = p.get("k", 5.0).max(1.0) as usize;
    let weight = p.get("weight", 1.0);
    let mut near = vec![vec![false; n]; n];
    for (i, row) in near.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)).then(a.cmp(&b)));
        for &j in order.iter().take(k) {
            row[j] = true;
        }
    }
    Ok(HeuristicOutput::Matrix(Matrix::from_fn(n, n, |i, j| {
        let outside = !(near[i][j] || near[j][i]);
        d.get(i, j) * if outside { 1.0 + weight } else { 1.0 }
    })))
}

fn query(input: &HeuristicInput) -> std::result::Result<(&Matrix, usize, &[usize]), String> {
    match input {
        HeuristicInput::ConstructiveTsp {
            distance,
            current,
            candidates,
            ..
        } => Ok((distance, *current, candidates)),
        _ => Err("expected a constructive query".into()),
    }
}

fn nearest_neighbor(input: &HeuristicInput, _: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (d, cur, cands) = query(input)?;
    Ok(HeuristicOutput::Scores(cands.iter().map(|&c| d.get(cur, c)).collect()))
}

fn constant_score(input: &HeuristicInput, _: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (_, _, cands) = query(input)?;
    Ok(HeuristicOutput::Scores(vec![0.0; cands.len()]))
}

fn lookahead(input: &HeuristicInput, p: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (d, cur, cands) = query(input)?;
    let weight = p.get("weight", 0.5);
    Ok(HeuristicOutput::Scores(
        cands
            .iter()
            .map(|&c| {
                let onward = cands
                    .iter()
                    .filter(|&&u| u != c)
                    .map(|&u| d.get(c, u))
                    .fold(f64::INFINITY, f64::min);
                let onward = if onward.is_finite() { onward } else { 0.0 };
                d.get(cur, c) + weight * onward
            })
            .collect(),
    ))
}

fn bpp(input: &HeuristicInput) -> std::result::Result<(&[f64], f64), String> {
    match input {
        HeuristicInput::AcoBpp { demand, capacity } => Ok((demand, *capacity)),
        _ => Err("expected a bin-packing payload".into()),
    }
}

fn uniform_promise(input: &HeuristicInput, _: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (demand, _) = bpp(input)?;
    let n = demand.len();
    Ok(HeuristicOutput::Matrix(Matrix::from_fn(n, n, |_, _| 1.0)))
}

fn demand_ratio(input: &HeuristicInput, _: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (demand, capacity) = bpp(input)?;
    let n = demand.len();
    let r: Vec<f64> = demand.iter().map(|d| d / capacity).collect();
    Ok(HeuristicOutput::Matrix(Matrix::from_fn(n, n, |i, j| {
        r[j].powi(2) * (1.0 - r[i])
    })))
}

fn complementarity_decay(input: &HeuristicInput, p: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (demand, capacity) = bpp(input)?;
    let n = demand.len();
    let threshold = p.get("threshold", 0.5);
    let max = demand.iter().copied().fold(f64::MIN, f64::max);
    if max <= 0.0 {
        return Err("demand.max() must be positive".into());
    }
    let norm: Vec<f64> = demand.iter().map(|d| d / max).collect();
    Ok(HeuristicOutput::Matrix(Matrix::from_fn(n, n, |i, j| {
        let complementarity = capacity - (demand[i] + demand[j]);
        let decayed = (-complementarity / capacity).exp();
        let h = norm[i] * norm[j] * decayed;
        if h < threshold {
            0.0
        } else {
            h
        }
    })))
}

fn fill_ratio(input: &HeuristicInput, p: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (demand, capacity) = bpp(input)?;
    let n = demand.len();
    let power = p.get("power", 2.0);
    Ok(HeuristicOutput::Matrix(Matrix::from_fn(n, n, |i, j| {
        let fill = (demand[i] + demand[j]) / capacity;
        if fill > 1.0 {
            0.0
        } else {
            fill.powf(power)
        }
    })))
}

fn mkp(input: &HeuristicInput) -> std::result::Result<(&[f64], &Matrix), String> {
    match input {
        HeuristicInput::AcoMkp { prize, weight } => Ok((prize, weight)),
        _ => Err("expected a knapsack payload".into()),
    }
}

fn value_per_weight(input: &HeuristicInput, _: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (prize, w) = mkp(input)?;
    Ok(HeuristicOutput::Vector(
        (0..prize.len())
            .map(|j| {
                let total: f64 = (0..w.rows).map(|i| w.get(i, j)).sum();
                prize[j] / (total + 1e-9)
            })
            .collect(),
    ))
}

fn value_only(input: &HeuristicInput, _: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (prize, _) = mkp(input)?;
    Ok(HeuristicOutput::Vector(prize.to_vec()))
}

fn value_per_max_weight(input: &HeuristicInput, p: &Params) -> std::result::Result<HeuristicOutput, String> {
    let (prize, w) = mkp(input)?;
    let power = p.get("power", 1.0);
    Ok(HeuristicOutput::Vector(
        (0..prize.len())
            .map(|j| {
                let max = (0..w.rows).map(|i| w.get(i, j)).fold(0.0, f64::max);
                (prize[j] / (max + 1e-9)).powf(power)
            })
            .collect(),
    ))
}
