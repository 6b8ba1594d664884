//! Performance prediction prompting: example selection, batch prediction,
//! confidence stratification and the prediction accuracy measure.
//!
//! All fitness values here are on the canonical (minimization) scale.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExemplarMode;
use crate::error::{Error, Result};
use crate::heuristic::{by_fitness_then_id, Heuristic, HeuristicId};
use crate::llm::{format_fitness, Bindings, ExchangeUsage, Prompter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleMember {
    pub id: HeuristicId,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub iteration: u32,
    pub members: Vec<ExampleMember>,
    pub lb_heuristic: HeuristicId,
    pub ub_heuristic: HeuristicId,
    pub lb: f64,
    pub ub: f64,
}

impl ExampleSet {
    /// Member heuristics looked up in `pool`, in member order.
    pub fn resolve<'a>(&self, pool: &'a [Heuristic]) -> Vec<&'a Heuristic> {
        self.members
            .iter()
            .filter_map(|m| pool.iter().find(|h| h.id == m.id))
            .collect()
    }
}

/// `x_lb`: best finite evaluated heuristic. `x_ub`: worst among the rest.
/// Ties go to the lower id in both cases.
pub fn bounds(history: &[Heuristic]) -> Result<(&Heuristic, &Heuristic)> {
    let mut anchors: Vec<&Heuristic> = history.iter().filter(|h| h.is_anchor()).collect();
    if anchors.len() < 2 {
        return Err(Error::Precondition(format!(
            "prediction needs 2 finite evaluated heuristics, history has {}",
            anchors.len()
        )));
    }
    anchors.sort_by(|a, b| by_fitness_then_id(a, b));
    let lb = anchors[0];
    let ub = anchors[1..]
        .iter()
        .copied()
        .max_by(|a, b| a.value().total_cmp(&b.value()).then(b.id.cmp(&a.id)))
        .expect("at least one remaining anchor");
    Ok((lb, ub))
}

/// Example selection. `history` holds every evaluated heuristic,
/// `parents` the parents of this iteration and `population` the current
/// population (used by [`ExemplarMode::Random`]).
pub fn select_examples(
    history: &[Heuristic],
    parents: &[&Heuristic],
    population: &[Heuristic],
    n_examples: usize,
    mode: ExemplarMode,
    iteration: u32,
    rng: &mut impl Rng,
) -> Result<ExampleSet> {
    let (lb, ub) = bounds(history)?;
    if lb.value() == ub.value() {
        return Err(Error::Precondition(format!(
            "best and worst fitness coincide ({})",
            lb.value()
        )));
    }
    let member = |h: &Heuristic| ExampleMember {
        id: h.id,
        fitness: h.value(),
    };
    let members = match mode {
        ExemplarMode::Exemplar | ExemplarMode::ExemplarU => {
            let mut pool: Vec<&Heuristic> = parents
                .iter()
                .copied()
                .filter(|h| h.is_anchor() && h.id != lb.id && h.id != ub.id)
                .collect();
            pool.sort_by(|a, b| by_fitness_then_id(a, b));
            pool.dedup_by_key(|h| h.id);
            if mode == ExemplarMode::Exemplar {
                pool.retain(|h| h.value() != lb.value() && h.value() != ub.value());
                pool.dedup_by(|b, a| a.value() == b.value());
            }
            let mut m = vec![member(lb), member(ub)];
            m.extend(pool.into_iter().take(n_examples.saturating_sub(2)).map(member));
            m
        }
        ExemplarMode::Random => {
            let pool: Vec<&Heuristic> = population.iter().filter(|h| h.is_anchor()).collect();
            let n = n_examples.min(pool.len());
            let mut picked: Vec<usize> = sample(rng, pool.len(), n).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| member(pool[i])).collect()
        }
    };
    Ok(ExampleSet {
        iteration,
        members,
        lb_heuristic: lb.id,
        ub_heuristic: ub.id,
        lb: lb.value(),
        ub: ub.value(),
    })
}

/// `floor(alpha * beta^t * n_o)`; a 1e-9 guard absorbs representation error
/// at exact integers.
pub fn acceptance_quota(t: u32, alpha: f64, beta: f64, n_o: usize) -> usize {
    (alpha * beta.powi(t as i32) * n_o as f64 + 1e-9).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AcceptedBand1,
    AcceptedBand2,
    AcceptedBand3,
    /// Stratification disabled: accepted without a band.
    AcceptedUnstratified,
    Reevaluate,
}

impl Decision {
    pub fn is_accepted(self) -> bool {
        self != Decision::Reevaluate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub heuristic_id: HeuristicId,
    pub xi: f64,
    pub phi: f64,
    /// False when no score line was found for this target.
    pub parsed: bool,
    pub decision: Option<Decision>,
}

impl Prediction {
    pub fn new(heuristic_id: HeuristicId, xi: f64, phi: f64) -> Self {
        Prediction {
            heuristic_id,
            xi,
            phi,
            parsed: true,
            decision: None,
        }
    }

    pub fn unparsed(heuristic_id: HeuristicId) -> Self {
        Prediction {
            heuristic_id,
            xi: 0.0,
            phi: 0.0,
            parsed: false,
            decision: None,
        }
    }
}

fn number_after(line: &str, key: &str) -> Option<f64> {
    let start = line.find(key)? + key.len();
    let rest = &line[start..];
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(rest.len());
    rest[..end].parse().ok().filter(|x: &f64| x.is_finite())
}

fn index_of(line: &str) -> Option<usize> {
    let open = line.find('[')?;
    let close = line[open..].find(']')? + open;
    line[open + 1..close].trim().parse().ok()
}

/// Parsed `(xi, phi)` per target (1-based `[i]` markers; unmarked lines
/// are taken positionally), plus warnings.
pub fn parse_predictions(response: &str, n_targets: usize) -> (Vec<Option<(f64, f64)>>, Vec<String>) {
    let mut out = vec![None; n_targets];
    let mut warnings = Vec::new();
    let mut position = 0;
    for line in response.lines() {
        let (Some(xi), Some(phi)) = (number_after(line, "score="), number_after(line, "confidence=")) else {
            continue;
        };
        let idx = match index_of(line) {
            Some(i) if (1..=n_targets).contains(&i) => i - 1,
            Some(i) => {
                warnings.push(format!("prediction for unknown target [{i}] ignored"));
                continue;
            }
            None => position,
        };
        position = idx + 1;
        if idx >= n_targets || out[idx].is_some() {
            continue;
        }
        if !(0.0..=1.0).contains(&phi) {
            warnings.push(format!("confidence {phi} of target [{}] clamped", idx + 1));
        }
        out[idx] = Some((xi, phi.clamp(0.0, 1.0)));
    }
    (out, warnings)
}

fn format_examples(examples: &[&Heuristic]) -> String {
    examples
        .iter()
        .enumerate()
        .map(|(i, h)| {
            format!(
                "[Example {}] fitness {}\n```python\n{}\n```",
                i + 1,
                format_fitness(h.value()),
                h.source
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn format_targets(targets: &[&Heuristic]) -> String {
    targets
        .iter()
        .enumerate()
        .map(|(i, h)| format!("[{}]\n```python\n{}\n```", i + 1, h.source))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[derive(Debug, Clone)]
pub struct BatchPrediction {
    pub predictions: Vec<Prediction>,
    pub warnings: Vec<String>,
    pub exchanges: Vec<ExchangeUsage>,
}

/// One prompt for the whole batch; one re-ask if nothing parses, after
/// which every target gets `phi = 0`.
pub fn predict_batch(
    prompter: &Prompter<'_>,
    targets: &[&Heuristic],
    examples: &[&Heuristic],
    temperature: f64,
) -> Result<BatchPrediction> {
    let mut exchanges = Vec::new();
    let mut warnings = Vec::new();
    if targets.is_empty() {
        return Ok(BatchPrediction {
            predictions: Vec::new(),
            warnings,
            exchanges,
        });
    }
    let mut parsed = vec![None; targets.len()];
    for attempt in 0..2 {
        let mut b = Bindings::new();
        b.insert("examples", format_examples(examples));
        b.insert("n_targets", targets.len().to_string());
        b.insert("targets", format_targets(targets));
        let ex = prompter.ask("ppp_predict", b, temperature)?;
        exchanges.push(ExchangeUsage::from(&ex));
        let (p, w) = parse_predictions(&ex.response, targets.len());
        if p.iter().any(Option::is_some) {
            parsed = p;
            warnings.extend(w);
            break;
        }
        warnings.push(format!("prediction response {} unparsable", attempt + 1));
    }
    let predictions = targets
        .iter()
        .zip(parsed)
        .map(|(h, p)| match p {
            Some((xi, phi)) => Prediction::new(h.id, xi, phi),
            None => Prediction::unparsed(h.id),
        })
        .collect();
    Ok(BatchPrediction {
        predictions,
        warnings,
        exchanges,
    })
}

/// Confidence stratification. Returns the decided predictions (input
/// order) and a note when stratification could not run.
pub fn decide_fitness(
    preds: &[Prediction],
    delta: f64,
    lb: f64,
    ub: f64,
    quota: usize,
    cons_enabled: bool,
) -> (Vec<Prediction>, Option<String>) {
    let mut out = preds.to_vec();
    if !cons_enabled {
        for p in &mut out {
            p.decision = Some(if p.parsed {
                Decision::AcceptedUnstratified
            } else {
                Decision::Reevaluate
            });
        }
        return (out, None);
    }
    if lb.partial_cmp(&ub) != Some(std::cmp::Ordering::Less) {
        for p in &mut out {
            p.decision = Some(Decision::Reevaluate);
        }
        return (out, Some(format!("bounds lb = {lb}, ub = {ub} do not satisfy lb < ub; all predictions reevaluated")));
    }
    let t1 = 1.0 - delta;
    let t2 = 1.0 - 2.0 * delta;
    let t3 = 1.0 - 3.0 * delta;
    let threshold = lb + 3.0 * delta * (ub - lb);

    let mut band2: Vec<usize> = (0..out.len())
        .filter(|&i| out[i].parsed && out[i].phi >= t2 && out[i].phi < t1)
        .collect();
    band2.sort_by(|&a, &b| {
        out[b].phi
            .total_cmp(&out[a].phi)
            .then(out[a].heuristic_id.cmp(&out[b].heuristic_id))
    });
    let band2_accepted: Vec<usize> = band2.into_iter().take(quota).collect();

    for (i, p) in out.iter_mut().enumerate() {
        let d = if !p.parsed {
            Decision::Reevaluate
        } else if p.phi >= t1 {
            Decision::AcceptedBand1
        } else if p.phi >= t2 {
            if band2_accepted.contains(&i) {
                Decision::AcceptedBand2
            } else {
                Decision::Reevaluate
            }
        } else if p.phi >= t3 && p.xi > threshold {
            Decision::AcceptedBand3
        } else {
            Decision::Reevaluate
        };
        p.decision = Some(d);
    }
    (out, None)
}

/// Fraction of pairs with `|xi - true| < delta * (ub - lb)`.
pub fn prediction_accuracy(pairs: &[(f64, f64)], delta: f64, lb: f64, ub: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("prediction accuracy of an empty list".into()));
    }
    if lb.partial_cmp(&ub) != Some(std::cmp::Ordering::Less) {
        return Err(Error::UndefinedMetric(format!("bounds lb = {lb}, ub = {ub}")));
    }
    let tol = delta * (ub - lb);
    let hits = pairs.iter().filter(|(xi, t)| (xi - t).abs() < tol).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Pearson correlation; `None` for fewer than 2 pairs or zero variance.
pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
