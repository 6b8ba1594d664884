//! Ant colony optimization for bin packing and multiple knapsack, driven by
//! an injected heuristic measure.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::instances::{BppInstance, MkpInstance};
use crate::worker::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcoParams {
    pub ants: usize,
    pub iterations: usize,
    pub rho: f64,
    pub q: f64,
    pub seed: u64,
}

impl Default for AcoParams {
    fn default() -> Self {
        AcoParams {
            ants: 20,
            iterations: 50,
            rho: 0.1,
            q: 1.0,
            seed: 0,
        }
    }
}

/// Index drawn with probability proportional to `weights`; uniform when the
/// weights sum to zero or are not finite.
fn roulette(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return rng.gen_range(0..weights.len());
    }
    let mut r = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return i;
        }
        r -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BppSolution {
    pub bins: Vec<Vec<usize>>,
}

impl BppSolution {
    pub fn bins_used(&self) -> usize {
        self.bins.len()
    }

    pub fn is_feasible(&self, inst: &BppInstance) -> bool {
        let mut seen = vec![false; inst.demands.len()];
        let loads_ok = self.bins.iter().all(|b| {
            !b.is_empty() && b.iter().map(|&i| inst.demands[i] as u64).sum::<u64>() <= inst.capacity as u64
        });
        let partition = self
            .bins
            .iter()
            .flatten()
            .all(|&i| !std::mem::replace(&mut seen[i], true));
        loads_ok && partition && seen.iter().all(|&s| s)
    }
}

fn construct_bpp(inst: &BppInstance, tau: &Matrix, eta: &Matrix, rng: &mut impl Rng) -> BppSolution {
    let n = inst.demands.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut bins = Vec::new();
    let mut bin: Vec<usize> = Vec::new();
    let mut load = 0u32;
    let mut sum_tau = vec![0.0; n];
    let mut sum_eta = vec![0.0; n];
    while !remaining.is_empty() {
        let feasible: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&j| inst.demands[j] + load <= inst.capacity)
            .collect();
        if feasible.is_empty() {
            bins.push(std::mem::take(&mut bin));
            load = 0;
            sum_tau.iter_mut().for_each(|x| *x = 0.0);
            sum_eta.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let k = bin.len() as f64;
        let weights: Vec<f64> = feasible
            .iter()
            .map(|&j| if bin.is_empty() { 1.0 } else { (sum_tau[j] / k) * (sum_eta[j] / k) })
            .collect();
        let item = feasible[roulette(rng, &weights)];
        bin.push(item);
        load += inst.demands[item];
        remaining.retain(|&j| j != item);
        for j in 0..n {
            sum_tau[j] += tau.get(item, j);
            sum_eta[j] += eta.get(item, j);
        }
    }
    if !bin.is_empty() {
        bins.push(bin);
    }
    BppSolution { bins }
}

/// Minimizes bins used. `measure` is the `n x n` pairwise promise matrix.
pub fn aco_bpp_solve(inst: &BppInstance, measure: &Matrix, params: &AcoParams) -> BppSolution {
    let n = inst.demands.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut tau = Matrix::from_fn(n, n, |_, _| 1.0);
    let mut best: Option<BppSolution> = None;
    for _ in 0..params.iterations {
        let mut iter_best: Option<BppSolution> = None;
        for _ in 0..params.ants {
            let s = construct_bpp(inst, &tau, measure, &mut rng);
            if iter_best.as_ref().is_none_or(|b| s.bins_used() < b.bins_used()) {
                iter_best = Some(s);
            }
        }
        let ib = iter_best.expect("at least one ant");
        tau.data.iter_mut().for_each(|t| *t *= 1.0 - params.rho);
        let deposit = params.q / ib.bins_used() as f64;
        for b in &ib.bins {
            for &i in b {
                for &j in b {
                    if i != j {
                        tau.set(i, j, tau.get(i, j) + deposit);
                    }
                }
            }
        }
        if best.as_ref().is_none_or(|b| ib.bins_used() < b.bins_used()) {
            best = Some(ib);
        }
    }
    best.unwrap_or_else(|| construct_bpp(inst, &tau, measure, &mut rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MkpSolution {
    pub items: Vec<usize>,
    pub value: f64,
}

impl MkpSolution {
    pub fn is_feasible(&self, inst: &MkpInstance) -> bool {
        (0..inst.m()).all(|i| {
            let used: f64 = self.items.iter().map(|&j| inst.weights.get(i, j)).sum();
            used <= inst.capacities[i] + 1e-9
        })
    }
}

fn construct_mkp(inst: &MkpInstance, tau: &[f64], eta: &[f64], rng: &mut impl Rng) -> MkpSolution {
    let n = inst.n();
    let m = inst.m();
    let mut left = inst.capacities.clone();
    let mut chosen = vec![false; n];
    let mut items = Vec::new();
    let mut value = 0.0;
    loop {
        let feasible: Vec<usize> = (0..n)
            .filter(|&j| !chosen[j] && (0..m).all(|i| inst.weights.get(i, j) <= left[i]))
            .collect();
        if feasible.is_empty() {
            break;
        }
        let weights: Vec<f64> = feasible.iter().map(|&j| tau[j] * eta[j]).collect();
        let j = feasible[roulette(rng, &weights)];
        chosen[j] = true;
        items.push(j);
        value += inst.values[j];
        for (i, l) in left.iter_mut().enumerate() {
            *l -= inst.weights.get(i, j);
        }
    }
    MkpSolution { items, value }
}

/// Maximizes total value. `measure` is the length-`n` desirability vector.
pub fn aco_mkp_solve(inst: &MkpInstance, measure: &[f64], params: &AcoParams) -> MkpSolution {
    let n = inst.n();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut tau = vec![1.0; n];
    let mut best: Option<MkpSolution> = None;
    for _ in 0..params.iterations {
        let mut iter_best: Option<MkpSolution> = None;
        for _ in 0..params.ants {
            let s = construct_mkp(inst, &tau, measure, &mut rng);
            if iter_best.as_ref().is_none_or(|b| s.value > b.value) {
                iter_best = Some(s);
            }
        }
        let ib = iter_best.expect("at least one ant");
        tau.iter_mut().for_each(|t| *t *= 1.0 - params.rho);
        for &j in &ib.items {
            tau[j] += params.q * ib.value;
        }
        if best.as_ref().is_none_or(|b| ib.value > b.value) {
            best = Some(ib);
        }
    }
    best.unwrap_or_else(|| construct_mkp(inst, &tau, measure, &mut rng))
}
