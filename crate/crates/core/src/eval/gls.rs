//! Guided local search for the TSP with an injected edge-badness matrix.

use crate::worker::Matrix;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GlsResult {
    pub length: f64,
    pub tour: Vec<usize>,
    /// Best true length after the first local optimum and after each round.
    pub trajectory: Vec<f64>,
}

pub fn tour_length(d: &Matrix, tour: &[usize]) -> f64 {
    let n = tour.len();
    if n < 2 {
        return 0.0;
    }
    (0..n).map(|i| d.get(tour[i], tour[(i + 1) % n])).sum()
}

pub fn is_hamiltonian(tour: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    tour.len() == n
        && tour.iter().all(|&v| v < n && !std::mem::replace(&mut seen[v], true))
}

pub fn nearest_neighbor_tour(d: &Matrix, start: usize) -> Vec<usize> {
    let n = d.rows;
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    tour.push(cur);
    for _ in 1..n {
        let next = (0..n)
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| d.get(cur, a).total_cmp(&d.get(cur, b)).then(a.cmp(&b)))
            .expect("unvisited node remains");
        visited[next] = true;
        tour.push(next);
        cur = next;
    }
    tour
}

fn two_opt_pass(c: &Matrix, tour: &mut [usize]) -> bool {
    let n = tour.len();
    let mut improved = false;
    for i in 0..n - 1 {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (a, b, x, y) = (tour[i], tour[i + 1], tour[j], tour[(j + 1) % n]);
            let delta = c.get(a, x) + c.get(b, y) - c.get(a, b) - c.get(x, y);
            if delta < -EPS {
                tour[i + 1..=j].reverse();
                improved = true;
            }
        }
    }
    improved
}

fn or_opt_pass(c: &Matrix, tour: &mut Vec<usize>) -> bool {
    let n = tour.len();
    let mut improved = false;
    let mut i = 0;
    while i < n {
        let p = tour[(i + n - 1) % n];
        let x = tour[i];
        let nx = tour[(i + 1) % n];
        let removal = c.get(p, x) + c.get(x, nx) - c.get(p, nx);
        let mut best: Option<(f64, usize)> = None;
        for k in 0..n {
            let a = tour[k];
            let b = tour[(k + 1) % n];
            if a == x || b == x {
                continue;
            }
            let insertion = c.get(a, x) + c.get(x, b) - c.get(a, b);
            if insertion - removal < -EPS {
                best = Some((insertion - removal, k));
                break;
            }
        }
        if let Some((_, k)) = best {
            let after = tour[k];
            tour.remove(i);
            let pos = tour.iter().position(|&v| v == after).expect("anchor node present");
            tour.insert(pos + 1, x);
            improved = true;
        }
        i += 1;
    }
    improved
}

/// First-improvement 2-opt and Or-opt(1) on cost matrix `c` until no move improves.
pub fn local_search(c: &Matrix, tour: &mut Vec<usize>) {
    if tour.len() < 4 {
        return;
    }
    loop {
        let a = two_opt_pass(c, tour);
        let b = or_opt_pass(c, tour);
        if !(a || b) {
            break;
        }
    }
}

/// Guided local search over `rounds` penalty rounds; `alpha` scales the
/// penalty weight relative to the first local optimum.
pub fn gls_tsp_solve(d: &Matrix, badness: &Matrix, rounds: usize, alpha: f64) -> GlsResult {
    let n = d.rows;
    if n < 4 {
        let tour: Vec<usize> = (0..n).collect();
        let length = tour_length(d, &tour);
        return GlsResult {
            length,
            tour,
            trajectory: vec![length],
        };
    }
    let mut tour = nearest_neighbor_tour(d, 0);
    local_search(d, &mut tour);
    let first = tour_length(d, &tour);
    let lambda = alpha * first / n as f64;
    let mut best_len = first;
    let mut best_tour = tour.clone();
    let mut trajectory = Vec::with_capacity(rounds + 1);
    trajectory.push(best_len);

    let mut penalty = vec![0u32; n * n];
    let mut aug = d.clone();
    for _ in 0..rounds {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (tour[i], tour[(i + 1) % n])).collect();
        let utility: Vec<f64> = edges
            .iter()
            .map(|&(a, b)| badness.get(a, b) / (1.0 + penalty[a * n + b] as f64))
            .collect();
        let max_u = utility.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (&(a, b), _) in edges.iter().zip(&utility).filter(|(_, &u)| u == max_u) {
            penalty[a * n + b] += 1;
            penalty[b * n + a] += 1;
            let v = d.get(a, b) + lambda * penalty[a * n + b] as f64;
            aug.set(a, b, v);
            aug.set(b, a, d.get(b, a) + lambda * penalty[b * n + a] as f64);
        }
        local_search(&aug, &mut tour);
        let len = tour_length(d, &tour);
        if len < best_len - EPS {
            best_len = len;
            best_tour = tour.clone();
        }
        trajectory.push(best_len);
    }
    GlsResult {
        length: best_len,
        tour: best_tour,
        trajectory,
    }
}
