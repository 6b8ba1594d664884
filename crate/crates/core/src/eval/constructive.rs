//! Constructive TSP: repeatedly move to the lowest-scored unvisited node.

use crate::worker::Matrix;

use super::gls::tour_length;

/// `scorer(current, candidates)` returns one score per candidate.
/// Ties go to the lower node index. Returns `(length, tour)`.
pub fn constructive_tsp_solve<E>(
    d: &Matrix,
    start: usize,
    mut scorer: impl FnMut(usize, &[usize]) -> Result<Vec<f64>, E>,
) -> Result<(f64, Vec<usize>), E> {
    let n = d.rows;
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    tour.push(cur);
    while tour.len() < n {
        let candidates: Vec<usize> = (0..n).filter(|&j| !visited[j]).collect();
        let scores = scorer(cur, &candidates)?;
        let (best, _) = candidates
            .iter()
            .zip(&scores)
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
            .expect("at least one candidate");
        cur = *best;
        visited[cur] = true;
        tour.push(cur);
    }
    Ok((tour_length(d, &tour), tour))
}
