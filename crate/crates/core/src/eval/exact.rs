//! Exact TSP oracles for desk-scale verification.

use crate::error::{Error, Result};
use crate::worker::Matrix;

pub const ORACLE_LIMIT: usize = 15;

/// Held-Karp dynamic program; refuses `n > 15`.
pub fn exact_tsp_oracle(d: &Matrix) -> Result<f64> {
    let n = d.rows;
    if n > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge(n));
    }
    match n {
        0 | 1 => return Ok(0.0),
        2 => return Ok(d.get(0, 1) + d.get(1, 0)),
        _ => {}
    }
    // Node 0 is fixed as start; subsets range over nodes 1..n.
    let m = n - 1;
    let full = 1usize << m;
    let mut dp = vec![f64::INFINITY; full * m];
    for j in 0..m {
        dp[(1 << j) * m + j] = d.get(0, j + 1);
    }
    for mask in 1..full {
        for j in 0..m {
            let cur = dp[mask * m + j];
            if mask & (1 << j) == 0 || !cur.is_finite() {
                continue;
            }
            for k in 0..m {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let v = cur + d.get(j + 1, k + 1);
                if v < dp[next * m + k] {
                    dp[next * m + k] = v;
                }
            }
        }
    }
    Ok((0..m)
        .map(|j| dp[(full - 1) * m + j] + d.get(j + 1, 0))
        .fold(f64::INFINITY, f64::min))
}

/// Minimum over all tours starting at node 0; for cross-checking only.
pub fn brute_force_tsp(d: &Matrix) -> f64 {
    let n = d.rows;
    if n < 2 {
        return 0.0;
    }
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut rest, 0, &mut |p| {
        let mut len = d.get(0, p[0]) + d.get(p[p.len() - 1], 0);
        len += p.windows(2).map(|w| d.get(w[0], w[1])).sum::<f64>();
        best = best.min(len);
    });
    best
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::instances::TspInstance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_sizes() {
        assert_eq!(exact_tsp_oracle(&Matrix::zeros(1, 1)).unwrap(), 0.0);
        let sq = TspInstance::from_coords(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert!((exact_tsp_oracle(&sq.distance).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(exact_tsp_oracle(&Matrix::zeros(16, 16)), Err(Error::OracleTooLarge(16))));
    }

    #[test]
    fn matches_brute_force_at_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let t = TspInstance::from_coords((0..8).map(|_| [rng.gen(), rng.gen()]).collect());
            let hk = exact_tsp_oracle(&t.distance).unwrap();
            assert!((hk - brute_force_tsp(&t.distance)).abs() < 1e-9);
        }
    }
}
