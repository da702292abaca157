//! Balanced linear assignment with costs supplied by a closure.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `row_to_col[i]` is the column matched to row `i`.
    pub row_to_col: Vec<usize>,
    pub cost: f64,
    /// A certified lower bound on the optimal cost.
    pub lower_bound: f64,
    pub exact: bool,
}

impl Assignment {
    pub fn gap(&self) -> f64 {
        (self.cost - self.lower_bound).max(0.0)
    }
}

/// Exact minimum-cost perfect matching on an `m x m` cost matrix via
/// shortest augmenting paths with potentials, O(m^3).
pub fn solve_exact(m: usize, cost: impl Fn(usize, usize) -> f64) -> Assignment {
    if m == 0 {
        return Assignment { row_to_col: vec![], cost: 0.0, lower_bound: 0.0, exact: true };
    }
    // 1-based arrays with a virtual column 0
    let mut u = vec![0.0f64; m + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; m];
    for j in 1..=m {
        row_to_col[p[j] - 1] = j - 1;
    }
    let total: f64 = (0..m).map(|i| cost(i, row_to_col[i])).collect::<CompensatedSum>().value();
    let dual: f64 = u[1..].iter().chain(&v[1..]).copied().collect::<CompensatedSum>().value();
    Assignment { row_to_col, cost: total, lower_bound: dual.min(total), exact: true }
}

/// Greedy matching in random row order followed by randomized pairwise swap
/// refinement. The lower bound is the larger of the row-minimum and
/// column-minimum sums.
pub fn solve_heuristic(m: usize, cost: impl Fn(usize, usize) -> f64 + Sync, seed: u64, refine_rounds: usize) -> Assignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = (0..m).collect();
    rows.shuffle(&mut rng);
    let mut taken = vec![false; m];
    let mut row_to_col = vec![usize::MAX; m];
    for &i in &rows {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..m {
            if !taken[j] {
                let c = cost(i, j);
                if c < best.0 {
                    best = (c, j);
                }
            }
        }
        taken[best.1] = true;
        row_to_col[i] = best.1;
    }
    for _ in 0..refine_rounds {
        let mut improved = false;
        for i in 0..m {
            for _ in 0..32 {
                let k = rng.gen_range(0..m);
                if k == i {
                    continue;
                }
                let (a, b) = (row_to_col[i], row_to_col[k]);
                if cost(i, b) + cost(k, a) < cost(i, a) + cost(k, b) - 1e-15 {
                    row_to_col.swap(i, k);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let total: f64 = (0..m).map(|i| cost(i, row_to_col[i])).collect::<CompensatedSum>().value();
    let mut row_min = CompensatedSum::new();
    let mut col_min = vec![f64::INFINITY; m];
    for i in 0..m {
        let mut r = f64::INFINITY;
        for (j, cm) in col_min.iter_mut().enumerate() {
            let c = cost(i, j);
            r = r.min(c);
            *cm = cm.min(c);
        }
        row_min.add(r);
    }
    let col: f64 = col_min.into_iter().collect::<CompensatedSum>().value();
    Assignment { row_to_col, cost: total, lower_bound: row_min.value().max(col).min(total), exact: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(m: usize, c: &[Vec<f64>]) -> f64 {
        let mut perm: Vec<usize> = (0..m).collect();
        let mut best = f64::INFINITY;
        fn rec(k: usize, perm: &mut Vec<usize>, c: &[Vec<f64>], best: &mut f64) {
            if k == perm.len() {
                *best = best.min((0..perm.len()).map(|i| c[i][perm[i]]).sum());
                return;
            }
            for s in k..perm.len() {
                perm.swap(k, s);
                rec(k + 1, perm, c, best);
                perm.swap(k, s);
            }
        }
        rec(0, &mut perm, c, &mut best);
        best
    }

    #[test]
    fn exact_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in 1..=7 {
            for _ in 0..10 {
                let c: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
                let a = solve_exact(m, |i, j| c[i][j]);
                assert!((a.cost - brute(m, &c)).abs() < 1e-9);
                assert!((a.cost - a.lower_bound).abs() < 1e-9);
                let mut cols = a.row_to_col.clone();
                cols.sort();
                assert_eq!(cols, (0..m).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn transpose_has_equal_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = 40;
        let c: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| rng.gen()).collect()).collect();
        let a = solve_exact(m, |i, j| c[i][j]);
        let b = solve_exact(m, |i, j| c[j][i]);
        assert!((a.cost - b.cost).abs() < 1e-10);
    }

    #[test]
    fn heuristic_is_bracketed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 60;
        let pts: Vec<(f64, f64)> = (0..2 * m).map(|_| (rng.gen(), rng.gen())).collect();
        let cost = |i: usize, j: usize| {
            let (a, b) = (pts[i], pts[m + j]);
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        };
        let ex = solve_exact(m, cost);
        let h = solve_heuristic(m, cost, 5, 10);
        assert!(h.cost >= ex.cost - 1e-12);
        assert!(h.lower_bound <= ex.cost + 1e-12);
        assert!(!h.exact && h.gap() >= 0.0);
    }
}
