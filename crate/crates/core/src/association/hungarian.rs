use alloc::vec;
use alloc::vec::Vec;

/// Maximum-weight assignment on an `n x m` row-major matrix via shortest
/// augmenting paths with potentials, `O(min(n,m)^2 max(n,m))`. Returns
/// `min(n, m)` `(row, col)` pairs sorted by row. Rows are processed in order
/// and columns scanned left to right with strict improvement, so ties always
/// resolve the same way.
pub fn hungarian_max(weights: &[f64], n: usize, m: usize) -> Vec<(usize, usize)> {
    assert_eq!(weights.len(), n * m, "weights must be n*m");
    if n == 0 || m == 0 {
        return Vec::new();
    }
    if n > m {
        let mut t = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                t[j * n + i] = weights[i * m + j];
            }
        }
        let mut pairs: Vec<(usize, usize)> = solve(&t, m, n).into_iter().map(|(j, i)| (i, j)).collect();
        pairs.sort_unstable();
        return pairs;
    }
    solve(weights, n, m)
}

/// Minimum-cost assignment of negated weights; requires `n <= m`.
fn solve(w: &[f64], n: usize, m: usize) -> Vec<(usize, usize)> {
    let cost = |i: usize, j: usize| -w[i * m + j];
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
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
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| row_of[j] != 0)
        .map(|j| (row_of[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn total(w: &[f64], m: usize, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(i, j)| w[i * m + j]).sum()
    }

    /// All injections of the smaller side into the larger.
    fn brute(w: &[f64], n: usize, m: usize) -> f64 {
        fn rec(w: &[f64], n: usize, m: usize, i: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if i == n {
                *best = best.max(acc);
                return;
            }
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    rec(w, n, m, i + 1, used, acc + w[i * m + j], best);
                    used[j] = false;
                }
            }
        }
        let (w, n, m) = if n <= m {
            (w.to_vec(), n, m)
        } else {
            let mut t = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    t[j * n + i] = w[i * m + j];
                }
            }
            (t, m, n)
        };
        let mut best = f64::NEG_INFINITY;
        rec(&w, n, m, 0, &mut vec![false; m], 0.0, &mut best);
        best
    }

    #[test]
    fn two_by_two_fixture() {
        let w = [0.9, 0.1, 0.2, 0.8];
        let p = hungarian_max(&w, 2, 2);
        assert_eq!(p, [(0, 0), (1, 1)]);
        assert!((total(&w, 2, &p) - 1.7).abs() < 1e-15);
    }

    #[test]
    fn trivial_shapes() {
        assert_eq!(hungarian_max(&[0.3], 1, 1), [(0, 0)]);
        assert!(hungarian_max(&[], 0, 3).is_empty());
    }

    #[test]
    fn rectangular_matches_brute_force() {
        for seed in 0..100 {
            let mut rng = Rng::new(seed);
            for (n, m) in [(2, 3), (3, 2), (4, 4), (1, 5)] {
                let w: Vec<f64> = (0..n * m).map(|_| rng.next_f64()).collect();
                let p = hungarian_max(&w, n, m);
                assert_eq!(p.len(), n.min(m));
                assert!((total(&w, m, &p) - brute(&w, n, m)).abs() < 1e-12);
            }
        }
    }
}
