//! Linear sum assignment by the Hungarian method with row and column
//! potentials, `O(s^3)`.

use crate::error::{Error, Result};

/// Minimises `sum_i cost[i][perm[i]]` over permutations of `0..s`.
///
/// `cost` is row-major `s x s`. Returns the optimal permutation (row to
/// column) and its total cost.
pub fn assignment(cost: &[f64], s: usize) -> Result<(Vec<usize>, f64)> {
    if cost.len() != s * s {
        return Err(Error::InvalidArgument(format!(
            "cost matrix has {} entries, expected {s} x {s}",
            cost.len()
        )));
    }
    if let Some(v) = cost.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite cost {v}")));
    }
    if s == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // 1-based arrays; column 0 is a virtual column holding the row being added.
    let c = |i: usize, j: usize| cost[(i - 1) * s + (j - 1)];
    let mut u = vec![0.0; s + 1];
    let mut v = vec![0.0; s + 1];
    let mut owner = vec![0usize; s + 1];
    let mut way = vec![0usize; s + 1];
    for i in 1..=s {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; s + 1];
        let mut used = vec![false; s + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=s {
                if used[j] {
                    continue;
                }
                let cur = c(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=s {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; s];
    for j in 1..=s {
        perm[owner[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| cost[i * s + j]).sum();
    Ok((perm, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(cost: &[f64], s: usize) -> f64 {
        fn rec(cost: &[f64], s: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == s {
                *best = best.min(acc);
                return;
            }
            for j in 0..s {
                if !used[j] {
                    used[j] = true;
                    rec(cost, s, row + 1, used, acc + cost[row * s + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, s, 0, &mut vec![false; s], 0.0, &mut best);
        best
    }

    #[test]
    fn identity_cost() {
        let cost = [0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let (p, t) = assignment(&cost, 3).unwrap();
        assert_eq!(p, vec![0, 1, 2]);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn anti_diagonal() {
        let cost = [5.0, 1.0, 1.0, 5.0];
        let (p, t) = assignment(&cost, 2).unwrap();
        assert_eq!(p, vec![1, 0]);
        assert_eq!(t, 2.0);
    }

    #[test]
    fn matches_brute_force_on_small_matrices() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for s in 1..=5 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..s * s).map(|_| next()).collect();
                let (p, t) = assignment(&cost, s).unwrap();
                let mut seen = p.clone();
                seen.sort();
                assert_eq!(seen, (0..s).collect::<Vec<_>>());
                assert!((t - brute_force(&cost, s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(assignment(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(assignment(&[f64::NAN], 1).is_err());
        assert_eq!(assignment(&[], 0).unwrap().0, Vec::<usize>::new());
    }
}
