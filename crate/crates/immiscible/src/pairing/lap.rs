//! Dense linear assignment via shortest augmenting paths with dual
//! potentials (Jonker–Volgenant family), O(n³) worst case.

use crate::error::{Error, Result};

/// Minimum-cost bijection for a square cost matrix given row-major as
/// `cost[i * n + j]`. Returns `perm` with row `i` assigned to column
/// `perm[i]`. Ties resolve toward the lowest column index.
pub fn solve(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidArgument("empty assignment instance".into()));
    }
    if cost.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "cost matrix: expected {} entries, got {}",
            n * n,
            cost.len()
        )));
    }
    if let Some(bad) = cost.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("assignment cost entry {bad}")));
    }

    // 1-based arrays; p[j] is the row matched to column j, column 0 virtual.
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
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

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    Ok(perm)
}

#[cfg(test)]
pub(crate) fn total_cost(cost: &[f64], n: usize, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum()
}

/// Exhaustive n!-permutation minimum; test oracle only.
#[cfg(test)]
pub(crate) fn brute_force_min(cost: &[f64], n: usize) -> f64 {
    fn recurse(cost: &[f64], n: usize, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == n {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                recurse(cost, n, row + 1, used, acc + cost[row * n + j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    recurse(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    #[test]
    fn known_small_instance() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let perm = solve(&cost, 3).unwrap();
        assert_eq!(total_cost(&cost, 3, &perm), 5.0);
    }

    #[test]
    fn single_element() {
        assert_eq!(solve(&[7.0], 1).unwrap(), vec![0]);
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        assert!(matches!(solve(&[f64::NAN], 1), Err(Error::NonFinite(_))));
        assert!(solve(&[], 0).is_err());
        assert!(solve(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = RngState::new(314);
        for trial in 0..200 {
            let n = 1 + trial % 8;
            let mut cost = vec![0.0; n * n];
            for c in cost.iter_mut() {
                *c = rng.uniform() * 10.0 - 2.0;
            }
            let perm = solve(&cost, n).unwrap();
            let mut seen = vec![false; n];
            for &j in &perm {
                assert!(!seen[j], "not a bijection");
                seen[j] = true;
            }
            let got = total_cost(&cost, n, &perm);
            let want = brute_force_min(&cost, n);
            assert!(
                (got - want).abs() <= 1e-9 * (1.0 + want.abs()),
                "n={n} got {got} want {want}"
            );
        }
    }
}
