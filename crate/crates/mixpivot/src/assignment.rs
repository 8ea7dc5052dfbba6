//! Minimum-cost one-to-one assignment on a square cost matrix.
//!
//! Sizes up to [`EXHAUSTIVE_MAX`] are solved by scanning permutations in
//! lexicographic order with strict improvement, so among equally cheap
//! assignments the lexicographically first one wins; larger instances
//! use the O(k^3) Hungarian algorithm with potentials, which is
//! deterministic but makes no promise about which optimum a tie
//! resolves to.

/// Largest size solved by exhaustive enumeration (6! = 720 candidates).
pub const EXHAUSTIVE_MAX: usize = 6;

/// Returns `result` with `result[row] = col` minimising the total cost
/// `sum(cost[row * k + result[row]])`. `cost` is row-major `k x k` and
/// must contain no NaN.
pub fn min_cost_assignment(cost: &[f64], k: usize) -> Vec<usize> {
    assert!(k >= 1, "assignment needs at least one row");
    assert_eq!(cost.len(), k * k, "cost matrix must be k x k");
    debug_assert!(cost.iter().all(|c| !c.is_nan()));
    if k <= EXHAUSTIVE_MAX {
        lexicographic_min(cost, k)
    } else {
        hungarian(cost, k)
    }
}

/// Maximising counterpart of [`min_cost_assignment`].
pub fn max_score_assignment(score: &[f64], k: usize) -> Vec<usize> {
    let negated: Vec<f64> = score.iter().map(|s| -s).collect();
    min_cost_assignment(&negated, k)
}

fn total(cost: &[f64], k: usize, perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(row, &col)| cost[row * k + col])
        .sum()
}

fn lexicographic_min(cost: &[f64], k: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = total(cost, k, &perm);
    while next_permutation(&mut perm) {
        let c = total(cost, k, &perm);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
    }
    best
}

/// Advances to the next permutation in lexicographic order; false once
/// the sequence wraps.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Hungarian algorithm with row/column potentials, 1-indexed internally.
fn hungarian(cost: &[f64], k: usize) -> Vec<usize> {
    let n = k;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched = vec![0usize; n + 1]; // matched[col] = row, 0 = free
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0usize; n];
    for j in 1..=n {
        result[matched[j] - 1] = j - 1;
    }
    result
}
