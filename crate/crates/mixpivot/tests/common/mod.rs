//! Independent reference implementations and random-instance generators
//! backing the acceptance suite. Everything here deliberately avoids the
//! library's own data structures and shortcuts: clustering recomputes
//! linkage distances from the raw matrix instead of Lance-Williams
//! updates, pivot search enumerates tuples with literal nested loops,
//! and partition search walks assignment vectors recursively.

use mixpivot::chain::{ChainBuilder, MixtureChain};
use mixpivot::partitioning::Partition;
use mixpivot::pivotal::MusParams;
use mixpivot::similarity::{Dissimilarity, SimilarityMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// One merge of the reference clustering: cluster ids joined and the
/// complete-linkage height, ids following the same convention as the
/// library (units are `1..=n`, the k-th merge creates `n + k`).
pub type RefMerge = (usize, usize, f64);

/// Complete-linkage agglomeration computed the slow way: every step
/// rescans all pairs of active clusters and takes the maximum of the
/// original pairwise dissimilarities across their members. Ties break
/// towards the smallest (low id, high id) pair.
pub fn naive_complete_linkage(dissim: &Dissimilarity) -> Vec<RefMerge> {
    let n = dissim.n();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i + 1, vec![i])).collect();
    let mut merges = Vec::new();
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for p in 0..clusters.len() {
            for q in (p + 1)..clusters.len() {
                let mut dist = f64::NEG_INFINITY;
                for &i in &clusters[p].1 {
                    for &j in &clusters[q].1 {
                        dist = dist.max(dissim.at(i, j));
                    }
                }
                let (lo, hi) = if clusters[p].0 < clusters[q].0 {
                    (clusters[p].0, clusters[q].0)
                } else {
                    (clusters[q].0, clusters[p].0)
                };
                let wins = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => {
                        dist < bd || (dist == bd && (lo, hi) < (blo, bhi))
                    }
                };
                if wins {
                    best = Some((dist, lo, hi, p, q));
                }
            }
        }
        let (height, lo, hi, p, q) = best.expect("two clusters remain");
        merges.push((lo, hi, height));
        let absorbed = clusters.remove(q).1;
        clusters[p].1.extend(absorbed);
        clusters[p].0 = n + step + 1;
    }
    merges
}

/// Identity-submatrix pivot search by literal tuple enumeration for two
/// or three groups. Candidate shortlists follow the algorithm's
/// definition (per group, the `m` members with the most cross-group
/// similarities at or below `eps`, high count first, then low unit
/// number); the counting itself uses explicit nested loops. Returns the
/// 1-based pivot units, or `None` when no fully separated tuple exists.
pub fn brute_force_mus(
    sim: &SimilarityMatrix,
    part: &Partition,
    params: MusParams,
) -> Option<Vec<usize>> {
    let n = part.len();
    let labels = part.labels();
    let groups = part.groups();
    assert!(
        (2..=3).contains(&groups),
        "the reference enumerator covers two and three groups"
    );

    let mut zero_count = vec![0usize; n];
    for u in 0..n {
        for j in 0..n {
            if labels[j] != labels[u] && sim.at(u, j) <= params.eps {
                zero_count[u] += 1;
            }
        }
    }
    let shortlist = |g: u32| -> Vec<usize> {
        let mut members = part.members(g);
        members.sort_by(|&a, &b| zero_count[b].cmp(&zero_count[a]).then(a.cmp(&b)));
        members.truncate(params.m);
        members
    };

    let mut counts = vec![0u64; n];
    let mut any = false;
    let sep = |a: usize, b: usize| sim.at(a, b) <= params.eps;
    if groups == 2 {
        for &u in &shortlist(1) {
            for &v in &shortlist(2) {
                if sep(u, v) {
                    any = true;
                    counts[u] += 1;
                    counts[v] += 1;
                }
            }
        }
    } else {
        for &u in &shortlist(1) {
            for &v in &shortlist(2) {
                for &w in &shortlist(3) {
                    if sep(u, v) && sep(u, w) && sep(v, w) {
                        any = true;
                        counts[u] += 1;
                        counts[v] += 1;
                        counts[w] += 1;
                    }
                }
            }
        }
    }
    if !any {
        return None;
    }

    let mut units = Vec::with_capacity(groups);
    for g in 1..=groups as u32 {
        let mut cands = shortlist(g);
        cands.sort_unstable();
        let mut best = cands[0];
        for &u in &cands[1..] {
            if counts[u] > counts[best] {
                best = u;
            }
        }
        units.push(best + 1);
    }
    Some(units)
}

/// Every partition of `n` units into at most `max_groups` groups, as
/// first-appearance-canonical label vectors in lexicographic order.
pub fn all_partitions_up_to(n: usize, max_groups: usize) -> Vec<Vec<u32>> {
    fn extend(labels: &mut Vec<u32>, n: usize, max_groups: usize, out: &mut Vec<Vec<u32>>) {
        if labels.len() == n {
            out.push(labels.clone());
            return;
        }
        let used = labels.iter().copied().max().unwrap_or(0);
        for next in 1..=(used + 1).min(max_groups as u32) {
            labels.push(next);
            extend(labels, n, max_groups, out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(n), n, max_groups, &mut out);
    out
}

/// Expected Binder loss of a label vector against co-clustering
/// probabilities, written out from the definition.
pub fn binder_loss_ref(labels: &[u32], sim: &SimilarityMatrix) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for i in 0..n {
        for k in (i + 1)..n {
            let together = if labels[i] == labels[k] { 1.0 } else { 0.0 };
            total += (together - sim.at(i, k)).abs();
        }
    }
    total
}

/// A chain of `h` iterations over `n` units and `g` components with
/// uniformly random allocations, Gaussian means, random simplex weights
/// and, optionally, a one-column positive dispersion block.
pub fn random_chain(
    rng: &mut ChaCha8Rng,
    n: usize,
    g: usize,
    h: usize,
    d: usize,
    with_phi: bool,
) -> MixtureChain {
    let mut b = ChainBuilder::new(g, n, d);
    if with_phi {
        b = b.phi_width(1);
    }
    for _ in 0..h {
        let z: Vec<u32> = (0..n).map(|_| rng.random_range(1..=g as u32)).collect();
        let mu: Vec<f64> = (0..g * d)
            .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let pi: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let phi: Vec<f64> = (0..g).map(|_| rng.random_range(0.2..2.0)).collect();
        b.push_iteration(&z, &mu, &pi, with_phi.then_some(phi.as_slice()))
            .expect("generated iteration is well formed");
    }
    b.finish().expect("generated chain is well formed")
}

/// One uniformly random permutation of `1..=g` per iteration.
pub fn random_permutations(rng: &mut ChaCha8Rng, h: usize, g: usize) -> Vec<Vec<u32>> {
    (0..h)
        .map(|_| {
            let mut perm: Vec<u32> = (1..=g as u32).collect();
            for i in (1..g).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            perm
        })
        .collect()
}

/// Random symmetric dissimilarity with zero diagonal. When `coarse` is
/// set, values come from a five-point grid so exact ties are frequent.
pub fn random_dissimilarity(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> Dissimilarity {
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = if coarse {
                0.2 * rng.random_range(0..=5) as f64
            } else {
                rng.random::<f64>()
            };
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Dissimilarity::from_values(n, values).expect("generated matrix is valid")
}

/// Random similarity over a labelled partition: unit diagonal, free
/// within-group values, and cross-group values that are exactly zero
/// with probability one half. Returns the matrix and the labels.
pub fn random_blocked_similarity(
    rng: &mut ChaCha8Rng,
    n: usize,
    groups: usize,
) -> (SimilarityMatrix, Vec<u32>) {
    let mut labels: Vec<u32> = (0..n)
        .map(|i| {
            if i < groups {
                i as u32 + 1
            } else {
                rng.random_range(1..=groups as u32)
            }
        })
        .collect();
    labels.rotate_right(rng.random_range(0..n));
    // Rotation may break the all-groups-present guarantee only if n ==
    // groups, where it cannot.
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let v = if labels[i] == labels[j] {
                rng.random::<f64>()
            } else if rng.random::<f64>() < 0.5 {
                0.0
            } else {
                rng.random_range(0.05..0.9)
            };
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    let sim = SimilarityMatrix::from_values(n, values).expect("generated matrix is valid");
    (sim, labels)
}
